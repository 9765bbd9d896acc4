#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fairload/dvae.hpp"
#include "fairload/metrics.hpp"
#include "fairload/types.hpp"

namespace fairload::harness {

struct Ratio {
    double male = 0.5;
    double female = 0.5;
};

struct ExperimentConfig {
    std::filesystem::path dataset_dir;
    std::vector<std::string> models = {"dvae", "plain_vae", "knn"};
    std::vector<Ratio> ratios = {
        {0.9, 0.1}, {0.7, 0.3}, {0.5, 0.5}, {0.3, 0.7}, {0.1, 0.9}};
    std::vector<uint64_t> seeds = {0};
    dvae::ModelConfig arch;                       // defaults for both VAE modes
    dvae::TrainConfig train;                      // base training config
    std::map<std::string, dvae::TrainConfig> train_overrides;  // per model
    int knn_k = 5;
    std::filesystem::path out_dir;
    int threads = 1;
    bool persist_models = true;
    bool quiet = false;

    void validate() const;
};

ExperimentConfig experiment_from_json_file(const std::filesystem::path& file);

struct FoldPlan {
    std::string held_out_subject;
    Sex held_out_sex = Sex::male;
    std::vector<std::string> training_subjects;
    int n_male = 0, n_female = 0;
    Ratio requested;
};

// One fold per subject (held out entirely). The training pool realizes the
// requested sex ratio: budget = min over sexes of floor(available/fraction),
// male count = round(male_fraction * budget) with rounding ties toward the
// larger fraction, female count = budget - male count; subjects drawn
// uniformly without replacement from the available pool, seeded. Folds whose
// pool cannot supply >= 1 subject of a required sex are skipped.
struct FoldPlanResult {
    std::vector<FoldPlan> plans;
    std::vector<std::string> skipped;  // held-out subjects without a valid plan
};

FoldPlanResult plan_folds(const Dataset& ds, const Ratio& ratio, uint64_t seed);

// Results CSV row; sp/prd/nrd are pooled over all folds of the same
// (model, ratio, seed) triple since each LOSOCV fold is single-sex.
struct ResultRow {
    std::string model;
    Ratio ratio;
    uint64_t seed = 0;
    std::string fold_subject;
    std::string test_sex;
    int n_trials = 0;
    double mae = 0.0;
    double sp = 0.0, prd = 0.0, nrd = 0.0;
    bool fairness_valid = false;
    std::string status = "ok";

    bool ok() const { return status == "ok"; }
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    int folds_failed = 0;
    int folds_run = 0;
    std::filesystem::path results_csv;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

void write_results_csv(const std::filesystem::path& file,
                       const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& file);

// Re-checks persisted fold plans for held-out-subject leakage; returns the
// number of violations found (0 = clean).
int audit_run(const std::filesystem::path& run_dir);

// Per (model, ratio): median/quartiles of MAE split by test sex plus pooled
// SP/PRD/NRD distributions. Writes summary.csv and plots/*.svg.
void summarize(const std::filesystem::path& results_csv,
               const std::filesystem::path& out_dir);

// Linear-interpolation quantile (as in spreadsheet PERCENTILE): for sorted x,
// q(p) = x[i] + frac * (x[i+1] - x[i]) with i = floor(p * (n-1)).
double quantile(std::vector<double> values, double p);

}  // namespace fairload::harness
