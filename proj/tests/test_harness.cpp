#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fairload/dataset_io.hpp"
#include "fairload/harness.hpp"
#include "fairload/signal.hpp"
#include "fairload/synthgait.hpp"

using namespace fairload;
using namespace fairload::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    fs::path p = fs::temp_directory_path() / "fairload_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Dataset subjects_dataset(int per_sex, uint64_t seed) {
    synthgait::GeneratorConfig cfg;
    cfg.n_subjects_male = per_sex;
    cfg.n_subjects_female = per_sex;
    cfg.weights_kg = {4.5, 13.6, 22.7};
    cfg.cycles_per_trial = 2;
    cfg.n_channels = 12;
    cfg.seed = seed;
    return synthgait::generate_processed(cfg).dataset;
}

ExperimentConfig knn_experiment(const fs::path& data_dir, const fs::path& out) {
    ExperimentConfig cfg;
    cfg.dataset_dir = data_dir;
    cfg.models = {"knn"};
    cfg.ratios = {{0.5, 0.5}};
    cfg.seeds = {7};
    cfg.knn_k = 3;
    cfg.out_dir = out;
    cfg.persist_models = false;
    cfg.quiet = true;
    return cfg;
}

}  // namespace

TEST_CASE("plan_folds realizes the rounding rule and is deterministic") {
    const Dataset ds = subjects_dataset(5, 1);

    const auto res = plan_folds(ds, {0.5, 0.5}, 42);
    CHECK(res.plans.size() == 10);
    CHECK(res.skipped.empty());
    for (const auto& p : res.plans) {
        // 9 remaining; budget = min(floor(4/.5), floor(5/.5)) or symmetric = 8
        CHECK(p.n_male + p.n_female == 8);
        CHECK(p.n_male == 4);
        CHECK(p.n_female == 4);
        for (const auto& s : p.training_subjects)
            CHECK(s != p.held_out_subject);
    }

    const auto res2 = plan_folds(ds, {0.5, 0.5}, 42);
    for (size_t i = 0; i < res.plans.size(); ++i)
        CHECK(res.plans[i].training_subjects == res2.plans[i].training_subjects);

    // 5 per sex cannot realize 0.9:0.1 with >= 1 female in any fold
    CHECK_THROWS_AS(plan_folds(ds, {0.9, 0.1}, 42), DataError);

    // 8 per sex can: hold-out male -> avail 7M/8F, budget 7, m = round(6.3) = 6
    const Dataset big = subjects_dataset(8, 3);
    const auto skewed = plan_folds(big, {0.9, 0.1}, 42);
    CHECK(skewed.plans.size() == 16);
    for (const auto& p : skewed.plans) {
        if (p.held_out_sex == Sex::male) {
            CHECK(p.n_male == 6);
            CHECK(p.n_female == 1);
        } else {
            CHECK(p.n_male == 7);
            CHECK(p.n_female == 1);
        }
    }
}

TEST_CASE("plan_folds requires two subjects per sex") {
    const Dataset ds = subjects_dataset(1, 2);
    CHECK_THROWS_AS(plan_folds(ds, {0.5, 0.5}, 0), DataError);
}

TEST_CASE("experiment config validation") {
    ExperimentConfig cfg;
    cfg.models = {"dvae"};
    cfg.ratios = {{1.0, 0.0}};
    CHECK_THROWS_AS(cfg.validate(), DataError);

    cfg.models = {"knn"};
    CHECK_NOTHROW(cfg.validate());

    cfg.ratios = {{0.6, 0.5}};
    CHECK_THROWS_AS(cfg.validate(), DataError);

    cfg.ratios = {{0.5, 0.5}};
    cfg.models = {"mystery"};
    CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("knn sweep: row counting, determinism, audit, low MAE on clean data") {
    synthgait::GeneratorConfig gen;
    gen.n_subjects_male = 3;
    gen.n_subjects_female = 3;
    gen.weights_kg = {4.5, 13.6, 22.7};
    gen.cycles_per_trial = 3;
    gen.n_channels = 12;
    gen.noise_std = 0.0;
    gen.subject_variability_std = 0.0;
    gen.sex_channel_offset = 0.0;
    gen.sex_cadence_delta_hz = 0.0;
    gen.weight_amplitude_gain = 0.03;
    gen.seed = 9;
    const Dataset ds = synthgait::generate_processed(gen).dataset;
    const fs::path data_dir = temp_dir("sweep_data");
    io::save_dataset(data_dir, ds);

    const fs::path out1 = temp_dir("sweep_run1");
    auto cfg = knn_experiment(data_dir, out1);
    const auto result = run_experiment(cfg);
    CHECK(result.folds_failed == 0);
    CHECK(result.rows.size() == 6);  // one model, one ratio, one seed, 6 folds
    for (const auto& row : result.rows) {
        CHECK(row.ok());
        CHECK(row.n_trials == 3);
        CHECK(row.mae < 1.0);  // separable weight-only data
        CHECK(row.fairness_valid);
    }
    CHECK(fs::exists(out1 / "results.csv"));
    CHECK(fs::exists(out1 / "summary.csv"));
    CHECK(fs::exists(out1 / "plots" / "mae.svg"));
    CHECK(audit_run(out1) == 0);

    // bit-identical rerun
    const fs::path out2 = temp_dir("sweep_run2");
    cfg.out_dir = out2;
    run_experiment(cfg);
    std::ifstream a(out1 / "results.csv"), b(out2 / "results.csv");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
}

TEST_CASE("seed isolation: adding a seed leaves existing rows unchanged") {
    const Dataset ds = subjects_dataset(3, 11);
    const fs::path data_dir = temp_dir("seed_iso_data");
    io::save_dataset(data_dir, ds);

    auto cfg1 = knn_experiment(data_dir, temp_dir("seed_iso_1"));
    cfg1.seeds = {5};
    const auto r1 = run_experiment(cfg1);

    auto cfg2 = knn_experiment(data_dir, temp_dir("seed_iso_2"));
    cfg2.seeds = {3, 5, 9};
    const auto r2 = run_experiment(cfg2);

    for (const auto& row1 : r1.rows) {
        bool found = false;
        for (const auto& row2 : r2.rows)
            if (row2.seed == row1.seed && row2.fold_subject == row1.fold_subject) {
                CHECK(row2.mae == row1.mae);
                CHECK(row2.sp == row1.sp);
                found = true;
            }
        CHECK(found);
    }
}

TEST_CASE("fold failures are isolated and recorded in the status column") {
    const Dataset ds = subjects_dataset(3, 13);
    const fs::path data_dir = temp_dir("fail_data");
    io::save_dataset(data_dir, ds);

    auto cfg = knn_experiment(data_dir, temp_dir("fail_run"));
    cfg.knn_k = 100000;  // k > N in every fold
    const auto result = run_experiment(cfg);
    CHECK(result.folds_failed == result.folds_run);
    for (const auto& row : result.rows) {
        CHECK(!row.ok());
        CHECK(row.status.find("error") == 0);
    }
    // and the CSV round-trips the failed rows
    const auto rows = read_results_csv(result.results_csv);
    CHECK(rows.size() == result.rows.size());
    CHECK(!rows.front().ok());
}

TEST_CASE("results CSV round-trip and parse errors carry line numbers") {
    const fs::path dir = temp_dir("csv");
    std::vector<ResultRow> rows(2);
    rows[0] = {"knn", {0.7, 0.3}, 5, "M01", "male", 3, 1.25, 0.5, 0.25, 0.125,
               true, "ok"};
    rows[1].model = "dvae";
    rows[1].ratio = {0.5, 0.5};
    rows[1].seed = 9;
    rows[1].fold_subject = "F02";
    rows[1].test_sex = "female";
    rows[1].status = "error: training diverged";
    write_results_csv(dir / "r.csv", rows);
    const auto back = read_results_csv(dir / "r.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].mae == 1.25);
    CHECK(back[0].sp == 0.5);
    CHECK(back[1].status == "error: training diverged");

    std::ofstream bad(dir / "bad.csv");
    bad << "model,ratio_m,ratio_f,seed,fold_subject,test_sex,n_trials,mae,sp,"
           "prd,nrd,status\n";
    bad << "knn,0.5,0.5,1,M01,male,3,oops,,,,ok\n";
    bad.close();
    try {
        read_results_csv(dir / "bad.csv");
        CHECK(false);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("quantile uses the linear interpolation definition") {
    CHECK(quantile({1.0}, 0.5) == 1.0);
    CHECK(quantile({1.0, 3.0}, 0.5) == 2.0);
    // sorting oracle on a random 30-element set
    rng::Stream rs{71};
    std::vector<double> v(30);
    for (auto& x : v) x = rs.uniform(-5, 5);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (double p : {0.25, 0.5, 0.75}) {
        const double pos = p * 29;
        const size_t i = static_cast<size_t>(pos);
        const double expect = sorted[i] + (pos - i) * (sorted[i + 1] - sorted[i]);
        CHECK(quantile(v, p) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("summarize aggregates medians by test sex") {
    const fs::path dir = temp_dir("summ");
    std::vector<ResultRow> rows;
    for (int i = 0; i < 4; ++i) {
        ResultRow r;
        r.model = "knn";
        r.ratio = {0.5, 0.5};
        r.seed = 1;
        r.fold_subject = "S" + std::to_string(i);
        r.test_sex = i % 2 ? "female" : "male";
        r.n_trials = 3;
        r.mae = i % 2 ? 3.0 : 1.0;
        r.sp = -0.5;
        r.prd = 0.25;
        r.nrd = 0.5;
        r.fairness_valid = true;
        rows.push_back(r);
    }
    rows[2].mae = 3.0;  // male values 1, 3 -> median 2
    write_results_csv(dir / "results.csv", rows);
    summarize(dir / "results.csv", dir);

    std::ifstream in(dir / "summary.csv");
    std::string line;
    std::getline(in, line);
    bool found_male_median = false;
    while (std::getline(in, line)) {
        if (line.find("male,mae") != std::string::npos &&
            line.find("female") == std::string::npos) {
            // schema: model,rm,rf,sex,metric,n,mean,min,q1,median,q3,max
            std::stringstream ss(line);
            std::string f;
            std::vector<std::string> fields;
            while (std::getline(ss, f, ',')) fields.push_back(f);
            CHECK(std::stod(fields[9]) == doctest::Approx(2.0));
            found_male_median = true;
        }
    }
    CHECK(found_male_median);
    CHECK(fs::exists(dir / "plots" / "sp.svg"));
}

TEST_CASE("parallel sweep produces bitwise-identical results") {
    const Dataset ds = subjects_dataset(3, 17);
    const fs::path data_dir = temp_dir("par_data");
    io::save_dataset(data_dir, ds);

    auto cfg1 = knn_experiment(data_dir, temp_dir("par_1"));
    const auto r1 = run_experiment(cfg1);
    auto cfg2 = knn_experiment(data_dir, temp_dir("par_2"));
    cfg2.threads = 4;
    const auto r2 = run_experiment(cfg2);

    std::ifstream a(r1.results_csv), b(r2.results_csv);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
}
