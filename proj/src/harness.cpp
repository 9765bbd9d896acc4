#include "fairload/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fairload/dataset_io.hpp"
#include "fairload/knn.hpp"
#include "fairload/rng.hpp"
#include "fairload/signal.hpp"

namespace fairload::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    require_data(!models.empty(), "experiment: need at least one model");
    require_data(!ratios.empty(), "experiment: need at least one ratio");
    require_data(!seeds.empty(), "experiment: need at least one seed");
    require_data(threads >= 1, "experiment: threads must be >= 1");
    require_data(knn_k >= 1, "experiment: knn_k must be >= 1");
    bool has_vae = false;
    for (const auto& m : models) {
        require_data(m == "dvae" || m == "plain_vae" || m == "knn",
                     "experiment: unknown model '" + m + "'");
        if (m == "dvae") has_vae = true;
    }
    for (const auto& r : ratios) {
        require_data(r.male >= 0 && r.male <= 1 && r.female >= 0 && r.female <= 1,
                     "experiment: ratio fractions must lie in [0, 1]");
        require_data(std::abs(r.male + r.female - 1.0) < 1e-9,
                     "experiment: ratio fractions must sum to 1");
        if (has_vae)
            require_data(r.male > 0 && r.female > 0,
                         "experiment: dvae mode needs both ratio fractions > 0");
    }
}

namespace {

void merge_arch(const json& j, dvae::ModelConfig& c) {
    if (j.contains("input_length")) c.input_length = j["input_length"].get<int>();
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<int>();
    if (j.contains("arch_scale")) c.arch_scale = j["arch_scale"].get<double>();
    if (j.contains("conv_kernel")) c.conv_kernel = j["conv_kernel"].get<int>();
    if (j.contains("conv_filters"))
        c.conv_filters = j["conv_filters"].get<std::array<int, 3>>();
    if (j.contains("fc_hidden1")) c.fc_hidden1 = j["fc_hidden1"].get<int>();
    if (j.contains("fc_hidden2")) c.fc_hidden2 = j["fc_hidden2"].get<int>();
    if (j.contains("head_hidden1")) c.head_hidden1 = j["head_hidden1"].get<int>();
    if (j.contains("head_hidden2")) c.head_hidden2 = j["head_hidden2"].get<int>();
    if (j.contains("dropout_rate")) c.dropout_rate = j["dropout_rate"].get<double>();
    if (j.contains("batchnorm")) c.batchnorm = j["batchnorm"].get<bool>();
    if (j.contains("logvar_clamp")) c.logvar_clamp = j["logvar_clamp"].get<double>();
    if (j.contains("decoder_variance"))
        c.decoder_variance = j["decoder_variance"].get<std::string>() ==
                                     "learned_scalar"
                                 ? dvae::DecoderVariance::learned_scalar
                                 : dvae::DecoderVariance::fixed_unit;
}

void merge_train(const json& j, dvae::TrainConfig& c) {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("mc_samples")) c.mc_samples = j["mc_samples"].get<int>();
    if (j.contains("target_standardization"))
        c.target_standardization = j["target_standardization"].get<bool>();
}

}  // namespace

ExperimentConfig experiment_from_json_file(const fs::path& file) {
    std::ifstream in(file);
    require_data(in.good(), "cannot open experiment config " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed experiment config: " + std::string(e.what()));
    }
    ExperimentConfig c;
    if (j.contains("dataset")) c.dataset_dir = j["dataset"].get<std::string>();
    if (j.contains("models")) c.models = j["models"].get<std::vector<std::string>>();
    if (j.contains("ratios")) {
        c.ratios.clear();
        for (const auto& r : j["ratios"]) {
            require_data(r.is_array() && r.size() == 2,
                         "experiment: each ratio must be [male, female]");
            c.ratios.push_back({r[0].get<double>(), r[1].get<double>()});
        }
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("arch")) merge_arch(j["arch"], c.arch);
    if (j.contains("train")) merge_train(j["train"], c.train);
    if (j.contains("train_overrides"))
        for (const auto& [name, over] : j["train_overrides"].items()) {
            dvae::TrainConfig tc = c.train;
            merge_train(over, tc);
            c.train_overrides[name] = tc;
        }
    if (j.contains("knn_k")) c.knn_k = j["knn_k"].get<int>();
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("persist_models")) c.persist_models = j["persist_models"].get<bool>();
    return c;
}

// ---------------------------------------------------------------------------
// Fold planning
// ---------------------------------------------------------------------------

FoldPlanResult plan_folds(const Dataset& ds, const Ratio& ratio, uint64_t seed) {
    int males = 0, females = 0;
    for (const auto& s : ds.subjects) (s.sex == Sex::male ? males : females)++;
    require_data(males >= 2 && females >= 2,
                 "plan_folds: need at least 2 subjects per sex");
    require_data(std::abs(ratio.male + ratio.female - 1.0) < 1e-9,
                 "plan_folds: ratio fractions must sum to 1");

    FoldPlanResult out;
    const rng::Stream root = rng::Stream(seed).child("plan");
    for (const auto& held : ds.subjects) {
        std::vector<std::string> pool_m, pool_f;
        for (const auto& s : ds.subjects) {
            if (s.id == held.id) continue;
            (s.sex == Sex::male ? pool_m : pool_f).push_back(s.id);
        }
        const int avail_m = static_cast<int>(pool_m.size());
        const int avail_f = static_cast<int>(pool_f.size());

        int budget = std::numeric_limits<int>::max();
        if (ratio.male > 0)
            budget = std::min(budget, static_cast<int>(avail_m / ratio.male));
        if (ratio.female > 0)
            budget = std::min(budget, static_cast<int>(avail_f / ratio.female));

        int n_m = 0;
        if (budget >= 1) {
            const double x = ratio.male * budget;
            const double frac = x - std::floor(x);
            if (std::abs(frac - 0.5) < 1e-9)
                // rounding tie: toward the larger fraction
                n_m = ratio.male >= ratio.female
                          ? static_cast<int>(std::ceil(x))
                          : static_cast<int>(std::floor(x));
            else
                n_m = static_cast<int>(std::lround(x));
        }
        const int n_f = budget >= 1 ? budget - n_m : 0;

        const bool feasible = budget >= 1 && n_m >= (ratio.male > 0 ? 1 : 0) &&
                              n_f >= (ratio.female > 0 ? 1 : 0) &&
                              n_m <= avail_m && n_f <= avail_f;
        if (!feasible) {
            out.skipped.push_back(held.id);
            continue;
        }

        rng::Stream fold_stream = root.child(rng::fnv1a64(held.id));
        rng::Stream ms = fold_stream.child("male");
        rng::Stream fsx = fold_stream.child("female");
        ms.shuffle(pool_m);
        fsx.shuffle(pool_f);

        FoldPlan plan;
        plan.held_out_subject = held.id;
        plan.held_out_sex = held.sex;
        plan.requested = ratio;
        plan.n_male = n_m;
        plan.n_female = n_f;
        plan.training_subjects.assign(pool_m.begin(), pool_m.begin() + n_m);
        plan.training_subjects.insert(plan.training_subjects.end(),
                                      pool_f.begin(), pool_f.begin() + n_f);
        std::sort(plan.training_subjects.begin(), plan.training_subjects.end());
        out.plans.push_back(std::move(plan));
    }
    require_data(!out.plans.empty(), "plan_folds: every fold was skipped");
    return out;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

namespace {

struct FoldOutcome {
    ResultRow row;
    metrics::GroupedPredictions records;  // per-trial, for pooled fairness
};

std::string ratio_tag(const Ratio& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f-%.2f", r.male, r.female);
    return buf;
}

Dataset subset_by_subjects(const Dataset& ds,
                           const std::vector<std::string>& subjects) {
    Dataset out;
    out.channel_names = ds.channel_names;
    for (const auto& s : ds.subjects)
        if (std::find(subjects.begin(), subjects.end(), s.id) != subjects.end())
            out.subjects.push_back(s);
    for (const auto& c : ds.cycles)
        if (std::find(subjects.begin(), subjects.end(), c.subject_id) !=
            subjects.end())
            out.cycles.push_back(c);
    return out;
}

// trial predictions for the held-out subject, in first-appearance order
metrics::GroupedPredictions evaluate_fold(
    const Dataset& ds, const FoldPlan& plan, const std::string& model_name,
    const dvae::ModelConfig& arch, const dvae::TrainConfig& tc, int knn_k,
    uint64_t fold_seed, const fs::path& model_dir) {
    Dataset train_ds = subset_by_subjects(ds, plan.training_subjects);
    Dataset test_ds = subset_by_subjects(ds, {plan.held_out_subject});
    require_data(!test_ds.cycles.empty(), "fold: held-out subject has no cycles");

    const Dataset norm_train = signal::normalize(train_ds);
    metrics::GroupedPredictions records;

    auto add_records = [&](const std::vector<std::pair<std::string, double>>&
                               preds) {
        for (const auto& [trial_id, pred] : preds) {
            double y_true = 0.0;
            for (const auto& c : test_ds.cycles)
                if (c.trial_id == trial_id) {
                    y_true = c.weight_kg;
                    break;
                }
            records.push_back({plan.held_out_subject, trial_id,
                               plan.held_out_sex, y_true, pred});
        }
    };

    if (model_name == "knn") {
        const knn::KnnModel m = knn::fit(norm_train, knn_k);
        const Dataset norm_test = signal::normalize(test_ds, m.channel_stats);
        std::vector<std::pair<std::string, double>> preds;
        std::vector<std::string> order;
        std::vector<std::pair<double, int>> sums;  // (sum, count)
        for (const auto& c : norm_test.cycles) {
            size_t g = 0;
            for (; g < order.size(); ++g)
                if (order[g] == c.trial_id) break;
            if (g == order.size()) {
                order.push_back(c.trial_id);
                sums.push_back({0.0, 0});
            }
            sums[g].first += knn::predict(m, c.data);
            sums[g].second += 1;
        }
        for (size_t g = 0; g < order.size(); ++g)
            preds.emplace_back(order[g], sums[g].first / sums[g].second);
        if (!model_dir.empty()) knn::save(model_dir, m);
        add_records(preds);
    } else {
        dvae::ModelConfig fold_arch = arch;
        fold_arch.mode = model_name == "dvae" ? dvae::Mode::dvae
                                              : dvae::Mode::plain_vae;
        dvae::TrainConfig fold_tc = tc;
        fold_tc.seed = fold_seed;
        dvae::TrainResult res = dvae::train(norm_train, fold_arch, fold_tc);
        add_records(dvae::predict_dataset(res.trained, test_ds));
        if (!model_dir.empty()) {
            dvae::save_model(model_dir, res.trained);
            dvae::save_training_log(model_dir / "training_log.csv", res.log);
        }
    }
    return records;
}

void write_fold_plan(const fs::path& file, const FoldPlan& plan,
                     const std::string& model, uint64_t seed) {
    json j;
    j["model"] = model;
    j["seed"] = seed;
    j["held_out_subject"] = plan.held_out_subject;
    j["held_out_sex"] = to_string(plan.held_out_sex);
    j["training_subjects"] = plan.training_subjects;
    j["n_male"] = plan.n_male;
    j["n_female"] = plan.n_female;
    j["ratio_m"] = plan.requested.male;
    j["ratio_f"] = plan.requested.female;
    std::ofstream out(file);
    require_data(out.good(), "cannot write fold plan " + file.string());
    out << j.dump(2) << '\n';
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = c.dataset_dir.string();
    j["models"] = c.models;
    json ratios = json::array();
    for (const auto& r : c.ratios) ratios.push_back({r.male, r.female});
    j["ratios"] = ratios;
    j["seeds"] = c.seeds;
    j["knn_k"] = c.knn_k;
    j["threads"] = c.threads;
    j["arch"] = {{"latent_dim", c.arch.latent_dim},
                 {"arch_scale", c.arch.arch_scale},
                 {"dropout_rate", c.arch.dropout_rate},
                 {"batchnorm", c.arch.batchnorm}};
    j["train"] = {{"learning_rate", c.train.learning_rate},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"mc_samples", c.train.mc_samples}};
    return j;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    require_data(!config.out_dir.empty(), "experiment: output directory not set");
    const Dataset ds = io::load_dataset(config.dataset_dir);

    fs::create_directories(config.out_dir);
    fs::create_directories(config.out_dir / "folds");
    fs::create_directories(config.out_dir / "models");
    {
        std::ofstream out(config.out_dir / "config.json");
        out << config_to_json(config).dump(2) << '\n';
    }

    struct Task {
        size_t model_i, ratio_i, seed_i, fold_i;
        const FoldPlan* plan;
    };

    // fold plans per (ratio, seed); identical across models by construction
    std::map<std::pair<size_t, size_t>, FoldPlanResult> plans;
    for (size_t ri = 0; ri < config.ratios.size(); ++ri)
        for (size_t si = 0; si < config.seeds.size(); ++si) {
            const uint64_t plan_seed = rng::mix64(
                config.seeds[si] ^
                rng::mix64(std::bit_cast<uint64_t>(config.ratios[ri].male)));
            plans[{ri, si}] = plan_folds(ds, config.ratios[ri], plan_seed);
            for (const auto& skipped : plans[{ri, si}].skipped)
                if (!config.quiet)
                    std::cerr << "warn: fold for subject " << skipped
                              << " skipped at ratio "
                              << ratio_tag(config.ratios[ri]) << "\n";
        }

    std::vector<Task> tasks;
    for (size_t mi = 0; mi < config.models.size(); ++mi)
        for (size_t ri = 0; ri < config.ratios.size(); ++ri)
            for (size_t si = 0; si < config.seeds.size(); ++si) {
                const auto& pr = plans[{ri, si}];
                for (size_t fi = 0; fi < pr.plans.size(); ++fi)
                    tasks.push_back({mi, ri, si, fi, &pr.plans[fi]});
            }

    std::vector<FoldOutcome> outcomes(tasks.size());
    std::atomic<size_t> next{0};
    std::atomic<int> failed{0};

    auto run_task = [&](size_t ti) {
        const Task& t = tasks[ti];
        const std::string& model = config.models[t.model_i];
        const Ratio& ratio = config.ratios[t.ratio_i];
        const uint64_t seed = config.seeds[t.seed_i];
        const FoldPlan& plan = *t.plan;

        FoldOutcome& oc = outcomes[ti];
        oc.row.model = model;
        oc.row.ratio = ratio;
        oc.row.seed = seed;
        oc.row.fold_subject = plan.held_out_subject;
        oc.row.test_sex = to_string(plan.held_out_sex);

        const std::string tag = model + "_r" + ratio_tag(ratio) + "_s" +
                                std::to_string(seed) + "_" +
                                plan.held_out_subject;
        try {
            const uint64_t fold_seed =
                rng::mix64(seed ^ rng::fnv1a64(model) ^
                           rng::mix64(std::bit_cast<uint64_t>(ratio.male)) ^
                           rng::fnv1a64(plan.held_out_subject));
            dvae::TrainConfig tc = config.train;
            if (auto it = config.train_overrides.find(model);
                it != config.train_overrides.end())
                tc = it->second;
            const fs::path model_dir =
                config.persist_models ? config.out_dir / "models" / tag
                                      : fs::path{};
            oc.records = evaluate_fold(ds, plan, model, config.arch, tc,
                                       config.knn_k, fold_seed, model_dir);
            oc.row.n_trials = static_cast<int>(oc.records.size());
            oc.row.mae = metrics::mae(oc.records);
            write_fold_plan(config.out_dir / "folds" / (tag + ".json"), plan,
                            model, seed);
        } catch (const std::exception& e) {
            oc.row.status = std::string("error: ") + e.what();
            failed.fetch_add(1);
        }
    };

    if (config.threads <= 1) {
        for (size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
    } else {
        std::vector<std::thread> workers;
        for (int w = 0; w < config.threads; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    const size_t ti = next.fetch_add(1);
                    if (ti >= tasks.size()) return;
                    run_task(ti);
                }
            });
        for (auto& w : workers) w.join();
    }

    // pooled fairness metrics per (model, ratio, seed) triple
    std::map<std::tuple<size_t, size_t, size_t>, metrics::GroupedPredictions>
        pooled;
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        if (!outcomes[ti].row.ok()) continue;
        auto& bucket = pooled[{tasks[ti].model_i, tasks[ti].ratio_i,
                               tasks[ti].seed_i}];
        bucket.insert(bucket.end(), outcomes[ti].records.begin(),
                      outcomes[ti].records.end());
    }
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        auto& row = outcomes[ti].row;
        if (!row.ok()) continue;
        const auto& bucket = pooled[{tasks[ti].model_i, tasks[ti].ratio_i,
                                     tasks[ti].seed_i}];
        const auto rep = metrics::report(bucket);
        if (rep.sp) {
            row.sp = *rep.sp;
            row.prd = *rep.prd;
            row.nrd = *rep.nrd;
            row.fairness_valid = true;
        }
    }

    ExperimentResult result;
    for (auto& oc : outcomes) result.rows.push_back(std::move(oc.row));
    result.folds_failed = failed.load();
    result.folds_run = static_cast<int>(tasks.size());
    result.results_csv = config.out_dir / "results.csv";
    write_results_csv(result.results_csv, result.rows);
    summarize(result.results_csv, config.out_dir);

    const int leaks = audit_run(config.out_dir);
    require_data(leaks == 0, "auditor found held-out-subject leakage");
    return result;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_results_csv(const fs::path& file, const std::vector<ResultRow>& rows) {
    std::ofstream os(file);
    require_data(os.good(), "cannot write " + file.string());
    os << "model,ratio_m,ratio_f,seed,fold_subject,test_sex,n_trials,mae,sp,prd,"
          "nrd,status\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.model << ',' << r.ratio.male << ',' << r.ratio.female << ','
           << r.seed << ',' << r.fold_subject << ',' << r.test_sex << ',';
        if (r.ok()) {
            os << r.n_trials << ',' << r.mae << ',';
            if (r.fairness_valid)
                os << r.sp << ',' << r.prd << ',' << r.nrd << ',';
            else
                os << ",,,";
        } else {
            os << ",,,,,";
        }
        os << r.status << '\n';
    }
}

std::vector<ResultRow> read_results_csv(const fs::path& file) {
    std::ifstream is(file);
    require_data(is.good(), "cannot open " + file.string());
    std::string line;
    require_data(static_cast<bool>(std::getline(is, line)),
                 "results csv: missing header");
    require_data(line ==
                     "model,ratio_m,ratio_f,seed,fold_subject,test_sex,"
                     "n_trials,mae,sp,prd,nrd,status",
                 "results csv: unexpected header");
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (!line.empty() && line.back() == ',') f.push_back("");
        require_data(f.size() == 12, "results csv: line " +
                                         std::to_string(lineno) +
                                         ": expected 12 fields, got " +
                                         std::to_string(f.size()));
        try {
            ResultRow r;
            r.model = f[0];
            r.ratio.male = std::stod(f[1]);
            r.ratio.female = std::stod(f[2]);
            r.seed = std::stoull(f[3]);
            r.fold_subject = f[4];
            r.test_sex = f[5];
            r.status = f[11];
            if (r.ok()) {
                r.n_trials = std::stoi(f[6]);
                r.mae = std::stod(f[7]);
                if (!f[8].empty()) {
                    r.sp = std::stod(f[8]);
                    r.prd = std::stod(f[9]);
                    r.nrd = std::stod(f[10]);
                    r.fairness_valid = true;
                }
            }
            rows.push_back(std::move(r));
        } catch (const std::exception&) {
            throw DataError("results csv: line " + std::to_string(lineno) +
                            ": malformed numeric field");
        }
    }
    return rows;
}

int audit_run(const fs::path& run_dir) {
    int violations = 0;
    std::vector<fs::path> files;
    if (fs::exists(run_dir / "folds"))
        for (const auto& e : fs::directory_iterator(run_dir / "folds"))
            if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        std::ifstream in(file);
        json j;
        in >> j;
        const auto held = j.at("held_out_subject").get<std::string>();
        const auto training =
            j.at("training_subjects").get<std::vector<std::string>>();
        if (std::find(training.begin(), training.end(), held) != training.end()) {
            std::cerr << "audit: leakage in " << file << "\n";
            ++violations;
        }
        const int n_m = j.at("n_male").get<int>();
        const int n_f = j.at("n_female").get<int>();
        if (n_m + n_f != static_cast<int>(training.size())) {
            std::cerr << "audit: count mismatch in " << file << "\n";
            ++violations;
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Summary + plots
// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double p) {
    require_data(!values.empty(), "quantile: empty input");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double pos = p * static_cast<double>(values.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    if (i + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

namespace {

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

void svg_boxplot(const fs::path& file, const std::string& title,
                 const std::string& y_label, const std::vector<BoxGroup>& groups) {
    const int width = std::max(420, 90 + static_cast<int>(groups.size()) * 64);
    const int height = 420;
    const int left = 70, right = 20, top = 48, bottom = 96;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double lo = 0, hi = 1;
    bool first = true;
    for (const auto& g : groups)
        for (double v : g.values) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    if (first) return;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto ypix = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

    std::ofstream os(file);
    require_data(os.good(), "cannot write " + file.string());
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
    // axes
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
       << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
       << left + plot_w << "\" y2=\"" << top + plot_h
       << "\" stroke=\"black\"/>\n";
    for (int tck = 0; tck <= 5; ++tck) {
        const double v = lo + (hi - lo) * tck / 5.0;
        os << "<line x1=\"" << left - 4 << "\" y1=\"" << ypix(v) << "\" x2=\""
           << left << "\" y2=\"" << ypix(v) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << ypix(v) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
              "font-size=\"11\">"
           << v << "</text>\n";
    }
    os << "<text x=\"16\" y=\"" << top + plot_h / 2
       << "\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\" "
          "text-anchor=\"middle\">" << y_label << "</text>\n";

    const double slot = plot_w / static_cast<double>(groups.size());
    for (size_t g = 0; g < groups.size(); ++g) {
        const auto& vals = groups[g].values;
        if (vals.empty()) continue;
        const double cx = left + slot * (static_cast<double>(g) + 0.5);
        const double bw = std::min(34.0, slot * 0.6);
        const double q1 = quantile(vals, 0.25);
        const double q2 = quantile(vals, 0.5);
        const double q3 = quantile(vals, 0.75);
        const double mn = *std::min_element(vals.begin(), vals.end());
        const double mx = *std::max_element(vals.begin(), vals.end());
        os << "<line x1=\"" << cx << "\" y1=\"" << ypix(mn) << "\" x2=\"" << cx
           << "\" y2=\"" << ypix(mx) << "\" stroke=\"black\"/>\n";
        for (double w : {mn, mx})
            os << "<line x1=\"" << cx - bw / 4 << "\" y1=\"" << ypix(w)
               << "\" x2=\"" << cx + bw / 4 << "\" y2=\"" << ypix(w)
               << "\" stroke=\"black\"/>\n";
        os << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << ypix(q3)
           << "\" width=\"" << bw << "\" height=\""
           << std::max(1.0, ypix(q1) - ypix(q3))
           << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << cx - bw / 2 << "\" y1=\"" << ypix(q2)
           << "\" x2=\"" << cx + bw / 2 << "\" y2=\"" << ypix(q2)
           << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 14
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
              "font-size=\"10\" transform=\"rotate(-45 " << cx << " "
           << top + plot_h + 14 << ")\">" << groups[g].label << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace

void summarize(const fs::path& results_csv, const fs::path& out_dir) {
    const auto rows = read_results_csv(results_csv);
    fs::create_directories(out_dir);
    fs::create_directories(out_dir / "plots");

    struct Key {
        std::string model;
        double rm, rf;
        bool operator<(const Key& o) const {
            return std::tie(model, rm, rf) < std::tie(o.model, o.rm, o.rf);
        }
    };

    std::map<Key, std::map<std::string, std::vector<double>>> mae_by_sex;
    // fairness values deduped per seed within each (model, ratio)
    std::map<Key, std::map<uint64_t, std::array<double, 3>>> fairness;
    for (const auto& r : rows) {
        if (!r.ok()) continue;
        const Key k{r.model, r.ratio.male, r.ratio.female};
        mae_by_sex[k][r.test_sex].push_back(r.mae);
        if (r.fairness_valid) fairness[k][r.seed] = {r.sp, r.prd, r.nrd};
    }

    std::ofstream os(out_dir / "summary.csv");
    require_data(os.good(), "cannot write summary.csv");
    os << "model,ratio_m,ratio_f,test_sex,metric,n,mean,min,q1,median,q3,max\n";
    os << std::setprecision(17);
    auto emit = [&](const Key& k, const std::string& sex,
                    const std::string& metric, const std::vector<double>& v) {
        if (v.empty()) return;
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        os << k.model << ',' << k.rm << ',' << k.rf << ',' << sex << ','
           << metric << ',' << v.size() << ',' << mean << ','
           << *std::min_element(v.begin(), v.end()) << ',' << quantile(v, 0.25)
           << ',' << quantile(v, 0.5) << ',' << quantile(v, 0.75) << ','
           << *std::max_element(v.begin(), v.end()) << '\n';
    };

    std::vector<BoxGroup> mae_groups, sp_groups, prd_groups, nrd_groups;
    for (const auto& [k, by_sex] : mae_by_sex) {
        char rt[32];
        std::snprintf(rt, sizeof rt, "%.1f:%.1f", k.rm, k.rf);
        for (const auto& [sex, vals] : by_sex) {
            emit(k, sex, "mae", vals);
            mae_groups.push_back(
                {k.model + " " + rt + " " + sex.substr(0, 1).c_str(), vals});
        }
        if (auto it = fairness.find(k); it != fairness.end()) {
            std::vector<double> sp, prd, nrd;
            for (const auto& [seed, v] : it->second) {
                sp.push_back(v[0]);
                prd.push_back(v[1]);
                nrd.push_back(v[2]);
            }
            emit(k, "both", "sp", sp);
            emit(k, "both", "prd", prd);
            emit(k, "both", "nrd", nrd);
            sp_groups.push_back({k.model + " " + rt, sp});
            prd_groups.push_back({k.model + " " + rt, prd});
            nrd_groups.push_back({k.model + " " + rt, nrd});
        }
    }

    svg_boxplot(out_dir / "plots" / "mae.svg", "MAE by model, ratio, test sex",
                "MAE (kg)", mae_groups);
    svg_boxplot(out_dir / "plots" / "sp.svg", "Statistical parity", "SP (kg)",
                sp_groups);
    svg_boxplot(out_dir / "plots" / "prd.svg", "Positive residual difference",
                "PRD (kg)", prd_groups);
    svg_boxplot(out_dir / "plots" / "nrd.svg", "Negative residual difference",
                "NRD (kg)", nrd_groups);
}

}  // namespace fairload::harness
