#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <json.hpp>

#include "fairload/dataset_io.hpp"
#include "fairload/dvae.hpp"
#include "fairload/harness.hpp"
#include "fairload/knn.hpp"
#include "fairload/metrics.hpp"
#include "fairload/selftest.hpp"
#include "fairload/signal.hpp"
#include "fairload/synthgait.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairload;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    require_data(in.good(), "cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed config JSON: " + std::string(e.what()));
    }
    return j;
}

struct GenCli {
    synthgait::GeneratorConfig cfg;
    std::string out, raw_out, config;

    void merge_config() {
        if (config.empty()) return;
        const json j = load_json_file(config);
        if (j.contains("n_subjects_male")) cfg.n_subjects_male = j["n_subjects_male"];
        if (j.contains("n_subjects_female"))
            cfg.n_subjects_female = j["n_subjects_female"];
        if (j.contains("trials_per_condition"))
            cfg.trials_per_condition = j["trials_per_condition"];
        if (j.contains("weights_kg"))
            cfg.weights_kg = j["weights_kg"].get<std::vector<double>>();
        if (j.contains("cycles_per_trial")) cfg.cycles_per_trial = j["cycles_per_trial"];
        if (j.contains("sample_rate_hz")) cfg.sample_rate_hz = j["sample_rate_hz"];
        if (j.contains("n_channels")) cfg.n_channels = j["n_channels"];
        if (j.contains("base_cadence_hz")) cfg.base_cadence_hz = j["base_cadence_hz"];
        if (j.contains("weight_amplitude_gain"))
            cfg.weight_amplitude_gain = j["weight_amplitude_gain"];
        if (j.contains("sex_cadence_delta_hz"))
            cfg.sex_cadence_delta_hz = j["sex_cadence_delta_hz"];
        if (j.contains("sex_channel_offset"))
            cfg.sex_channel_offset = j["sex_channel_offset"];
        if (j.contains("load_channels"))
            cfg.load_channels = j["load_channels"].get<std::vector<int>>();
        if (j.contains("sex_offset_channels"))
            cfg.sex_offset_channels = j["sex_offset_channels"].get<std::vector<int>>();
        if (j.contains("subject_variability_std"))
            cfg.subject_variability_std = j["subject_variability_std"];
        if (j.contains("noise_std")) cfg.noise_std = j["noise_std"];
        if (j.contains("seed")) cfg.seed = j["seed"];
    }
};

void print_report(std::ostream& os, const metrics::MetricsReport& rep) {
    os << std::setprecision(10);
    os << "metric,value\n";
    os << "mae_overall," << rep.mae_overall << '\n';
    if (rep.mae_female) os << "mae_female," << *rep.mae_female << '\n';
    if (rep.mae_male) os << "mae_male," << *rep.mae_male << '\n';
    if (rep.sp) {
        os << "sp," << *rep.sp << '\n';
        os << "prd," << *rep.prd << '\n';
        os << "nrd," << *rep.nrd << '\n';
    }
    os << "n_female," << rep.n_female << '\n';
    os << "n_male," << rep.n_male << '\n';
}

metrics::GroupedPredictions trial_records(const dvae::TrainedModel& m,
                                          const Dataset& ds) {
    metrics::GroupedPredictions records;
    const auto preds = dvae::predict_dataset(m, ds);
    for (const auto& [trial_id, pred] : preds)
        for (const auto& c : ds.cycles)
            if (c.trial_id == trial_id) {
                records.push_back({c.subject_id, trial_id, c.sex, c.weight_kg, pred});
                break;
            }
    return records;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairload: fairness-aware hand-load estimation from IMU gait"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    bool quiet = false;
    int threads = 1;
    app.add_option("--seed", seed, "global RNG seed")->envname("FAIRLOAD_SEED");
    app.add_flag("--quiet", quiet, "suppress non-error diagnostics");
    app.add_option("--threads", threads, "worker threads (harness only)");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a synthetic gait dataset");
    GenCli g;
    gen->add_option("--config", g.config, "GeneratorConfig JSON file");
    auto* g_sm = gen->add_option("--subjects-male", g.cfg.n_subjects_male);
    auto* g_sf = gen->add_option("--subjects-female", g.cfg.n_subjects_female);
    auto* g_tr = gen->add_option("--trials", g.cfg.trials_per_condition,
                                 "trials per (subject, weight)");
    auto* g_cy = gen->add_option("--cycles", g.cfg.cycles_per_trial);
    auto* g_we = gen->add_option("--weights", g.cfg.weights_kg, "kg levels");
    auto* g_ch = gen->add_option("--channels", g.cfg.n_channels);
    auto* g_no = gen->add_option("--noise", g.cfg.noise_std);
    auto* g_sv = gen->add_option("--subject-var", g.cfg.subject_variability_std);
    auto* g_wg = gen->add_option("--weight-gain", g.cfg.weight_amplitude_gain);
    auto* g_cd = gen->add_option("--cadence-delta", g.cfg.sex_cadence_delta_hz);
    auto* g_so = gen->add_option("--sex-offset", g.cfg.sex_channel_offset);
    gen->add_option("--out", g.out, "dataset output directory")->required();
    gen->add_option("--raw-out", g.raw_out, "also dump raw trials here");

    // ---- preprocess ----
    auto* prep = app.add_subcommand("preprocess",
                                    "raw trials -> gait cycle dataset");
    std::string p_raw, p_out;
    signal::PipelineParams p_params;
    prep->add_option("--raw", p_raw, "raw trial directory")->required();
    prep->add_option("--out", p_out, "dataset output directory")->required();
    prep->add_option("--cutoff", p_params.filter_cutoff_hz, "low-pass cutoff Hz");
    prep->add_option("--peak-height", p_params.detection.min_peak_height);
    prep->add_option("--peak-separation",
                     p_params.detection.min_peak_separation_s);

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a dvae or plain_vae model");
    std::string t_data, t_out, t_mode = "dvae", t_config;
    dvae::ModelConfig t_arch;
    dvae::TrainConfig t_cfg;
    train->add_option("--data", t_data, "dataset directory")->required();
    train->add_option("--out", t_out, "model output directory")->required();
    train->add_option("--config", t_config, "TrainConfig JSON file");
    train->add_option("--mode", t_mode, "dvae | plain_vae");
    auto* t_ep = train->add_option("--epochs", t_cfg.epochs);
    auto* t_bs = train->add_option("--batch-size", t_cfg.batch_size);
    auto* t_lr = train->add_option("--lr", t_cfg.learning_rate);
    auto* t_b1 = train->add_option("--beta1", t_cfg.beta1, "discriminative weight");
    auto* t_b2 = train->add_option("--beta2", t_cfg.beta2, "independence weight");
    auto* t_mc = train->add_option("--mc-samples", t_cfg.mc_samples);
    auto* t_ld = train->add_option("--latent-dim", t_arch.latent_dim);
    auto* t_as = train->add_option("--arch-scale", t_arch.arch_scale);

    // ---- predict ----
    auto* predict = app.add_subcommand("predict", "per-trial weight predictions");
    std::string pr_model, pr_data, pr_out;
    predict->add_option("--model", pr_model)->required();
    predict->add_option("--data", pr_data)->required();
    predict->add_option("--out", pr_out, "output CSV (default stdout)");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "accuracy and fairness metrics");
    std::string e_model, e_data, e_out;
    eval->add_option("--model", e_model)->required();
    eval->add_option("--data", e_data)->required();
    eval->add_option("--out", e_out, "output CSV (default stdout)");

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "ratio x seed x model LOSOCV sweep");
    std::string s_config, s_data, s_out;
    sweep->add_option("--config", s_config, "ExperimentConfig JSON")->required();
    sweep->add_option("--data", s_data, "override dataset directory");
    sweep->add_option("--out", s_out, "override output directory");

    // ---- summarize ----
    auto* summ = app.add_subcommand("summarize", "summary tables and boxplots");
    std::string m_results, m_out;
    summ->add_option("--results", m_results, "results.csv path")->required();
    summ->add_option("--out", m_out, "output directory")->required();

    // ---- export-latents ----
    auto* exl = app.add_subcommand("export-latents", "posterior means per cycle");
    std::string x_model, x_data, x_out;
    exl->add_option("--model", x_model)->required();
    exl->add_option("--data", x_data)->required();
    exl->add_option("--out", x_out, "output CSV (default stdout)");

    // ---- selftest ----
    auto* st = app.add_subcommand(
        "selftest", "KL / gradient / filter / metric oracle suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            g.merge_config();
            if (*g_sm) g.cfg.n_subjects_male = g_sm->as<int>();
            if (*g_sf) g.cfg.n_subjects_female = g_sf->as<int>();
            if (*g_tr) g.cfg.trials_per_condition = g_tr->as<int>();
            if (*g_cy) g.cfg.cycles_per_trial = g_cy->as<int>();
            if (*g_we) g.cfg.weights_kg = g_we->as<std::vector<double>>();
            if (*g_ch) g.cfg.n_channels = g_ch->as<int>();
            if (*g_no) g.cfg.noise_std = g_no->as<double>();
            if (*g_sv) g.cfg.subject_variability_std = g_sv->as<double>();
            if (*g_wg) g.cfg.weight_amplitude_gain = g_wg->as<double>();
            if (*g_cd) g.cfg.sex_cadence_delta_hz = g_cd->as<double>();
            if (*g_so) g.cfg.sex_channel_offset = g_so->as<double>();
            if (app.count("--seed")) g.cfg.seed = seed;

            signal::PipelineParams pipeline;
            pipeline.quiet = quiet;
            const auto gen_data = synthgait::generate_dataset(g.cfg);
            if (!g.raw_out.empty()) io::save_trials(g.raw_out, gen_data.trials);
            const Dataset ds = signal::build_dataset(gen_data.trials, pipeline);
            io::save_dataset(g.out, ds);
            io::save_ground_truth(fs::path(g.out) / "ground_truth.json",
                                  gen_data.truth);
            if (!quiet)
                std::cerr << "wrote " << ds.cycles.size() << " cycles to " << g.out
                          << "\n";
        } else if (*prep) {
            p_params.quiet = quiet;
            const auto trials = io::load_trials(p_raw);
            const Dataset ds = signal::build_dataset(trials, p_params);
            io::save_dataset(p_out, ds);
            if (!quiet)
                std::cerr << "wrote " << ds.cycles.size() << " cycles to " << p_out
                          << "\n";
        } else if (*train) {
            if (!t_config.empty()) {
                const json j = load_json_file(t_config);
                if (j.contains("learning_rate")) t_cfg.learning_rate = j["learning_rate"];
                if (j.contains("epochs")) t_cfg.epochs = j["epochs"];
                if (j.contains("batch_size")) t_cfg.batch_size = j["batch_size"];
                if (j.contains("beta1")) t_cfg.beta1 = j["beta1"];
                if (j.contains("beta2")) t_cfg.beta2 = j["beta2"];
                if (j.contains("mc_samples")) t_cfg.mc_samples = j["mc_samples"];
                if (j.contains("latent_dim")) t_arch.latent_dim = j["latent_dim"];
                if (j.contains("arch_scale")) t_arch.arch_scale = j["arch_scale"];
            }
            if (*t_ep) t_cfg.epochs = t_ep->as<int>();
            if (*t_bs) t_cfg.batch_size = t_bs->as<int>();
            if (*t_lr) t_cfg.learning_rate = t_lr->as<double>();
            if (*t_b1) t_cfg.beta1 = t_b1->as<double>();
            if (*t_b2) t_cfg.beta2 = t_b2->as<double>();
            if (*t_mc) t_cfg.mc_samples = t_mc->as<int>();
            if (*t_ld) t_arch.latent_dim = t_ld->as<int>();
            if (*t_as) t_arch.arch_scale = t_as->as<double>();
            t_cfg.seed = seed;
            t_arch.mode = dvae::mode_from_string(t_mode);

            const Dataset raw = io::load_dataset(t_data);
            t_arch.n_channels = raw.n_channels();
            const Dataset norm = signal::normalize(raw);
            const auto res = dvae::train(norm, t_arch, t_cfg);
            dvae::save_model(t_out, res.trained);
            dvae::save_training_log(fs::path(t_out) / "training_log.csv", res.log);
            if (!quiet)
                std::cerr << "trained " << t_mode << " for " << t_cfg.epochs
                          << " epochs; final loss " << res.log.back().total << "\n";
        } else if (*predict) {
            const auto model = dvae::load_model(pr_model);
            const Dataset ds = io::load_dataset(pr_data);
            const auto records = trial_records(model, ds);
            std::ofstream file;
            if (!pr_out.empty()) file.open(pr_out);
            std::ostream& os = pr_out.empty() ? std::cout : file;
            os << std::setprecision(10);
            os << "subject_id,trial_id,sex,weight_kg,predicted_kg\n";
            for (const auto& r : records)
                os << r.subject_id << ',' << r.trial_id << ',' << to_string(r.sex)
                   << ',' << r.y_true_kg << ',' << r.y_pred_kg << '\n';
        } else if (*eval) {
            const auto model = dvae::load_model(e_model);
            const Dataset ds = io::load_dataset(e_data);
            const auto rep = metrics::report(trial_records(model, ds));
            std::ofstream file;
            if (!e_out.empty()) file.open(e_out);
            print_report(e_out.empty() ? std::cout : file, rep);
        } else if (*sweep) {
            harness::ExperimentConfig cfg =
                harness::experiment_from_json_file(s_config);
            if (!s_data.empty()) cfg.dataset_dir = s_data;
            if (!s_out.empty()) cfg.out_dir = s_out;
            if (app.count("--threads")) cfg.threads = threads;
            cfg.quiet = quiet;
            const auto result = harness::run_experiment(cfg);
            if (!quiet)
                std::cerr << "sweep: " << result.folds_run << " fold runs, "
                          << result.folds_failed << " failed; results in "
                          << result.results_csv << "\n";
            if (result.folds_failed * 10 > result.folds_run) {
                std::cerr << "error: more than 10% of folds failed\n";
                return 2;
            }
        } else if (*summ) {
            harness::summarize(m_results, m_out);
        } else if (*exl) {
            const auto model = dvae::load_model(x_model);
            const Dataset ds = io::load_dataset(x_data);
            std::ofstream file;
            if (!x_out.empty()) file.open(x_out);
            dvae::export_latents(model, ds, x_out.empty() ? std::cout : file);
        } else if (*st) {
            const auto results = selftest::run_all();
            bool all = true;
            for (const auto& r : results) {
                std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": "
                          << r.detail << " (" << std::fixed
                          << std::setprecision(2) << r.seconds << "s)\n";
                std::cout.unsetf(std::ios::fixed);
                all = all && r.pass;
            }
            return all ? 0 : 3;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
