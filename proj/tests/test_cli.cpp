#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    fs::path p = fs::temp_directory_path() / "fairload_test" / "cli";
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(FAIRLOAD_BIN) + " " + args;
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("unknown subcommand and missing flags exit with usage code 1") {
    CHECK(run("frobnicate 2>/dev/null") == 1);
    CHECK(run("train 2>/dev/null") == 1);  // required flags missing
    CHECK(run("--help >/dev/null 2>&1") == 0);
}

TEST_CASE("gen -> train -> predict/eval/export-latents round trip") {
    const fs::path dir = work_dir();
    const fs::path data = dir / "data";
    const fs::path model = dir / "model";
    fs::remove_all(data);
    fs::remove_all(model);

    CHECK(run("--quiet --seed 5 gen --subjects-male 2 --subjects-female 2 "
              "--cycles 2 --channels 12 --out " +
              data.string()) == 0);
    CHECK(fs::exists(data / "manifest.json"));
    CHECK(fs::exists(data / "cycles.f32"));
    CHECK(fs::exists(data / "ground_truth.json"));

    CHECK(run("--quiet --seed 1 train --data " + data.string() + " --out " +
              model.string() +
              " --mode dvae --epochs 2 --batch-size 16 --arch-scale 0.1 "
              "--latent-dim 4") == 0);
    CHECK(fs::exists(model / "model.json"));
    CHECK(fs::exists(model / "params.f32"));
    CHECK(fs::exists(model / "training_log.csv"));

    const fs::path preds = dir / "preds.csv";
    CHECK(run("--quiet predict --model " + model.string() + " --data " +
              data.string() + " --out " + preds.string()) == 0);
    std::ifstream pf(preds);
    std::string header;
    std::getline(pf, header);
    CHECK(header == "subject_id,trial_id,sex,weight_kg,predicted_kg");
    size_t rows = 0;
    std::string line;
    while (std::getline(pf, line)) ++rows;
    CHECK(rows == 12);  // 4 subjects x 3 weights x 1 trial

    const fs::path rep = dir / "eval.csv";
    CHECK(run("--quiet eval --model " + model.string() + " --data " +
              data.string() + " --out " + rep.string()) == 0);
    std::ifstream rf(rep);
    std::stringstream ss;
    ss << rf.rdbuf();
    CHECK(ss.str().find("mae_overall") != std::string::npos);
    CHECK(ss.str().find("sp,") != std::string::npos);

    const fs::path lat = dir / "latents.csv";
    CHECK(run("--quiet export-latents --model " + model.string() + " --data " +
              data.string() + " --out " + lat.string()) == 0);
    std::ifstream lf(lat);
    std::getline(lf, line);
    CHECK(line.find("z_mean_0") != std::string::npos);
}

TEST_CASE("gen --raw-out + preprocess reproduce the same dataset") {
    const fs::path dir = work_dir();
    const fs::path data = dir / "data2";
    const fs::path raw = dir / "raw2";
    const fs::path data2 = dir / "data2b";
    fs::remove_all(data);
    fs::remove_all(raw);
    fs::remove_all(data2);

    CHECK(run("--quiet --seed 9 gen --subjects-male 2 --subjects-female 2 "
              "--cycles 2 --channels 12 --out " +
              data.string() + " --raw-out " + raw.string()) == 0);
    CHECK(run("--quiet preprocess --raw " + raw.string() + " --out " +
              data2.string()) == 0);

    // float32 raw storage -> cycles match closely, byte-for-byte layout
    std::ifstream m1(data / "manifest.json"), m2(data2 / "manifest.json");
    std::stringstream s1, s2;
    s1 << m1.rdbuf();
    s2 << m2.rdbuf();
    CHECK(s1.str().find("\"n_cycles\": 24") != std::string::npos);
    CHECK(s2.str().find("\"n_cycles\": 24") != std::string::npos);
}

TEST_CASE("sweep + summarize run from a config file") {
    const fs::path dir = work_dir();
    const fs::path data = dir / "sweep_data";
    const fs::path out = dir / "sweep_out";
    fs::remove_all(data);
    fs::remove_all(out);

    CHECK(run("--quiet --seed 3 gen --subjects-male 3 --subjects-female 3 "
              "--cycles 2 --channels 12 --out " +
              data.string()) == 0);

    const fs::path cfg = dir / "exp.json";
    std::ofstream c(cfg);
    c << "{\n"
      << "  \"dataset\": \"" << data.string() << "\",\n"
      << "  \"models\": [\"knn\"],\n"
      << "  \"ratios\": [[0.5, 0.5]],\n"
      << "  \"seeds\": [1],\n"
      << "  \"knn_k\": 3,\n"
      << "  \"persist_models\": false,\n"
      << "  \"out\": \"" << out.string() << "\"\n"
      << "}\n";
    c.close();

    CHECK(run("--quiet sweep --config " + cfg.string()) == 0);
    CHECK(fs::exists(out / "results.csv"));
    CHECK(fs::exists(out / "summary.csv"));
    CHECK(fs::exists(out / "plots" / "mae.svg"));
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "folds"));

    const fs::path summ = dir / "summ_again";
    fs::remove_all(summ);
    CHECK(run("--quiet summarize --results " + (out / "results.csv").string() +
              " --out " + summ.string()) == 0);
    CHECK(fs::exists(summ / "summary.csv"));
}

TEST_CASE("data errors exit 2") {
    CHECK(run("--quiet train --data /nonexistent/nope --out /tmp/x 2>/dev/null") ==
          2);
    CHECK(run("--quiet summarize --results /nonexistent/r.csv --out /tmp/x "
              "2>/dev/null") == 2);
}

TEST_CASE("selftest passes and exits 0") {
    CHECK(run("selftest >/dev/null") == 0);
}
