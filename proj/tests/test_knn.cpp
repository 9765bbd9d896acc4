#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "fairload/knn.hpp"
#include "fairload/rng.hpp"
#include "fairload/signal.hpp"
#include "fairload/synthgait.hpp"

using namespace fairload;

namespace {

Dataset make_dataset(uint64_t seed) {
    synthgait::GeneratorConfig cfg;
    cfg.n_subjects_male = 2;
    cfg.n_subjects_female = 2;
    cfg.weights_kg = {4.5, 13.6, 22.7};
    cfg.cycles_per_trial = 2;
    cfg.n_channels = 12;
    cfg.seed = seed;
    return signal::normalize(synthgait::generate_processed(cfg).dataset);
}

}  // namespace

TEST_CASE("knn fit stores flattened normalized rows; bad k rejected") {
    const Dataset ds = make_dataset(1);
    const auto m = knn::fit(ds, 3);
    CHECK(m.train.rows() == static_cast<Eigen::Index>(ds.cycles.size()));
    CHECK(m.train.cols() == kCycleLength * 12);
    // row i equals flatten(cycle i)
    for (int i : {0, 5}) {
        const Vector f = knn::flatten_cycle(ds.cycles[static_cast<size_t>(i)].data);
        CHECK((m.train.row(i).transpose() - f).cwiseAbs().maxCoeff() < 1e-9);
    }

    CHECK_THROWS_AS(knn::fit(ds, 0), DataError);
    CHECK_THROWS_AS(knn::fit(ds, static_cast<int>(ds.cycles.size()) + 1),
                    DataError);
    // k = N stores everything and predicts the global mean
    const auto all = knn::fit(ds, static_cast<int>(ds.cycles.size()));
    const double pred = knn::predict(all, ds.cycles[0].data);
    CHECK(pred == doctest::Approx(all.targets_kg.mean()).epsilon(1e-12));
}

TEST_CASE("query equal to a training row with k=1 returns its target") {
    const Dataset ds = make_dataset(2);
    const auto m = knn::fit(ds, 1);
    for (int i : {0, 7, 20})
        CHECK(knn::predict(m, ds.cycles[static_cast<size_t>(i)].data) ==
              doctest::Approx(ds.cycles[static_cast<size_t>(i)].weight_kg));
}

TEST_CASE("knn matches an exhaustive brute-force scan on random instances") {
    const Dataset ds = make_dataset(3);
    const auto m = knn::fit(ds, 3);
    rng::Stream rs{44};
    for (int rep = 0; rep < 20; ++rep) {
        Matrix q = ds.cycles[rep % ds.cycles.size()].data;
        for (int t = 0; t < q.rows(); ++t)
            for (int c = 0; c < q.cols(); ++c) q(t, c) += 0.1 * rs.normal();

        // O(N) oracle
        const Vector qv = knn::flatten_cycle(q);
        std::vector<std::pair<double, int>> d;
        for (Eigen::Index i = 0; i < m.train.rows(); ++i)
            d.push_back({(m.train.row(i).transpose() - qv).squaredNorm(),
                         static_cast<int>(i)});
        std::sort(d.begin(), d.end());
        double mean = 0;
        for (int j = 0; j < 3; ++j) mean += m.targets_kg(d[j].second);
        mean /= 3;

        CHECK(knn::predict(m, q) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("knn prediction stays inside the target range") {
    const Dataset ds = make_dataset(4);
    const auto m = knn::fit(ds, 5);
    rng::Stream rs{45};
    const double lo = m.targets_kg.minCoeff(), hi = m.targets_kg.maxCoeff();
    for (int rep = 0; rep < 30; ++rep) {
        Matrix q(kCycleLength, 12);
        for (int t = 0; t < q.rows(); ++t)
            for (int c = 0; c < q.cols(); ++c) q(t, c) = rs.normal(0.0, 2.0);
        const double p = knn::predict(m, q);
        CHECK(p >= lo);
        CHECK(p <= hi);
    }
}

TEST_CASE("knn artifact round-trips") {
    namespace fs = std::filesystem;
    const Dataset ds = make_dataset(5);
    const auto m = knn::fit(ds, 4);
    const fs::path dir = fs::temp_directory_path() / "fairload_test" / "knn_rt";
    fs::remove_all(dir);
    knn::save(dir, m);
    const auto back = knn::load(dir);
    CHECK(back.k == 4);
    CHECK(back.train.rows() == m.train.rows());
    const double a = knn::predict(m, ds.cycles[3].data);
    const double b = knn::predict(back, ds.cycles[3].data);
    CHECK(std::abs(a - b) < 1e-4);
}
