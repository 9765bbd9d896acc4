#include "fairload/knn.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "fairload/dataset_io.hpp"

namespace fairload::knn {

using nlohmann::json;
namespace fs = std::filesystem;

Vector flatten_cycle(const Matrix& cycle) {
    Vector v(cycle.size());
    Eigen::Index k = 0;
    for (Eigen::Index t = 0; t < cycle.rows(); ++t)
        for (Eigen::Index c = 0; c < cycle.cols(); ++c) v(k++) = cycle(t, c);
    return v;
}

KnnModel fit(const Dataset& normalized, int k) {
    require_data(!normalized.cycles.empty(), "knn_fit: empty dataset");
    require_data(k >= 1, "knn_fit: k must be >= 1");
    require_data(k <= static_cast<int>(normalized.cycles.size()),
                 "knn_fit: k exceeds training size");
    require_data(normalized.channel_stats.has_value(),
                 "knn_fit: dataset must be normalized");
    KnnModel m;
    m.k = k;
    m.channel_stats = *normalized.channel_stats;
    const Eigen::Index dim = normalized.cycles.front().data.size();
    m.train.resize(static_cast<Eigen::Index>(normalized.cycles.size()), dim);
    m.targets_kg.resize(static_cast<Eigen::Index>(normalized.cycles.size()));
    for (size_t i = 0; i < normalized.cycles.size(); ++i) {
        m.train.row(static_cast<Eigen::Index>(i)) =
            flatten_cycle(normalized.cycles[i].data).transpose();
        m.targets_kg(static_cast<Eigen::Index>(i)) =
            normalized.cycles[i].weight_kg;
    }
    return m;
}

double predict(const KnnModel& model, const Matrix& cycle) {
    const Vector q = flatten_cycle(cycle);
    require_data(q.size() == model.train.cols(),
                 "knn_predict: query dimension mismatch");
    const Eigen::Index n = model.train.rows();
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        dist[static_cast<size_t>(i)] = {
            (model.train.row(i).transpose() - q).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());
    double sum = 0.0;
    for (int j = 0; j < model.k; ++j) sum += model.targets_kg(dist[j].second);
    return sum / model.k;
}

void save(const fs::path& dir, const KnnModel& model) {
    fs::create_directories(dir);
    json meta;
    meta["format_version"] = 1;
    meta["k"] = model.k;
    meta["n"] = model.train.rows();
    meta["dim"] = model.train.cols();
    meta["targets_kg"] = std::vector<double>(
        model.targets_kg.data(), model.targets_kg.data() + model.targets_kg.size());
    meta["channel_stats"] = {{"mean", model.channel_stats.mean},
                             {"std", model.channel_stats.stddev}};
    std::ofstream out(dir / "knn.json");
    require_data(out.good(), "cannot write knn.json");
    out << meta.dump(2) << '\n';

    std::ofstream bin(dir / "knn.f32", std::ios::binary);
    require_data(bin.good(), "cannot write knn.f32");
    std::vector<double> row(static_cast<size_t>(model.train.cols()));
    for (Eigen::Index r = 0; r < model.train.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.train.cols(); ++c)
            row[static_cast<size_t>(c)] = model.train(r, c);
        io::write_f32(bin, row.data(), row.size());
    }
}

KnnModel load(const fs::path& dir) {
    std::ifstream in(dir / "knn.json");
    require_data(in.good(), "cannot open knn.json in " + dir.string());
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed knn.json: ") + e.what());
    }
    KnnModel m;
    m.k = meta.at("k").get<int>();
    const auto n = meta.at("n").get<Eigen::Index>();
    const auto dim = meta.at("dim").get<Eigen::Index>();
    const auto targets = meta.at("targets_kg").get<std::vector<double>>();
    require_data(static_cast<Eigen::Index>(targets.size()) == n,
                 "knn.json: target count mismatch");
    m.targets_kg = Eigen::Map<const Vector>(targets.data(), n);
    m.channel_stats.mean =
        meta.at("channel_stats").at("mean").get<std::vector<double>>();
    m.channel_stats.stddev =
        meta.at("channel_stats").at("std").get<std::vector<double>>();

    std::ifstream bin(dir / "knn.f32", std::ios::binary);
    require_data(bin.good(), "cannot open knn.f32");
    m.train.resize(n, dim);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto vals = io::read_f32(bin, static_cast<size_t>(dim));
        for (Eigen::Index c = 0; c < dim; ++c)
            m.train(r, c) = vals[static_cast<size_t>(c)];
    }
    return m;
}

}  // namespace fairload::knn
