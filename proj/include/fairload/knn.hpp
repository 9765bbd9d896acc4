#pragma once

#include <filesystem>

#include "fairload/types.hpp"

namespace fairload::knn {

// k-nearest-neighbors regression over flattened normalized gait cycles,
// Euclidean distance, neighbor-mean prediction. Distance ties break toward
// the lower training index.
struct KnnModel {
    Matrix train;        // [N x (128*C)], row-major flattened cycles
    Vector targets_kg;   // [N]
    int k = 5;
    ChannelStats channel_stats;  // normalization applied to the stored rows
};

Vector flatten_cycle(const Matrix& cycle);

// `normalized` must carry channel_stats (the inference-side normalizer).
KnnModel fit(const Dataset& normalized, int k);

// `cycle` must already be normalized with the model's stats.
double predict(const KnnModel& model, const Matrix& cycle);

void save(const std::filesystem::path& dir, const KnnModel& model);
KnnModel load(const std::filesystem::path& dir);

}  // namespace fairload::knn
