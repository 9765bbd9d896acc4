#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairload/types.hpp"

namespace fairload::metrics {

struct Record {
    std::string subject_id;
    std::string trial_id;
    Sex sex = Sex::male;
    double y_true_kg = 0.0;
    double y_pred_kg = 0.0;
};

using GroupedPredictions = std::vector<Record>;

struct MetricsReport {
    double mae_overall = 0.0;
    std::optional<double> mae_female, mae_male;
    std::optional<double> sp, prd, nrd;
    size_t n_female = 0, n_male = 0;
};

double mae(std::span<const Record> records);

// Eq.-2 order: mean prediction over the female set minus the male set.
double statistical_parity(const GroupedPredictions& g);

// |mean_f max(0, y - yhat) - mean_m max(0, y - yhat)|
double positive_residual_difference(const GroupedPredictions& g);

// |mean_f min(0, y - yhat) - mean_m min(0, y - yhat)|
double negative_residual_difference(const GroupedPredictions& g);

// Fairness fields are filled only when both groups are non-empty; per-sex
// MAE fields when the corresponding group is non-empty.
MetricsReport report(const GroupedPredictions& g);

}  // namespace fairload::metrics
