#include "fairload/metrics.hpp"

#include <cmath>

namespace fairload::metrics {

namespace {

void check_finite(const Record& r) {
    require_data(std::isfinite(r.y_true_kg) && std::isfinite(r.y_pred_kg),
                 "metrics: non-finite prediction record");
}

struct GroupSums {
    double pred = 0, pos = 0, neg = 0;
    size_t n = 0;
};

GroupSums sums_for(const GroupedPredictions& g, Sex sex) {
    GroupSums s;
    for (const auto& r : g) {
        if (r.sex != sex) continue;
        check_finite(r);
        const double resid = r.y_true_kg - r.y_pred_kg;
        s.pred += r.y_pred_kg;
        s.pos += std::max(0.0, resid);
        s.neg += std::min(0.0, resid);
        ++s.n;
    }
    return s;
}

void require_both(const GroupSums& f, const GroupSums& m) {
    require_data(f.n >= 1, "metrics: female group is empty");
    require_data(m.n >= 1, "metrics: male group is empty");
}

}  // namespace

double mae(std::span<const Record> records) {
    require_data(!records.empty(), "mae: empty record set");
    double sum = 0.0;
    for (const auto& r : records) {
        check_finite(r);
        sum += std::abs(r.y_true_kg - r.y_pred_kg);
    }
    return sum / static_cast<double>(records.size());
}

double statistical_parity(const GroupedPredictions& g) {
    const GroupSums f = sums_for(g, Sex::female);
    const GroupSums m = sums_for(g, Sex::male);
    require_both(f, m);
    return f.pred / f.n - m.pred / m.n;
}

double positive_residual_difference(const GroupedPredictions& g) {
    const GroupSums f = sums_for(g, Sex::female);
    const GroupSums m = sums_for(g, Sex::male);
    require_both(f, m);
    return std::abs(f.pos / f.n - m.pos / m.n);
}

double negative_residual_difference(const GroupedPredictions& g) {
    const GroupSums f = sums_for(g, Sex::female);
    const GroupSums m = sums_for(g, Sex::male);
    require_both(f, m);
    return std::abs(f.neg / f.n - m.neg / m.n);
}

MetricsReport report(const GroupedPredictions& g) {
    require_data(!g.empty(), "report: no records");
    MetricsReport rep;
    rep.mae_overall = mae(g);
    GroupedPredictions females, males;
    for (const auto& r : g) (r.sex == Sex::female ? females : males).push_back(r);
    rep.n_female = females.size();
    rep.n_male = males.size();
    if (!females.empty()) rep.mae_female = mae(females);
    if (!males.empty()) rep.mae_male = mae(males);
    if (!females.empty() && !males.empty()) {
        rep.sp = statistical_parity(g);
        rep.prd = positive_residual_difference(g);
        rep.nrd = negative_residual_difference(g);
    }
    return rep;
}

}  // namespace fairload::metrics
