#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fairload/metrics.hpp"
#include "fairload/rng.hpp"
#include "fairload/selftest.hpp"

using namespace fairload;
using namespace fairload::metrics;

namespace {

Record rec(Sex sex, double y, double yhat) {
    static int n = 0;
    return {"s" + std::to_string(n), "t" + std::to_string(n++), sex, y, yhat};
}

}  // namespace

TEST_CASE("mae examples") {
    GroupedPredictions g{rec(Sex::male, 10, 12), rec(Sex::male, 20, 16)};
    CHECK(mae(g) == doctest::Approx(3.0));

    GroupedPredictions perfect{rec(Sex::male, 5, 5), rec(Sex::female, 7, 7)};
    CHECK(mae(perfect) == 0.0);

    // translation invariance
    GroupedPredictions shifted = g;
    for (auto& r : shifted) {
        r.y_true_kg += 11.5;
        r.y_pred_kg += 11.5;
    }
    CHECK(mae(shifted) == doctest::Approx(mae(g)).epsilon(1e-12));

    CHECK_THROWS_AS(mae(GroupedPredictions{}), DataError);
}

TEST_CASE("statistical parity follows the female-minus-male convention") {
    GroupedPredictions g{rec(Sex::female, 0, 10), rec(Sex::female, 0, 12),
                         rec(Sex::male, 0, 8), rec(Sex::male, 0, 10)};
    CHECK(statistical_parity(g) == doctest::Approx(2.0));

    // identical prediction multisets -> 0
    GroupedPredictions same{rec(Sex::female, 0, 4), rec(Sex::female, 0, 6),
                            rec(Sex::male, 0, 6), rec(Sex::male, 0, 4)};
    CHECK(statistical_parity(same) == doctest::Approx(0.0));

    // swapping group labels negates SP
    GroupedPredictions swapped = g;
    for (auto& r : swapped) r.sex = r.sex == Sex::male ? Sex::female : Sex::male;
    CHECK(statistical_parity(swapped) ==
          doctest::Approx(-statistical_parity(g)).epsilon(1e-12));

    GroupedPredictions one_group{rec(Sex::male, 0, 1)};
    CHECK_THROWS_AS(statistical_parity(one_group), DataError);
}

TEST_CASE("PRD and NRD worked examples") {
    // female residuals y - yhat = [2, -1]; male [0, 0]
    GroupedPredictions g{rec(Sex::female, 10, 8), rec(Sex::female, 10, 11),
                         rec(Sex::male, 5, 5), rec(Sex::male, 6, 6)};
    CHECK(positive_residual_difference(g) == doctest::Approx(1.0));

    // female residuals [-3, 1]; male [0, 0] -> NRD = |-1.5 - 0| = 1.5
    GroupedPredictions h{rec(Sex::female, 10, 13), rec(Sex::female, 10, 9),
                         rec(Sex::male, 5, 5), rec(Sex::male, 6, 6)};
    CHECK(negative_residual_difference(h) == doctest::Approx(1.5));

    // overestimation everywhere -> PRD 0; underestimation everywhere -> NRD 0
    GroupedPredictions over{rec(Sex::female, 5, 9), rec(Sex::male, 5, 7)};
    CHECK(positive_residual_difference(over) == 0.0);
    GroupedPredictions under{rec(Sex::female, 9, 5), rec(Sex::male, 7, 5)};
    CHECK(negative_residual_difference(under) == 0.0);

    // label swap invariance (absolute value)
    GroupedPredictions swapped = h;
    for (auto& r : swapped) r.sex = r.sex == Sex::male ? Sex::female : Sex::male;
    CHECK(negative_residual_difference(swapped) ==
          doctest::Approx(negative_residual_difference(h)).epsilon(1e-12));

    // positive homogeneity of NRD in the residual scale
    GroupedPredictions scaled = h;
    for (auto& r : scaled) r.y_pred_kg = r.y_true_kg - 3.0 * (r.y_true_kg - r.y_pred_kg);
    CHECK(negative_residual_difference(scaled) ==
          doctest::Approx(3.0 * negative_residual_difference(h)).epsilon(1e-12));
}

TEST_CASE("report aggregates all fields with single-record groups") {
    GroupedPredictions g{rec(Sex::female, 10, 10), rec(Sex::male, 20, 20)};
    const MetricsReport r = report(g);
    CHECK(r.mae_overall == 0.0);
    CHECK(*r.mae_female == 0.0);
    CHECK(*r.mae_male == 0.0);
    CHECK(*r.prd == 0.0);
    CHECK(*r.nrd == 0.0);
    CHECK(*r.sp == doctest::Approx(10.0 - 20.0));  // SP reflects label means
    CHECK(r.n_female == 1);
    CHECK(r.n_male == 1);

    // single-sex input: fairness fields absent, MAE present
    GroupedPredictions males{rec(Sex::male, 5, 6), rec(Sex::male, 7, 6)};
    const MetricsReport rm = report(males);
    CHECK(!rm.sp.has_value());
    CHECK(!rm.mae_female.has_value());
    CHECK(*rm.mae_male == doctest::Approx(1.0));
}

TEST_CASE("metrics are permutation invariant and SP shifts by group constants") {
    rng::Stream rs{3001};
    GroupedPredictions g;
    for (int i = 0; i < 50; ++i)
        g.push_back(rec(rs.below(2) ? Sex::female : Sex::male,
                        rs.uniform(0, 25), rs.uniform(-2, 27)));
    bool has_f = false, has_m = false;
    for (auto& r : g) (r.sex == Sex::female ? has_f : has_m) = true;
    REQUIRE(has_f);
    REQUIRE(has_m);

    GroupedPredictions shuffled = g;
    rs.shuffle(shuffled);
    CHECK(statistical_parity(shuffled) ==
          doctest::Approx(statistical_parity(g)).epsilon(1e-12));
    CHECK(mae(shuffled) == doctest::Approx(mae(g)).epsilon(1e-12));
    CHECK(positive_residual_difference(shuffled) ==
          doctest::Approx(positive_residual_difference(g)).epsilon(1e-12));

    // constant added to every prediction leaves SP unchanged
    GroupedPredictions plus = g;
    for (auto& r : plus) r.y_pred_kg += 4.2;
    CHECK(statistical_parity(plus) ==
          doctest::Approx(statistical_parity(g)).epsilon(1e-9));

    // group-specific constants shift SP by exactly cf - cm
    GroupedPredictions grouped = g;
    for (auto& r : grouped) r.y_pred_kg += r.sex == Sex::female ? 1.5 : -0.5;
    CHECK(statistical_parity(grouped) ==
          doctest::Approx(statistical_parity(g) + 2.0).epsilon(1e-9));
}

TEST_CASE("metric oracle suite (1000 random instances) passes") {
    const auto r = selftest::check_metric_oracle();
    INFO(r.detail);
    CHECK(r.pass);
}
