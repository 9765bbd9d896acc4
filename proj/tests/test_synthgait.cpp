#include <doctest.h>

#include <cmath>

#include "fairload/signal.hpp"
#include "fairload/synthgait.hpp"

using namespace fairload;
using synthgait::GeneratorConfig;

namespace {

GeneratorConfig tiny() {
    GeneratorConfig cfg;
    cfg.n_subjects_male = 1;
    cfg.n_subjects_female = 1;
    cfg.weights_kg = {4.5};
    cfg.cycles_per_trial = 3;
    cfg.n_channels = 12;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("generator is bit-deterministic") {
    const auto a = synthgait::generate_dataset(tiny());
    const auto b = synthgait::generate_dataset(tiny());
    REQUIRE(a.trials.size() == b.trials.size());
    for (size_t i = 0; i < a.trials.size(); ++i)
        CHECK((a.trials[i].samples - b.trials[i].samples).cwiseAbs().maxCoeff() ==
              0.0);
}

TEST_CASE("with all effects disabled every cycle equals the base template") {
    GeneratorConfig cfg = tiny();
    cfg.n_subjects_male = 2;
    cfg.noise_std = 0.0;
    cfg.subject_variability_std = 0.0;
    cfg.weight_amplitude_gain = 0.0;
    cfg.sex_cadence_delta_hz = 0.0;
    cfg.sex_channel_offset = 0.0;
    const auto gen = synthgait::generate_dataset(cfg);

    // expected cycle: template sampled at the embedded cycle, resampled the
    // same way the pipeline does
    const auto& t0 = gen.trials[0];
    const auto ev0 = gen.truth.events[0].cycles[0];
    Matrix raw = t0.samples.middleRows(ev0.rhs, ev0.next_rhs - ev0.rhs);
    const Matrix expected = signal::resample_cycle(raw);

    for (size_t ti = 0; ti < gen.trials.size(); ++ti) {
        for (const auto& e : gen.truth.events[ti].cycles) {
            Matrix seg =
                gen.trials[ti].samples.middleRows(e.rhs, e.next_rhs - e.rhs);
            const Matrix got = signal::resample_cycle(seg);
            CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-6);
        }
    }

    // and the template matches the generator's exported template function
    const double period = 80.0;  // 1 Hz at 80 Hz
    for (int c = 0; c < cfg.n_channels; ++c)
        for (int t = ev0.rhs; t < ev0.next_rhs; ++t) {
            const double phase = (t - ev0.rhs) / period;
            CHECK(t0.samples(t, c) ==
                  doctest::Approx(synthgait::template_value(c, cfg.n_channels, phase))
                      .epsilon(1e-9));
        }
}

TEST_CASE("cadence delta shifts mean cycle duration as predicted") {
    GeneratorConfig cfg;
    cfg.n_subjects_male = 5;
    cfg.n_subjects_female = 5;
    cfg.weights_kg = {4.5};
    cfg.trials_per_condition = 2;
    cfg.cycles_per_trial = 25;
    cfg.n_channels = 12;
    cfg.sex_cadence_delta_hz = 0.2;
    cfg.subject_variability_std = 0.0;
    cfg.noise_std = 0.0;
    cfg.seed = 10;
    const auto gen = synthgait::generate_dataset(cfg);

    double male_sum = 0, female_sum = 0;
    int male_n = 0, female_n = 0;
    for (size_t ti = 0; ti < gen.trials.size(); ++ti)
        for (const auto& e : gen.truth.events[ti].cycles) {
            const double dur = (e.next_rhs - e.rhs) / cfg.sample_rate_hz;
            if (gen.trials[ti].sex == Sex::male) {
                male_sum += dur;
                ++male_n;
            } else {
                female_sum += dur;
                ++female_n;
            }
        }
    CHECK(male_n + female_n >= 500);
    const double observed = male_sum / male_n - female_sum / female_n;
    const double expected = 1.0 / 1.0 - 1.0 / 1.2;
    CHECK(std::abs(observed - expected) <= 0.02 * expected);
}

TEST_CASE("subject/weight/trial counting and labels") {
    GeneratorConfig cfg;
    cfg.n_subjects_male = 2;
    cfg.n_subjects_female = 2;
    cfg.weights_kg = {4.5, 13.6, 22.7};
    cfg.trials_per_condition = 1;
    cfg.cycles_per_trial = 5;
    cfg.n_channels = 12;
    cfg.seed = 4;
    const auto data = synthgait::generate_processed(cfg);
    CHECK(data.dataset.cycles.size() == 60u);
    CHECK(data.dataset.subjects.size() == 4u);

    GeneratorConfig males_only = cfg;
    males_only.n_subjects_female = 0;
    const auto m = synthgait::generate_processed(males_only);
    for (const auto& s : m.dataset.subjects) CHECK(s.sex == Sex::male);

    GeneratorConfig one_weight = cfg;
    one_weight.weights_kg = {4.5};
    const auto w = synthgait::generate_processed(one_weight);
    for (const auto& c : w.dataset.cycles) CHECK(c.weight_kg == 4.5);
}

TEST_CASE("zero subjects or zero weights are rejected") {
    GeneratorConfig cfg = tiny();
    cfg.n_subjects_male = 0;
    cfg.n_subjects_female = 0;
    CHECK_THROWS_AS(synthgait::generate_dataset(cfg), DataError);
    GeneratorConfig cfg2 = tiny();
    cfg2.weights_kg.clear();
    CHECK_THROWS_AS(synthgait::generate_dataset(cfg2), DataError);
}

TEST_CASE("embedded events satisfy ordering and cycle counts") {
    GeneratorConfig cfg = tiny();
    cfg.cycles_per_trial = 7;
    cfg.noise_std = 0.3;
    cfg.subject_variability_std = 0.2;
    const auto gen = synthgait::generate_dataset(cfg);
    for (size_t ti = 0; ti < gen.trials.size(); ++ti) {
        CHECK(gen.truth.events[ti].cycles.size() ==
              static_cast<size_t>(cfg.cycles_per_trial));
        int prev_end = -1;
        for (const auto& e : gen.truth.events[ti].cycles) {
            CHECK(ordered(e));
            CHECK(e.rhs >= prev_end);
            CHECK(e.next_rhs <= gen.trials[ti].n_samples());
            prev_end = e.next_rhs;
        }
    }
}

TEST_CASE("load-channel amplitude grows with weight") {
    GeneratorConfig cfg;
    cfg.n_subjects_male = 1;
    cfg.n_subjects_female = 0;
    cfg.weights_kg = {4.5, 13.6, 22.7};
    cfg.cycles_per_trial = 4;
    cfg.n_channels = 12;
    cfg.noise_std = 0.0;
    cfg.subject_variability_std = 0.0;
    cfg.sex_channel_offset = 0.0;
    cfg.sex_cadence_delta_hz = 0.0;
    cfg.seed = 6;
    const auto gen = synthgait::generate_dataset(cfg);
    const auto load = cfg.effective_load_channels();
    std::vector<double> mean_abs;
    for (const auto& t : gen.trials) {
        double s = 0;
        for (int c : load) s += t.samples.col(c).cwiseAbs().mean();
        mean_abs.push_back(s / load.size());
    }
    REQUIRE(mean_abs.size() == 3);
    CHECK(mean_abs[0] < mean_abs[1]);
    CHECK(mean_abs[1] < mean_abs[2]);
}

TEST_CASE("sex offset touches only the configured channels") {
    GeneratorConfig cfg;
    cfg.n_subjects_male = 1;
    cfg.n_subjects_female = 1;
    cfg.weights_kg = {4.5};
    cfg.cycles_per_trial = 3;
    cfg.n_channels = 12;
    cfg.noise_std = 0.0;
    cfg.subject_variability_std = 0.0;
    cfg.sex_cadence_delta_hz = 0.0;
    cfg.weight_amplitude_gain = 0.0;
    cfg.seed = 12;
    const auto gen = synthgait::generate_dataset(cfg);
    REQUIRE(gen.trials.size() == 2);
    const auto& male = gen.trials[0];
    const auto& female = gen.trials[1];
    REQUIRE(male.n_samples() == female.n_samples());
    const auto offset_channels = cfg.effective_sex_offset_channels();
    for (int c = 0; c < cfg.n_channels; ++c) {
        const double diff =
            (female.samples.col(c) - male.samples.col(c)).cwiseAbs().maxCoeff();
        bool offset = false;
        for (int oc : offset_channels) offset |= (oc == c);
        if (offset)
            CHECK(diff == doctest::Approx(cfg.sex_channel_offset).epsilon(1e-12));
        else
            CHECK(diff == 0.0);
    }
}
