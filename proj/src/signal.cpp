#include "fairload/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <numbers>

namespace fairload::signal {

namespace {

constexpr int kFilterOrder = 2;
constexpr int kEffectiveOrder = 2 * kFilterOrder;       // forward + backward
constexpr int kPadLen = 3 * kEffectiveOrder;            // odd-reflection samples per edge

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw DataError(std::string(what) + ": non-finite sample");
}

// One causal pass, direct form II transposed, state initialized to the
// steady-state response of x.front() so constant signals pass unchanged.
std::vector<double> biquad_pass(const Biquad& f, std::span<const double> x) {
    const double g = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);  // DC gain
    double s1 = (f.b1 + f.b2 - (f.a1 + f.a2) * g) * x.front();
    double s2 = (f.b2 - f.a2 * g) * x.front();
    std::vector<double> y(x.size());
    for (size_t n = 0; n < x.size(); ++n) {
        const double yn = f.b0 * x[n] + s1;
        s1 = f.b1 * x[n] - f.a1 * yn + s2;
        s2 = f.b2 * x[n] - f.a2 * yn;
        y[n] = yn;
    }
    return y;
}

std::vector<double> reversed(std::vector<double> v) {
    std::reverse(v.begin(), v.end());
    return v;
}

// Odd reflection about the end samples, kPadLen each side.
std::vector<double> odd_reflect_pad(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> p(x.size() + 2 * kPadLen);
    for (int i = 0; i < kPadLen; ++i) p[i] = 2.0 * x[0] - x[kPadLen - i];
    for (int i = 0; i < n; ++i) p[kPadLen + i] = x[i];
    for (int i = 0; i < kPadLen; ++i)
        p[kPadLen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    return p;
}

bool is_local_max(std::span<const double> x, int i) {
    return x[i] > x[i - 1] && x[i] > x[i + 1];
}

bool is_local_min(std::span<const double> x, int i) {
    return x[i] < x[i - 1] && x[i] < x[i + 1];
}

// First strict local minimum after index `from` (exclusive), or -1.
int first_min_after(std::span<const double> x, int from) {
    for (int i = from + 1; i + 1 < static_cast<int>(x.size()); ++i)
        if (is_local_min(x, i)) return i;
    return -1;
}

// Last strict local minimum before index `before` (exclusive), or -1.
int last_min_before(std::span<const double> x, int before) {
    for (int i = before - 1; i >= 1; --i)
        if (is_local_min(x, i)) return i;
    return -1;
}

}  // namespace

Biquad butter2_design(double sample_rate_hz, double cutoff_hz) {
    require_data(sample_rate_hz > 0, "sample rate must be positive");
    require_data(cutoff_hz > 0 && cutoff_hz < sample_rate_hz / 2.0,
                 "cutoff must lie in (0, Nyquist)");
    const double w = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    const double w2 = w * w;
    const double d = 1.0 + std::numbers::sqrt2 * w + w2;
    return Biquad{w2 / d, 2.0 * w2 / d, w2 / d, 2.0 * (w2 - 1.0) / d,
                  (1.0 - std::numbers::sqrt2 * w + w2) / d};
}

double biquad_gain2(const Biquad& f, double f_hz, double sample_rate_hz) {
    const std::complex<double> z =
        std::polar(1.0, -2.0 * std::numbers::pi * f_hz / sample_rate_hz);
    const std::complex<double> num = f.b0 + f.b1 * z + f.b2 * z * z;
    const std::complex<double> den = 1.0 + f.a1 * z + f.a2 * z * z;
    return std::norm(num / den);
}

double zero_phase_gain(double f_hz, double sample_rate_hz, double cutoff_hz) {
    return biquad_gain2(butter2_design(sample_rate_hz, cutoff_hz), f_hz,
                        sample_rate_hz);
}

std::vector<double> butterworth_lowpass(std::span<const double> x,
                                        double sample_rate_hz,
                                        double cutoff_hz) {
    require_data(x.size() >= static_cast<size_t>(3 * kEffectiveOrder + 1),
                 "signal too short to filter (need >= 13 samples)");
    const Biquad f = butter2_design(sample_rate_hz, cutoff_hz);
    check_finite(x, "butterworth_lowpass");

    const std::vector<double> p = odd_reflect_pad(x);
    // forward-then-backward and backward-then-forward, averaged: identical
    // magnitude response, exactly symmetric under time reversal.
    const std::vector<double> fb =
        reversed(biquad_pass(f, reversed(biquad_pass(f, p))));
    const std::vector<double> bf =
        biquad_pass(f, reversed(biquad_pass(f, reversed(p))));

    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        y[i] = 0.5 * (fb[kPadLen + i] + bf[kPadLen + i]);
    return y;
}

std::vector<int> find_peaks(std::span<const double> x, double height,
                            int separation) {
    std::vector<int> candidates;
    for (int i = 1; i + 1 < static_cast<int>(x.size()); ++i)
        if (x[i] > height && is_local_max(x, i)) candidates.push_back(i);

    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](int a, int b) { return x[a] > x[b]; });
    std::vector<int> accepted;
    for (int c : candidates) {
        bool ok = true;
        for (int a : accepted)
            if (std::abs(a - c) < separation) { ok = false; break; }
        if (ok) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

GaitEvents detect_gait_events(std::span<const double> right_shank_gyro,
                              std::span<const double> left_shank_gyro,
                              double sample_rate_hz,
                              const DetectionParams& params) {
    require_data(right_shank_gyro.size() == left_shank_gyro.size(),
                 "shank gyro signals differ in length");
    require_data(right_shank_gyro.size() >= static_cast<size_t>(2 * sample_rate_hz),
                 "need at least 2 s of samples for event detection");
    check_finite(right_shank_gyro, "detect_gait_events(right)");
    check_finite(left_shank_gyro, "detect_gait_events(left)");

    const int sep =
        std::max(1, static_cast<int>(std::lround(params.min_peak_separation_s *
                                                 sample_rate_hz)));
    const auto right_peaks =
        find_peaks(right_shank_gyro, params.min_peak_height, sep);
    const auto left_peaks =
        find_peaks(left_shank_gyro, params.min_peak_height, sep);

    GaitEvents out;
    for (size_t j = 0; j + 1 < right_peaks.size(); ++j) {
        CycleEvents e;
        e.rhs = first_min_after(right_shank_gyro, right_peaks[j]);
        e.next_rhs = first_min_after(right_shank_gyro, right_peaks[j + 1]);
        if (e.rhs < 0 || e.next_rhs < 0) continue;
        // the left mid-swing peak falling inside this cycle
        int left_peak = -1;
        for (int p : left_peaks)
            if (p > e.rhs && p < e.next_rhs) { left_peak = p; break; }
        if (left_peak < 0) continue;
        e.lto = last_min_before(left_shank_gyro, left_peak);
        e.lhs = first_min_after(left_shank_gyro, left_peak);
        e.rto = last_min_before(right_shank_gyro, right_peaks[j + 1]);
        if (e.lto < 0 || e.lhs < 0 || e.rto < 0) continue;
        if (!ordered(e)) continue;
        if (!out.cycles.empty() && e.rhs < out.cycles.back().next_rhs) continue;
        out.cycles.push_back(e);
    }
    return out;
}

std::vector<Matrix> segment_cycles(const RawTrial& trial, const GaitEvents& events) {
    std::vector<Matrix> out;
    out.reserve(events.cycles.size());
    for (const auto& e : events.cycles) {
        require_data(ordered(e), "gait event tuple violates ordering invariant");
        require_data(e.rhs >= 0 && e.next_rhs <= trial.n_samples(),
                     "gait events out of trial range");
        out.push_back(trial.samples.middleRows(e.rhs, e.next_rhs - e.rhs));
    }
    return out;
}

Matrix resample_cycle(const Matrix& cycle) {
    const int n = static_cast<int>(cycle.rows());
    require_data(n >= 2, "resample_cycle needs at least 2 rows");
    const int c = static_cast<int>(cycle.cols());
    Matrix out(kCycleLength, c);
    for (int j = 0; j < kCycleLength; ++j) {
        const double q = static_cast<double>(j) * (n - 1) / (kCycleLength - 1);
        int i0 = static_cast<int>(q);
        if (i0 >= n - 1) {
            out.row(j) = cycle.row(n - 1);
            continue;
        }
        const double t = q - i0;
        out.row(j) = (1.0 - t) * cycle.row(i0) + t * cycle.row(i0 + 1);
    }
    return out;
}

Dataset build_dataset(const std::vector<RawTrial>& trials,
                      const PipelineParams& params) {
    require_data(!trials.empty(), "build_dataset: trial list is empty");
    Dataset ds;
    for (const auto& trial : trials) {
        validate_trial(trial);
        if (!ds.find_subject(trial.subject_id))
            ds.subjects.push_back({trial.subject_id, trial.sex});
        else
            require_data(ds.find_subject(trial.subject_id)->sex == trial.sex,
                         "inconsistent sex label for subject " + trial.subject_id);
        if (ds.channel_names.empty())
            ds.channel_names = channel_names_for(trial.sensors);

        // filter every channel once; the filtered copy feeds both event
        // detection and the feature cycles
        Matrix filtered(trial.samples.rows(), trial.samples.cols());
        for (int c = 0; c < trial.n_channels(); ++c) {
            std::vector<double> col(trial.samples.col(c).data(),
                                    trial.samples.col(c).data() + trial.n_samples());
            const auto f = butterworth_lowpass(col, trial.sample_rate_hz,
                                               params.filter_cutoff_hz);
            for (int t = 0; t < trial.n_samples(); ++t) filtered(t, c) = f[t];
        }

        const int rc = trial.channel(params.right_shank_sensor, params.sagittal_axis);
        const int lc = trial.channel(params.left_shank_sensor, params.sagittal_axis);
        std::vector<double> right(filtered.col(rc).data(),
                                  filtered.col(rc).data() + filtered.rows());
        std::vector<double> left(filtered.col(lc).data(),
                                 filtered.col(lc).data() + filtered.rows());
        const GaitEvents events = detect_gait_events(
            right, left, trial.sample_rate_hz, params.detection);
        if (events.cycles.empty()) {
            if (!params.quiet)
                std::cerr << "warn: trial " << trial.trial_id
                          << " yielded zero gait cycles\n";
            continue;
        }

        RawTrial ft = trial;
        ft.samples = filtered;
        const auto raw_cycles = segment_cycles(ft, events);
        for (size_t k = 0; k < raw_cycles.size(); ++k) {
            GaitCycle gc;
            gc.data = resample_cycle(raw_cycles[k]);
            gc.subject_id = trial.subject_id;
            gc.trial_id = trial.trial_id;
            gc.sex = trial.sex;
            gc.weight_kg = trial.weight_kg;
            gc.cycle_index = static_cast<int>(k);
            ds.cycles.push_back(std::move(gc));
        }
    }
    validate_dataset(ds);
    return ds;
}

Dataset normalize(const Dataset& ds, const std::optional<ChannelStats>& stats) {
    const int c = ds.n_channels();
    ChannelStats st;
    if (stats) {
        require_data(static_cast<int>(stats->mean.size()) == c &&
                         static_cast<int>(stats->stddev.size()) == c,
                     "channel stats dimension mismatch");
        st = *stats;
    } else {
        require_data(!ds.cycles.empty(), "normalize: empty dataset and no stats");
        st.mean.assign(c, 0.0);
        st.stddev.assign(c, 0.0);
        const double n = static_cast<double>(ds.cycles.size()) * kCycleLength;
        for (const auto& gc : ds.cycles)
            for (int ch = 0; ch < c; ++ch) st.mean[ch] += gc.data.col(ch).sum();
        for (int ch = 0; ch < c; ++ch) st.mean[ch] /= n;
        for (const auto& gc : ds.cycles)
            for (int ch = 0; ch < c; ++ch)
                st.stddev[ch] +=
                    (gc.data.col(ch).array() - st.mean[ch]).square().sum();
        for (int ch = 0; ch < c; ++ch) st.stddev[ch] = std::sqrt(st.stddev[ch] / n);
    }

    Dataset out = ds;
    for (auto& gc : out.cycles)
        for (int ch = 0; ch < c; ++ch) {
            gc.data.col(ch).array() -= st.mean[ch];
            if (st.stddev[ch] >= 1e-8) gc.data.col(ch) /= st.stddev[ch];
        }
    out.channel_stats = st;
    return out;
}

Dataset denormalize(const Dataset& ds) {
    require_data(ds.channel_stats.has_value(), "denormalize: dataset has no stats");
    const auto& st = *ds.channel_stats;
    Dataset out = ds;
    for (auto& gc : out.cycles)
        for (int ch = 0; ch < ds.n_channels(); ++ch) {
            if (st.stddev[ch] >= 1e-8) gc.data.col(ch) *= st.stddev[ch];
            gc.data.col(ch).array() += st.mean[ch];
        }
    out.channel_stats.reset();
    return out;
}

}  // namespace fairload::signal
