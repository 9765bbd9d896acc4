#pragma once

#include <span>
#include <vector>

#include "fairload/types.hpp"

namespace fairload::signal {

// Second-order low-pass biquad (bilinear transform design).
struct Biquad {
    double b0, b1, b2, a1, a2;
};

Biquad butter2_design(double sample_rate_hz, double cutoff_hz);

// Magnitude-squared response of one causal pass at frequency f_hz.
double biquad_gain2(const Biquad& bq, double f_hz, double sample_rate_hz);

// Zero-phase attenuation of the filter below (forward + backward pass).
double zero_phase_gain(double f_hz, double sample_rate_hz, double cutoff_hz);

// Zero-lag second-order Butterworth low-pass. Forward and backward passes
// over the signal, odd-reflection edge padding of 3x the effective (4th)
// order, steady-state initial conditions. The two pass orders are averaged,
// which makes the operator exactly symmetric under time reversal.
std::vector<double> butterworth_lowpass(std::span<const double> x,
                                        double sample_rate_hz,
                                        double cutoff_hz);

struct DetectionParams {
    double min_peak_height = 0.8;     // rad/s, mid-swing gyro peak
    double min_peak_separation_s = 0.5;
};

// Strict local maxima above `height`, thinned so accepted peaks are at least
// `separation` samples apart (highest first, ties to the lower index).
std::vector<int> find_peaks(std::span<const double> x, double height,
                            int separation);

// Gait events from the two shank sagittal angular velocity signals (already
// low-pass filtered). Cycle sequence: right heel strike -> left toe-off ->
// left heel strike -> right toe-off -> next right heel strike. Heel strike is
// the first local minimum after a mid-swing peak; toe-off the last local
// minimum before one. Incomplete leading/trailing cycles are dropped.
GaitEvents detect_gait_events(std::span<const double> right_shank_gyro,
                              std::span<const double> left_shank_gyro,
                              double sample_rate_hz,
                              const DetectionParams& params = {});

// One matrix per event tuple, rows [rhs, next_rhs), all channels.
std::vector<Matrix> segment_cycles(const RawTrial& trial, const GaitEvents& events);

// Channel-wise 1D linear interpolation of an [n x C] cycle onto
// kCycleLength equally spaced points over [0, n-1]; endpoints exact.
Matrix resample_cycle(const Matrix& cycle);

struct PipelineParams {
    double filter_cutoff_hz = 6.0;
    DetectionParams detection;
    std::string right_shank_sensor = "shank_r";
    std::string left_shank_sensor = "shank_l";
    int sagittal_axis = 5;  // gyro z within the 6-channel sensor block
    bool quiet = false;
};

// filter -> detect -> segment -> resample for each trial, cycles concatenated
// in trial order. A trial yielding zero cycles is logged, not fatal.
Dataset build_dataset(const std::vector<RawTrial>& trials,
                      const PipelineParams& params = {});

// Z-score per channel. Without `stats`, mean/std are computed over all cycles
// and time steps of `ds` and stored in the result; with `stats` (inference
// path) the given affine map is applied. Channels with std < 1e-8 are
// centered but unscaled.
Dataset normalize(const Dataset& ds,
                  const std::optional<ChannelStats>& stats = std::nullopt);

// Inverse of normalize for round-trip checks.
Dataset denormalize(const Dataset& ds);

}  // namespace fairload::signal
