#pragma once

#include <cstdint>
#include <vector>

#include "fairload/signal.hpp"
#include "fairload/types.hpp"

namespace fairload::synthgait {

// Seeded synthetic gait generator. Each trial is a sum of fixed periodic
// per-channel templates, weight-dependent amplitude scaling on load-bearing
// channels, sex-dependent cadence and channel offsets, per-subject random
// effects, and white Gaussian noise. The two shank sagittal gyro channels
// carry narrow bump templates whose extrema sit exactly on the embedded
// gait events.
struct GeneratorConfig {
    int n_subjects_male = 8;
    int n_subjects_female = 8;
    int trials_per_condition = 1;
    std::vector<double> weights_kg = {4.5, 13.6, 22.7};
    int cycles_per_trial = 5;
    double sample_rate_hz = 80.0;
    int n_channels = 72;

    double base_cadence_hz = 1.0;
    double weight_amplitude_gain = 0.02;  // relative gain per kg, load channels
    double sex_cadence_delta_hz = 0.25;   // added to female cadence
    double sex_channel_offset = 0.4;      // added on offset channels, females
    // channel subsets; empty = defaults (load: accel axes; offset: az + gy,
    // so the weight and sex effects share the az channels)
    std::vector<int> load_channels;
    std::vector<int> sex_offset_channels;

    double subject_variability_std = 0.05;
    double noise_std = 0.05;
    uint64_t seed = 0;

    std::vector<int> effective_load_channels() const;
    std::vector<int> effective_sex_offset_channels() const;
    void validate() const;
};

struct CycleTruth {
    double cadence_hz = 0.0;
    double amplitude_gain = 1.0;
};

struct GroundTruth {
    // parallel to the generated trial list
    std::vector<GaitEvents> events;
    std::vector<std::vector<CycleTruth>> cycle_params;
};

struct GeneratedData {
    std::vector<RawTrial> trials;
    GroundTruth truth;
};

GeneratedData generate_dataset(const GeneratorConfig& config);

// generate_dataset followed by the signal pipeline; ground truth retained.
struct ProcessedData {
    Dataset dataset;
    GroundTruth truth;
};

ProcessedData generate_processed(const GeneratorConfig& config,
                                 const signal::PipelineParams& pipeline = {});

// The noise-free periodic template value of one channel at cycle phase
// [0, 1); exposed so tests can compare cycles against the exact template.
double template_value(int channel, int n_channels, double phase);

}  // namespace fairload::synthgait
