#include "fairload/synthgait.hpp"

#include <cmath>
#include <numbers>

#include "fairload/rng.hpp"

namespace fairload::synthgait {

namespace {

// Cycle phase fractions of the five events plus the two mid-swing peaks.
// All event fractions are multiples of 1/16 so they land on exact sample
// indices for periods divisible by 16 (e.g. cadence 1.0 or 1.25 Hz at 80 Hz).
constexpr double kRhs = 0.0;
constexpr double kLto = 0.125;
constexpr double kLeftMidSwing = 0.30;
constexpr double kLhs = 0.5;
constexpr double kRto = 0.625;
constexpr double kRightMidSwing = 0.80;

constexpr double kBumpSigma = 0.03;      // cycle fraction
constexpr double kMidSwingAmp = 3.0;     // rad/s, above detection threshold
constexpr double kToeOffAmp = 1.2;
constexpr double kHeelStrikeAmp = 1.5;

constexpr double kLeadFraction = 0.35;   // lead-in / tail, cycle fraction

constexpr int kRightGyroChannel = 5;     // shank_r gz
constexpr int kLeftGyroChannel = 11;     // shank_l gz

// Key for the fixed channel templates; independent of the config seed so the
// base waveforms are universal constants.
constexpr uint64_t kTemplateKey = 0x7E3AF0C1D2B54968ULL;

double wrapped_bump(double phase, double center) {
    double d = phase - center;
    d -= std::floor(d + 0.5);  // wrap to [-0.5, 0.5)
    return std::exp(-d * d / (2.0 * kBumpSigma * kBumpSigma));
}

double shank_gyro_template(double phase) {
    return kMidSwingAmp * wrapped_bump(phase, kRightMidSwing) -
           kToeOffAmp * wrapped_bump(phase, kRto) -
           kHeelStrikeAmp * wrapped_bump(phase, kRhs);
}

// Constant (DC) term plus three harmonics. The DC term is what entangles the
// multiplicative weight gain with the additive sex offset: both then move a
// channel along the same direction in cycle-feature space.
double harmonic_template(int channel, double phase) {
    rng::Stream ch = rng::Stream(kTemplateKey).child(static_cast<uint64_t>(channel));
    rng::Stream dc = ch.child(static_cast<uint64_t>(0));
    double v = 0.6 + 0.6 * dc.uniform();
    for (int h = 1; h <= 3; ++h) {
        rng::Stream hs = ch.child(static_cast<uint64_t>(h));
        const double amp = (0.4 + 0.8 * hs.uniform()) / h;
        const double theta = 2.0 * std::numbers::pi * hs.uniform();
        v += amp * std::cos(2.0 * std::numbers::pi * h * phase + theta);
    }
    return v;
}

bool contains(const std::vector<int>& v, int x) {
    for (int e : v)
        if (e == x) return true;
    return false;
}

}  // namespace

double template_value(int channel, int n_channels, double phase) {
    (void)n_channels;
    if (channel == kRightGyroChannel) return shank_gyro_template(phase);
    if (channel == kLeftGyroChannel) return shank_gyro_template(phase - 0.5);
    return harmonic_template(channel, phase);
}

std::vector<int> GeneratorConfig::effective_load_channels() const {
    if (!load_channels.empty()) return load_channels;
    std::vector<int> out;
    for (int c = 0; c < n_channels; ++c)
        if (c % kChannelsPerSensor < 3) out.push_back(c);  // accel axes
    return out;
}

std::vector<int> GeneratorConfig::effective_sex_offset_channels() const {
    if (!sex_offset_channels.empty()) return sex_offset_channels;
    std::vector<int> out;
    for (int c = 0; c < n_channels; ++c) {
        const int axis = c % kChannelsPerSensor;
        if (axis == 2 || axis == 4) out.push_back(c);  // az (shared with load), gy
    }
    return out;
}

void GeneratorConfig::validate() const {
    require_data(n_subjects_male >= 0 && n_subjects_female >= 0,
                 "subject counts must be non-negative");
    require_data(n_subjects_male + n_subjects_female >= 1,
                 "need at least one subject");
    require_data(!weights_kg.empty(), "need at least one weight level");
    for (double w : weights_kg)
        require_data(w >= 0.0, "weights must be non-negative");
    require_data(trials_per_condition >= 1, "trials_per_condition must be >= 1");
    require_data(cycles_per_trial >= 1, "cycles_per_trial must be >= 1");
    require_data(sample_rate_hz > 0, "sample rate must be positive");
    require_data(n_channels >= 2 * kChannelsPerSensor &&
                     n_channels % kChannelsPerSensor == 0,
                 "n_channels must be a multiple of 6 and >= 12");
    require_data(noise_std >= 0 && subject_variability_std >= 0,
                 "noise levels must be non-negative");
    require_data(base_cadence_hz > 0, "base cadence must be positive");
    require_data(base_cadence_hz + sex_cadence_delta_hz > 0,
                 "female cadence must be positive");
    for (int c : load_channels)
        require_data(c >= 0 && c < n_channels, "load channel out of range");
    for (int c : sex_offset_channels)
        require_data(c >= 0 && c < n_channels, "sex offset channel out of range");
}

GeneratedData generate_dataset(const GeneratorConfig& config) {
    config.validate();
    const rng::Stream root{config.seed};
    const auto load = config.effective_load_channels();
    const auto sexed = config.effective_sex_offset_channels();
    const auto layout = default_sensor_layout(config.n_channels);

    GeneratedData out;
    for (Sex sex : {Sex::male, Sex::female}) {
        const int n_subj =
            sex == Sex::male ? config.n_subjects_male : config.n_subjects_female;
        const rng::Stream sex_stream =
            root.child(sex == Sex::male ? "male" : "female");
        for (int si = 0; si < n_subj; ++si) {
            rng::Stream subj = sex_stream.child(static_cast<uint64_t>(si));
            std::vector<double> channel_offset(config.n_channels);
            for (int c = 0; c < config.n_channels; ++c)
                channel_offset[c] = config.subject_variability_std * subj.normal();
            const double cadence_jitter =
                0.1 * config.subject_variability_std * subj.normal();

            const double cadence =
                config.base_cadence_hz +
                (sex == Sex::female ? config.sex_cadence_delta_hz : 0.0) +
                cadence_jitter;
            require_data(cadence > 0, "subject cadence is non-positive");
            const double period = config.sample_rate_hz / cadence;
            const int lead = static_cast<int>(std::lround(kLeadFraction * period));
            const int core =
                static_cast<int>(std::lround(config.cycles_per_trial * period));
            const int n_samples = lead + core + lead;

            char sid[16];
            std::snprintf(sid, sizeof sid, "%c%02d", sex == Sex::male ? 'M' : 'F',
                          si + 1);

            for (size_t wi = 0; wi < config.weights_kg.size(); ++wi) {
                const double weight = config.weights_kg[wi];
                const double gain = 1.0 + config.weight_amplitude_gain * weight;
                for (int rep = 0; rep < config.trials_per_condition; ++rep) {
                    rng::Stream noise = subj.child("noise")
                                            .child(static_cast<uint64_t>(wi))
                                            .child(static_cast<uint64_t>(rep));
                    RawTrial trial;
                    trial.samples.resize(n_samples, config.n_channels);
                    trial.sample_rate_hz = config.sample_rate_hz;
                    trial.sensors = layout;
                    trial.subject_id = sid;
                    trial.trial_id = std::string(sid) + "_w" + std::to_string(wi) +
                                     "_r" + std::to_string(rep);
                    trial.sex = sex;
                    trial.weight_kg = weight;

                    for (int t = 0; t < n_samples; ++t) {
                        const double phase = (t - lead) / period;
                        for (int c = 0; c < config.n_channels; ++c) {
                            double v = template_value(c, config.n_channels, phase);
                            if (contains(load, c)) v *= gain;
                            if (sex == Sex::female && contains(sexed, c))
                                v += config.sex_channel_offset;
                            v += channel_offset[c];
                            if (config.noise_std > 0)
                                v += config.noise_std * noise.normal();
                            trial.samples(t, c) = v;
                        }
                    }

                    GaitEvents ev;
                    std::vector<CycleTruth> truths;
                    for (int k = 0; k < config.cycles_per_trial; ++k) {
                        auto at = [&](double frac) {
                            return lead +
                                   static_cast<int>(std::lround((k + frac) * period));
                        };
                        CycleEvents e;
                        e.rhs = at(kRhs);
                        e.lto = at(kLto);
                        e.lhs = at(kLhs);
                        e.rto = at(kRto);
                        e.next_rhs = at(1.0);
                        ev.cycles.push_back(e);
                        truths.push_back({cadence, gain});
                    }
                    out.truth.events.push_back(std::move(ev));
                    out.truth.cycle_params.push_back(std::move(truths));
                    out.trials.push_back(std::move(trial));
                }
            }
        }
    }
    return out;
}

ProcessedData generate_processed(const GeneratorConfig& config,
                                 const signal::PipelineParams& pipeline) {
    GeneratedData gen = generate_dataset(config);
    ProcessedData out;
    out.dataset = signal::build_dataset(gen.trials, pipeline);
    out.truth = std::move(gen.truth);
    return out;
}

}  // namespace fairload::synthgait
