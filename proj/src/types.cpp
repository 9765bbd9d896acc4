#include "fairload/types.hpp"

namespace fairload {

void validate_trial(const RawTrial& trial) {
    require_data(trial.samples.rows() >= 2, "trial has fewer than 2 samples");
    require_data(trial.samples.cols() % kChannelsPerSensor == 0,
                 "channel count must be a multiple of 6");
    require_data(trial.sample_rate_hz > 0, "sample rate must be positive");
    require_data(trial.samples.allFinite(), "trial contains non-finite samples");
    require_data(!trial.sensors.empty(), "trial has no sensor layout");
    require_data(static_cast<int>(trial.sensors.size()) * kChannelsPerSensor ==
                     trial.samples.cols(),
                 "sensor layout does not cover all channels");
}

void validate_dataset(const Dataset& ds) {
    for (const auto& gc : ds.cycles) {
        require_data(gc.data.rows() == kCycleLength, "cycle length must be 128");
        require_data(gc.data.allFinite(), "cycle contains non-finite values");
        const SubjectInfo* s = ds.find_subject(gc.subject_id);
        require_data(s != nullptr,
                     "cycle subject missing from roster: " + gc.subject_id);
        require_data(s->sex == gc.sex,
                     "cycle sex label disagrees with roster: " + gc.subject_id);
    }
    if (ds.channel_stats) {
        const auto& st = *ds.channel_stats;
        require_data(st.mean.size() == st.stddev.size() &&
                         static_cast<int>(st.mean.size()) == ds.n_channels(),
                     "channel stats dimension mismatch");
    }
}

std::vector<SensorInfo> default_sensor_layout(int n_channels) {
    require_data(n_channels >= 2 * kChannelsPerSensor &&
                     n_channels % kChannelsPerSensor == 0,
                 "need at least two 6-channel sensors (shanks)");
    static const char* kNames[12] = {
        "shank_r", "shank_l", "thigh_r",   "thigh_l",   "foot_r",  "arm_ru",
        "arm_lu",  "arm_rf",  "arm_lf",    "trunk_t6",  "sternum", "sacrum"};
    std::vector<SensorInfo> out;
    const int n_sensors = n_channels / kChannelsPerSensor;
    for (int i = 0; i < n_sensors; ++i) {
        std::string name = i < 12 ? kNames[i] : "sensor_" + std::to_string(i);
        out.push_back({std::move(name), i * kChannelsPerSensor});
    }
    return out;
}

std::vector<std::string> channel_names_for(const std::vector<SensorInfo>& sensors) {
    static const char* kAxes[kChannelsPerSensor] = {"ax", "ay", "az",
                                                    "gx", "gy", "gz"};
    std::vector<std::string> out;
    for (const auto& s : sensors)
        for (const char* a : kAxes) out.push_back(s.name + "." + a);
    return out;
}

}  // namespace fairload
