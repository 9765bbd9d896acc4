#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairload/errors.hpp"

namespace fairload {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Sex { male, female };

inline const char* to_string(Sex s) { return s == Sex::male ? "male" : "female"; }

inline Sex sex_from_string(std::string_view s) {
    if (s == "male" || s == "m" || s == "M") return Sex::male;
    if (s == "female" || s == "f" || s == "F") return Sex::female;
    throw DataError("unknown sex label: " + std::string(s));
}

// Fixed cycle length after resampling.
constexpr int kCycleLength = 128;
constexpr int kChannelsPerSensor = 6;  // ax ay az gx gy gz

struct SensorInfo {
    std::string name;
    int channel_offset = 0;
};

struct RawTrial {
    Matrix samples;  // [T x C], C = sensors * 6
    double sample_rate_hz = 80.0;
    std::vector<SensorInfo> sensors;
    std::string subject_id;
    std::string trial_id;
    Sex sex = Sex::male;
    double weight_kg = 0.0;

    int n_samples() const { return static_cast<int>(samples.rows()); }
    int n_channels() const { return static_cast<int>(samples.cols()); }

    // axis: 0..2 accel, 3..5 gyro (5 = sagittal angular velocity).
    int channel(std::string_view sensor_name, int axis) const {
        for (const auto& s : sensors)
            if (s.name == sensor_name) return s.channel_offset + axis;
        throw DataError("sensor not found in layout: " + std::string(sensor_name));
    }
};

void validate_trial(const RawTrial& trial);

struct CycleEvents {
    int rhs = 0, lto = 0, lhs = 0, rto = 0, next_rhs = 0;
};

inline bool ordered(const CycleEvents& e) {
    return e.rhs < e.lto && e.lto < e.lhs && e.lhs < e.rto && e.rto < e.next_rhs;
}

struct GaitEvents {
    std::vector<CycleEvents> cycles;
};

struct GaitCycle {
    Matrix data;  // [kCycleLength x C]
    std::string subject_id;
    std::string trial_id;
    Sex sex = Sex::male;
    double weight_kg = 0.0;
    int cycle_index = 0;
};

struct SubjectInfo {
    std::string id;
    Sex sex = Sex::male;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct Dataset {
    std::vector<GaitCycle> cycles;
    std::vector<SubjectInfo> subjects;
    std::vector<std::string> channel_names;
    std::optional<ChannelStats> channel_stats;

    int n_channels() const {
        return cycles.empty() ? static_cast<int>(channel_names.size())
                              : static_cast<int>(cycles.front().data.cols());
    }
    size_t n_cycles() const { return cycles.size(); }

    const SubjectInfo* find_subject(std::string_view id) const {
        for (const auto& s : subjects)
            if (s.id == id) return &s;
        return nullptr;
    }
};

void validate_dataset(const Dataset& ds);

// Default 6-channel-per-sensor layout; the first two sensors carry the gait
// event signals (right/left shank sagittal gyro = axis 5).
std::vector<SensorInfo> default_sensor_layout(int n_channels);
std::vector<std::string> channel_names_for(const std::vector<SensorInfo>& sensors);

}  // namespace fairload
