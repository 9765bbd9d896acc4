#include "fairload/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fairload::io {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "f32 containers are little-endian");

namespace {

constexpr int kFormatVersion = 1;

json load_json(const fs::path& file) {
    std::ifstream in(file);
    require_data(in.good(), "cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + file.string() + ": " + e.what());
    }
    return j;
}

void dump_json(const fs::path& file, const json& j) {
    std::ofstream out(file);
    require_data(out.good(), "cannot write " + file.string());
    out << j.dump(2) << '\n';
}

}  // namespace

void write_f32(std::ostream& os, const double* data, size_t n) {
    std::vector<float> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(n * sizeof(float)));
}

std::vector<double> read_f32(std::istream& is, size_t n) {
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    require_data(static_cast<size_t>(is.gcount()) == n * sizeof(float),
                 "truncated float32 payload");
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = buf[i];
    return out;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
    validate_dataset(ds);
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["n_cycles"] = ds.cycles.size();
    manifest["cycle_length"] = kCycleLength;
    manifest["n_channels"] = ds.n_channels();
    manifest["channel_names"] = ds.channel_names;
    json subjects = json::array();
    for (const auto& s : ds.subjects)
        subjects.push_back({{"id", s.id}, {"sex", to_string(s.sex)}});
    manifest["subjects"] = subjects;
    json labels = json::array();
    for (size_t i = 0; i < ds.cycles.size(); ++i) {
        const auto& c = ds.cycles[i];
        labels.push_back({{"cycle_index", c.cycle_index},
                          {"subject_id", c.subject_id},
                          {"trial_id", c.trial_id},
                          {"weight_kg", c.weight_kg},
                          {"sex", to_string(c.sex)}});
    }
    manifest["labels"] = labels;
    if (ds.channel_stats) {
        manifest["channel_stats"] = {{"mean", ds.channel_stats->mean},
                                     {"std", ds.channel_stats->stddev}};
    }
    dump_json(dir / "manifest.json", manifest);

    std::ofstream bin(dir / "cycles.f32", std::ios::binary);
    require_data(bin.good(), "cannot write cycles.f32");
    std::vector<double> row(ds.n_channels());
    for (const auto& c : ds.cycles)
        for (int t = 0; t < kCycleLength; ++t) {
            for (int ch = 0; ch < ds.n_channels(); ++ch) row[ch] = c.data(t, ch);
            write_f32(bin, row.data(), row.size());
        }
}

Dataset load_dataset(const fs::path& dir) {
    const json manifest = load_json(dir / "manifest.json");
    require_data(manifest.at("format_version").get<int>() == kFormatVersion,
                 "unsupported dataset format version");
    const size_t n_cycles = manifest.at("n_cycles").get<size_t>();
    const int cycle_len = manifest.at("cycle_length").get<int>();
    const int n_channels = manifest.at("n_channels").get<int>();
    require_data(cycle_len == kCycleLength, "unexpected cycle length in manifest");

    Dataset ds;
    ds.channel_names =
        manifest.at("channel_names").get<std::vector<std::string>>();
    for (const auto& s : manifest.at("subjects"))
        ds.subjects.push_back({s.at("id").get<std::string>(),
                               sex_from_string(s.at("sex").get<std::string>())});
    const auto& labels = manifest.at("labels");
    require_data(labels.size() == n_cycles, "label count != n_cycles");

    std::ifstream bin(dir / "cycles.f32", std::ios::binary);
    require_data(bin.good(), "cannot open cycles.f32");
    for (size_t i = 0; i < n_cycles; ++i) {
        const auto& l = labels[i];
        GaitCycle c;
        c.cycle_index = l.at("cycle_index").get<int>();
        c.subject_id = l.at("subject_id").get<std::string>();
        c.trial_id = l.at("trial_id").get<std::string>();
        c.weight_kg = l.at("weight_kg").get<double>();
        c.sex = sex_from_string(l.at("sex").get<std::string>());
        c.data.resize(kCycleLength, n_channels);
        const auto vals =
            read_f32(bin, static_cast<size_t>(kCycleLength) * n_channels);
        for (int t = 0; t < kCycleLength; ++t)
            for (int ch = 0; ch < n_channels; ++ch)
                c.data(t, ch) = vals[static_cast<size_t>(t) * n_channels + ch];
        ds.cycles.push_back(std::move(c));
    }
    if (manifest.contains("channel_stats")) {
        ChannelStats st;
        st.mean = manifest["channel_stats"].at("mean").get<std::vector<double>>();
        st.stddev = manifest["channel_stats"].at("std").get<std::vector<double>>();
        ds.channel_stats = std::move(st);
    }
    validate_dataset(ds);
    return ds;
}

void save_trials(const fs::path& dir, const std::vector<RawTrial>& trials) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = kFormatVersion;
    json list = json::array();
    std::ofstream bin(dir / "trials.f32", std::ios::binary);
    require_data(bin.good(), "cannot write trials.f32");
    for (const auto& t : trials) {
        validate_trial(t);
        json sensors = json::array();
        for (const auto& s : t.sensors)
            sensors.push_back({{"name", s.name}, {"offset", s.channel_offset}});
        list.push_back({{"subject_id", t.subject_id},
                        {"trial_id", t.trial_id},
                        {"sex", to_string(t.sex)},
                        {"weight_kg", t.weight_kg},
                        {"sample_rate_hz", t.sample_rate_hz},
                        {"n_samples", t.n_samples()},
                        {"n_channels", t.n_channels()},
                        {"sensors", sensors}});
        std::vector<double> row(t.n_channels());
        for (int r = 0; r < t.n_samples(); ++r) {
            for (int c = 0; c < t.n_channels(); ++c) row[c] = t.samples(r, c);
            write_f32(bin, row.data(), row.size());
        }
    }
    manifest["trials"] = list;
    dump_json(dir / "trials.json", manifest);
}

std::vector<RawTrial> load_trials(const fs::path& dir) {
    const json manifest = load_json(dir / "trials.json");
    std::ifstream bin(dir / "trials.f32", std::ios::binary);
    require_data(bin.good(), "cannot open trials.f32");
    std::vector<RawTrial> out;
    for (const auto& j : manifest.at("trials")) {
        RawTrial t;
        t.subject_id = j.at("subject_id").get<std::string>();
        t.trial_id = j.at("trial_id").get<std::string>();
        t.sex = sex_from_string(j.at("sex").get<std::string>());
        t.weight_kg = j.at("weight_kg").get<double>();
        t.sample_rate_hz = j.at("sample_rate_hz").get<double>();
        const int rows = j.at("n_samples").get<int>();
        const int cols = j.at("n_channels").get<int>();
        for (const auto& s : j.at("sensors"))
            t.sensors.push_back(
                {s.at("name").get<std::string>(), s.at("offset").get<int>()});
        t.samples.resize(rows, cols);
        const auto vals =
            read_f32(bin, static_cast<size_t>(rows) * static_cast<size_t>(cols));
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                t.samples(r, c) = vals[static_cast<size_t>(r) * cols + c];
        validate_trial(t);
        out.push_back(std::move(t));
    }
    return out;
}

void save_ground_truth(const fs::path& file, const synthgait::GroundTruth& truth) {
    json j;
    j["format_version"] = kFormatVersion;
    json trials = json::array();
    for (size_t i = 0; i < truth.events.size(); ++i) {
        json events = json::array();
        for (const auto& e : truth.events[i].cycles)
            events.push_back({e.rhs, e.lto, e.lhs, e.rto, e.next_rhs});
        json params = json::array();
        for (const auto& p : truth.cycle_params[i])
            params.push_back({{"cadence_hz", p.cadence_hz},
                              {"amplitude_gain", p.amplitude_gain}});
        trials.push_back({{"events", events}, {"cycle_params", params}});
    }
    j["trials"] = trials;
    dump_json(file, j);
}

synthgait::GroundTruth load_ground_truth(const fs::path& file) {
    const json j = load_json(file);
    synthgait::GroundTruth truth;
    for (const auto& t : j.at("trials")) {
        GaitEvents ev;
        for (const auto& e : t.at("events")) {
            require_data(e.size() == 5, "ground truth event tuple must have 5 entries");
            ev.cycles.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>(),
                                 e[3].get<int>(), e[4].get<int>()});
        }
        std::vector<synthgait::CycleTruth> params;
        for (const auto& p : t.at("cycle_params"))
            params.push_back({p.at("cadence_hz").get<double>(),
                              p.at("amplitude_gain").get<double>()});
        truth.events.push_back(std::move(ev));
        truth.cycle_params.push_back(std::move(params));
    }
    return truth;
}

}  // namespace fairload::io
