#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fairload/synthgait.hpp"
#include "fairload/types.hpp"

namespace fairload::io {

// On-disk dataset container: manifest.json + cycles.f32 (little-endian
// float32, row-major [cycle][time][channel]).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

// Raw trial container: trials.json + trials.f32 (concatenated [T x C] blocks,
// row-major). Lets the preprocess subcommand run standalone.
void save_trials(const std::filesystem::path& dir,
                 const std::vector<RawTrial>& trials);
std::vector<RawTrial> load_trials(const std::filesystem::path& dir);

void save_ground_truth(const std::filesystem::path& file,
                       const synthgait::GroundTruth& truth);
synthgait::GroundTruth load_ground_truth(const std::filesystem::path& file);

// float32 payload helpers shared with the model artifact writer.
void write_f32(std::ostream& os, const double* data, size_t n);
std::vector<double> read_f32(std::istream& is, size_t n);

}  // namespace fairload::io
