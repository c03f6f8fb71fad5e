#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gasfusion/datagen.hpp"

namespace gasfusion {

// Binary PGM (P5, maxval 255).
void write_pgm(const ThermalFrame& img, const std::filesystem::path& path);
ThermalFrame read_pgm(const std::filesystem::path& path);

// Dataset directory layout:
//   manifest.json   version, class names, generator seed, sample records
//   sensors.csv     id,mq2,mq3,mq5,mq6,mq7,mq8,mq135,t_seconds
//   images/NNNNNN.pgm
// All text is ASCII with LF endings; load(save(x)) == x bit-exactly.
void save_dataset(const std::vector<LabeledSample>& samples, const std::filesystem::path& dir,
                  std::uint64_t seed);

struct LoadedDataset {
    std::vector<LabeledSample> samples;
    std::uint64_t seed = 0;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

} // namespace gasfusion
