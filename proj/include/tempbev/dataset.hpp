#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempbev/synthworld.hpp"

namespace tempbev::data {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetManifest {
    int format_version = kDatasetFormatVersion;
    int n_samples = 0;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    int occlusion_events = 0;
};

// One directory per split: manifest.json + sample_%05d.tbtc records.
void write_dataset(const std::vector<world::TemporalSample>& samples,
                   const std::string& dir, std::uint64_t seed,
                   const std::string& config_fingerprint);

DatasetManifest read_manifest(const std::string& dir);
world::TemporalSample read_sample(const std::string& dir, int index);
std::vector<world::TemporalSample> read_dataset(const std::string& dir);

std::string sample_filename(int index);

}  // namespace tempbev::data
