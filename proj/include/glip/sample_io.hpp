#pragma once

#include "glip/volume.hpp"

#include <filesystem>

namespace glip {

inline constexpr int kSampleFormatVersion = 1;

struct Sample {
  Volume volume;
  LandmarkSet landmarks;
  SampleMeta meta;
};

/// Writes `<dir>/<id>.raw` (little-endian float32, axis 0 slowest) and the
/// `<dir>/<id>.json` sidecar. The id is taken from sample.meta.sample_id.
void save_sample(const std::filesystem::path& dir, const Sample& sample);

/// Loads a sample from its path stem `<dir>/<id>` (a trailing .json or .raw
/// extension is accepted and ignored).
Sample load_sample(const std::filesystem::path& stem);

struct ManifestEntry {
  std::string sample_id;
  QualityGrade quality = QualityGrade::Q3Plus;
  std::uint64_t rng_seed = 0;

  bool operator==(const ManifestEntry&) const = default;
};

/// `manifest.json`: a JSON list of {sample_id, quality, rng_seed}.
void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

/// Loads every sample listed in `<dir>/manifest.json`, in manifest order.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace glip
