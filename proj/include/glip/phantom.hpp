#pragma once

#include "glip/sample_io.hpp"
#include "glip/volume.hpp"

#include <filesystem>
#include <vector>

namespace glip {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Samples with degradation <= max_degradation receive `grade`; entries are
/// ordered by max_degradation ascending.
struct QualityThreshold {
  double max_degradation = 1.0;
  QualityGrade grade = QualityGrade::Q1;
};

std::vector<QualityThreshold> default_quality_thresholds();

struct PhantomConfig {
  Index3 shape{64, 64, 64};
  Vec3 spacing = Vec3::Constant(0.5);
  Range tube_radius_range{3.0, 4.5};
  Range annulus_radius_range{5.5, 7.5};
  /// Peak intensity of the RCC marker; LCC and NCC markers are 0.8x and 0.6x.
  double marker_intensity = 1.0;
  double noise_sigma = 0.1;
  Range blur_sigma_range{0.0, 0.5};
  std::vector<QualityThreshold> quality_thresholds = default_quality_thresholds();
  int count = 167;
  std::uint64_t base_seed = 0;

  void validate() const;
};

/// Per-sample generator seed derived from (base_seed, index).
std::uint64_t phantom_seed(std::uint64_t base_seed, int index);

std::string phantom_id(int index);

QualityGrade grade_for_degradation(const std::vector<QualityThreshold>& thresholds, double degradation);

/// Builds one aortic-root-like phantom: a bright curved tube ending in an
/// annulus ring with three hinge markers 120 degrees apart, blurred and noised
/// according to a sampled degradation level. Fully determined by
/// (cfg.base_seed, index).
Sample generate_phantom(const PhantomConfig& cfg, int index);

/// Writes cfg.count samples plus `manifest.json` into `out_dir`.
std::vector<ManifestEntry> generate_dataset(const PhantomConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace glip
