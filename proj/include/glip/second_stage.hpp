#pragma once

#include "glip/pipeline.hpp"

namespace glip {

/// A cubic crop of a source volume. `offset` is the source voxel index of
/// patch voxel (0, 0, 0); it may be negative or run past the source, in which
/// case the missing voxels are zero.
struct Patch {
  Volume volume;
  Index3 offset{0, 0, 0};
  /// Start of the (p^s + 2 p^d)^3 region in source voxels.
  Index3 region_start{0, 0, 0};
  /// Start of the patch inside the region.
  Index3 u{0, 0, 0};
};

/// Source voxel nearest to a world point (rounded, not clamped).
Index3 nearest_voxel(const Grid& grid, const Vec3& world);

/// Draws u uniformly from {1, ..., 2 p^d}^3; p^d = 0 gives (0, 0, 0).
Index3 sample_disturbance(int disturbance, Rng& rng);

/// Crops the (p^s)^3 patch starting at u inside the (p^s + 2 p^d)^3 region
/// centred on the voxel nearest to `center`. With rng == nullptr (inference)
/// u = (p^d, p^d, p^d), which centres the patch on that voxel.
Patch extract_patch(const Volume& v, const Vec3& center, int patch_size, int disturbance, Rng* rng = nullptr);

/// World position of a patch voxel, computed on the source grid.
Vec3 patch_voxel_world(const Patch& p, const Grid& source, const Index3& idx);

struct StageTwoPoint {
  int disturbance = 0;
  double sigma = 0.0;
  double lambda = 0.0;
  double cv_median_mm = 0.0;
  bool diverged = false;
  std::string key;
};

struct SecondStageResult {
  std::vector<StageTwoPoint> points;
  StageTwoPoint best;
  /// Stage-1 and stage-2 records of the test set.
  EvalReport report;
  std::vector<double> sdr_stage1;
  std::vector<double> sdr_stage2;
};

/// Global predictions of one network for the given samples (first-stage input).
std::map<std::string, LandmarkSet> global_predictions(Network& net, const std::vector<std::string>& ids,
                                                      const Dataset& data, int batch_size,
                                                      DecodeRule decode = DecodeRule::Argmax);

/// Trains one local network per fold on full-resolution patches cut around
/// the fold's global predictions, for every (p^d, sigma, lambda) in the patch
/// grids of cfg, picks the point with the lowest CV median, and evaluates the
/// fold-ensembled two-stage prediction on the test set next to the
/// first-stage ensemble.
SecondStageResult second_stage_run(const CvResult& first, const SplitPlan& plan, const Dataset& data, const Logger& log);

nlohmann::json second_stage_json(const SecondStageResult& r);

}  // namespace glip
