#pragma once

#include "glip/volume.hpp"

#include <array>
#include <string>
#include <vector>

namespace glip {

struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  void validate() const;
};

enum class DecodeRule {
  Argmax,
  /// Argmax refined by the intensity-weighted centroid of its 3x3x3
  /// neighbourhood (values above the neighbourhood minimum).
  Centroid,
};

std::string to_string(DecodeRule rule);
/// "argmax" or "centroid".
DecodeRule parse_decode_rule(std::string_view text);

struct Extraction {
  LandmarkSet landmarks;
  /// Per channel: the maximum was attained at more than one voxel.
  std::vector<bool> ambiguous;

  bool any_ambiguous() const;
};

/// Channel names used when none are given: the hinge names for three
/// channels, "L0", "L1", ... otherwise.
std::vector<std::string> default_landmark_names(int channels);

/// Per channel, the world position of the argmax voxel; ties go to the lowest
/// linear index and set the ambiguity flag.
Extraction extract_landmarks(const Heatmap& pred, const std::vector<std::string>& names = {},
                             DecodeRule rule = DecodeRule::Argmax);
/// Same on raw channel-major values laid out over `grid`.
Extraction extract_landmarks(const Grid& grid, const double* values, int channels,
                             const std::vector<std::string>& names = {}, DecodeRule rule = DecodeRule::Argmax);

/// Plane through three points with normal (p2 - p1) x (p3 - p1), normalized.
/// Throws std::domain_error for collinear or coincident points.
Plane plane_from_points(const Vec3& p1, const Vec3& p2, const Vec3& p3);
Plane plane_from_landmarks(const LandmarkSet& set);

double point_plane_distance(const Plane& plane, const Vec3& q);

/// Mean of the six point-to-other-plane distances between two triples.
double avg_projection_distance(const std::array<Vec3, 3>& gt, const std::array<Vec3, 3>& pred);
/// Landmark-set form; pred is matched to gt by name.
double avg_projection_distance(const LandmarkSet& gt, const LandmarkSet& pred);

/// Unoriented angle between planes, degrees in [0, 90].
double plane_angle(const Plane& a, const Plane& b);

struct LandmarkError {
  std::string name;
  double error_mm = 0.0;
};

/// Per-landmark Euclidean distances in gt order. Throws when the name sets differ.
std::vector<LandmarkError> euclid_errors(const LandmarkSet& gt, const LandmarkSet& pred);

/// Fraction of errors strictly below each threshold.
std::vector<double> sdr(const std::vector<double>& errors, const std::vector<double>& thresholds);

/// Linearly interpolated quantile (q in [0, 1]) of a non-empty sample.
double quantile(std::vector<double> values, double q);
double median(const std::vector<double>& values);

}  // namespace glip
