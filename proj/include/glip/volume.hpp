#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glip {

using Vec3 = Eigen::Vector3d;
using Index3 = std::array<int, 3>;

/// Geometry of a node-centered voxel grid: the world position of index k is
/// origin + k * spacing (mm). Axis 0 is the slowest-varying in memory.
struct Grid {
  Index3 shape{1, 1, 1};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  }
  std::size_t linear_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k;
  }
  Index3 unravel(std::size_t linear) const;
  bool contains(const Index3& idx) const;
  /// World position of a voxel center.
  Vec3 position(const Index3& idx) const;
  /// Physical length of the node span, (shape - 1) * spacing per axis.
  Vec3 extent() const;
  double diagonal_mm() const { return extent().norm(); }

  /// Throws std::invalid_argument if shape or spacing violate their invariants.
  void validate() const;

  bool operator==(const Grid& other) const;
};

Vec3 world_to_voxel(const Grid& grid, const Vec3& point_mm);
Vec3 voxel_to_world(const Grid& grid, const Vec3& index);

struct Volume {
  Grid grid;
  std::vector<float> data;

  static Volume zeros(const Grid& grid);

  float& at(int i, int j, int k) { return data[grid.linear_index(i, j, k)]; }
  float at(int i, int j, int k) const { return data[grid.linear_index(i, j, k)]; }

  void validate() const;
  double mean() const;
};

struct Landmark {
  std::string name;
  Vec3 position = Vec3::Zero();
};

/// Ordered, uniquely named set of world-coordinate points.
struct LandmarkSet {
  std::vector<Landmark> points;

  std::size_t size() const { return points.size(); }
  const Landmark& operator[](std::size_t i) const { return points[i]; }
  Landmark& operator[](std::size_t i) { return points[i]; }
  const Landmark* find(std::string_view name) const;
  std::vector<std::string> names() const;

  void validate() const;
};

/// The three aortic valve hinge points, in channel order.
inline constexpr std::array<std::string_view, 3> kHingeNames{"RCC", "LCC", "NCC"};

enum class QualityGrade { Q1, Q2, Q3Minus, Q3Plus, Q4 };

std::string to_string(QualityGrade grade);
QualityGrade parse_quality(std::string_view text);
/// Ordinal rank, 0 for the worst grade.
int rank(QualityGrade grade);

struct SampleMeta {
  std::string sample_id;
  QualityGrade quality = QualityGrade::Q3Plus;
  std::string split;  // "cv-fold-<k>", "test" or empty when unassigned
  std::uint64_t rng_seed = 0;
};

struct HeatmapConfig {
  double sigma = 1.0;
  /// false: exp(-d / (2 sigma^2)) as printed; true: exp(-d^2 / (2 sigma^2)).
  bool squared_distance = false;

  void validate() const;
};

/// Per-landmark scalar fields over a grid, channel-major (N_l, D1, D2, D3).
struct Heatmap {
  Grid grid;
  int channels = 0;
  std::vector<double> data;
  /// Names of landmarks that fell outside the grid bounds.
  std::vector<std::string> out_of_bounds;

  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * grid.voxel_count(), grid.voxel_count()};
  }
  std::span<double> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * grid.voxel_count(), grid.voxel_count()};
  }
};

double heatmap_kernel(double distance_mm, const HeatmapConfig& cfg);

Heatmap generate_heatmap(const Grid& geometry, const LandmarkSet& landmarks, const HeatmapConfig& cfg);

/// Trilinear resampling onto a new spacing; origin is kept and the node span
/// is truncated to fit inside the original extent.
Volume resample_to_spacing(const Volume& v, const Vec3& target_spacing);

/// Mean-pools non-overlapping factor blocks. Trailing voxels that do not fill
/// a block are dropped. The origin moves to the centroid of the first block.
Volume downsample(const Volume& v, const Index3& factor);

}  // namespace glip
