#include "glip/phantom.hpp"

#include "glip/util.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace glip {

namespace {

constexpr double kTubeIntensity = 0.25;
constexpr double kRingIntensity = 0.3;
constexpr double kRingWidth = 0.6;     // mm
constexpr double kMarkerRadius = 0.8;  // mm
constexpr double kRingMargin = 3.0;    // mm between ring and volume faces
constexpr double kAngleJitter = 6.0 * std::numbers::pi / 180.0;
constexpr int kMaxPlacementTries = 200;
constexpr std::array<double, 3> kMarkerScale{1.0, 0.8, 0.6};

void check_range(const Range& r, const char* name) {
  if (!(r.lo >= 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.hi))
    throw std::invalid_argument(concat("phantom ", name, " must satisfy 0 <= lo <= hi, got [", r.lo, ", ", r.hi, "]"));
}

Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-12);
  return v.normalized();
}

void gaussian_blur_axis(std::vector<float>& data, const Grid& g, int axis, double sigma_vox) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) norm += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma_vox * sigma_vox));
  for (auto& w : kernel) w /= norm;

  const int n = g.shape[axis];
  const std::size_t stride = axis == 0 ? static_cast<std::size_t>(g.shape[1]) * g.shape[2] : axis == 1 ? g.shape[2] : 1;
  std::vector<double> line(n);
  const std::vector<float> src = data;
  for (std::size_t base = 0; base < data.size(); ++base) {
    // Visit each line once via its first element.
    const Index3 idx = g.unravel(base);
    if (idx[axis] != 0) continue;
    for (int t = 0; t < n; ++t) {
      double s = 0.0;
      for (int q = -radius; q <= radius; ++q) {
        const int u = std::clamp(t + q, 0, n - 1);
        s += kernel[q + radius] * src[base + u * stride];
      }
      line[t] = s;
    }
    for (int t = 0; t < n; ++t) data[base + t * stride] = static_cast<float>(line[t]);
  }
}

}  // namespace

std::vector<QualityThreshold> default_quality_thresholds() {
  return {{0.10, QualityGrade::Q4},
          {0.40, QualityGrade::Q3Plus},
          {0.75, QualityGrade::Q3Minus},
          {0.92, QualityGrade::Q2},
          {1.00, QualityGrade::Q1}};
}

void PhantomConfig::validate() const {
  Grid{shape, spacing, Vec3::Zero()}.validate();
  check_range(tube_radius_range, "tube_radius_range");
  check_range(annulus_radius_range, "annulus_radius_range");
  check_range(blur_sigma_range, "blur_sigma_range");
  if (!(tube_radius_range.lo > 0.0)) throw std::invalid_argument("phantom tube radius must be > 0");
  if (!(annulus_radius_range.lo > 0.0)) throw std::invalid_argument("phantom annulus radius must be > 0");
  if (!(marker_intensity > 0.0)) throw std::invalid_argument("phantom marker_intensity must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("phantom noise_sigma must be >= 0");
  if (count < 1) throw std::invalid_argument(concat("phantom count must be >= 1, got ", count));
  if (quality_thresholds.empty()) throw std::invalid_argument("phantom quality_thresholds is empty");
  for (std::size_t i = 1; i < quality_thresholds.size(); ++i) {
    if (!(quality_thresholds[i].max_degradation > quality_thresholds[i - 1].max_degradation))
      throw std::invalid_argument("phantom quality_thresholds must be strictly ascending in degradation");
    if (rank(quality_thresholds[i].grade) > rank(quality_thresholds[i - 1].grade))
      throw std::invalid_argument("phantom quality_thresholds: higher degradation cannot map to a better grade");
  }
  if (quality_thresholds.back().max_degradation < 1.0)
    throw std::invalid_argument("phantom quality_thresholds must cover degradation 1.0");
}

std::uint64_t phantom_seed(std::uint64_t base_seed, int index) {
  return mix_seed(base_seed, static_cast<std::uint64_t>(index));
}

std::string phantom_id(int index) {
  std::ostringstream os;
  os << "phantom_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

QualityGrade grade_for_degradation(const std::vector<QualityThreshold>& thresholds, double degradation) {
  for (const auto& t : thresholds)
    if (degradation <= t.max_degradation) return t.grade;
  return thresholds.back().grade;
}

Sample generate_phantom(const PhantomConfig& cfg, int index) {
  cfg.validate();
  if (index < 0 || index >= cfg.count)
    throw std::invalid_argument(concat("phantom index ", index, " outside [0, ", cfg.count, ")"));

  const std::uint64_t seed = phantom_seed(cfg.base_seed, index);
  Rng rng(seed);
  Grid grid{cfg.shape, cfg.spacing, Vec3::Zero()};
  const Vec3 extent = grid.extent();

  // Place the annulus so that the whole ring stays inside the volume.
  double radius = 0.0;
  Vec3 normal, center;
  bool placed = false;
  for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
    radius = rng.uniform(cfg.annulus_radius_range.lo, cfg.annulus_radius_range.hi);
    normal = random_unit(rng);
    placed = true;
    for (int a = 0; a < 3; ++a) {
      const double reach = radius * std::sqrt(std::max(0.0, 1.0 - normal[a] * normal[a])) + kRingMargin;
      const double lo = reach, hi = extent[a] - reach;
      if (hi < lo) {
        placed = false;
        break;
      }
      center[a] = rng.uniform(lo, hi);
    }
  }
  if (!placed)
    throw std::runtime_error(concat("phantom ", index, ": annulus does not fit inside the volume after ",
                                    kMaxPlacementTries, " tries"));

  const Vec3 e1 = normal.unitOrthogonal();
  const Vec3 e2 = normal.cross(e1);
  const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tube_radius = std::min(rng.uniform(cfg.tube_radius_range.lo, cfg.tube_radius_range.hi), radius - 1.0);
  const double bend = rng.uniform(-0.02, 0.02);
  const double degradation = rng.uniform();
  const double blur = cfg.blur_sigma_range.lo + degradation * (cfg.blur_sigma_range.hi - cfg.blur_sigma_range.lo);

  Sample s;
  s.meta.sample_id = phantom_id(index);
  s.meta.rng_seed = seed;
  s.meta.quality = grade_for_degradation(cfg.quality_thresholds, degradation);

  std::array<Vec3, 3> marks;
  for (int i = 0; i < 3; ++i) {
    const double theta = theta0 + i * 2.0 * std::numbers::pi / 3.0 + rng.uniform(-kAngleJitter, kAngleJitter);
    marks[i] = center + radius * (std::cos(theta) * e1 + std::sin(theta) * e2);
    s.landmarks.points.push_back({std::string(kHingeNames[i]), marks[i]});
  }

  s.volume = Volume::zeros(grid);
  const double ring_inv = 1.0 / (2.0 * kRingWidth * kRingWidth);
  const double mark_inv = 1.0 / (2.0 * kMarkerRadius * kMarkerRadius);
  std::size_t n = 0;
  for (int i = 0; i < grid.shape[0]; ++i)
    for (int j = 0; j < grid.shape[1]; ++j)
      for (int k = 0; k < grid.shape[2]; ++k, ++n) {
        const Vec3 p = grid.position({i, j, k});
        const Vec3 r = p - center;
        const double h = r.dot(normal);
        const double rho = (r - h * normal).norm();

        const double ring_d2 = (rho - radius) * (rho - radius) + h * h;
        double tissue = kRingIntensity * std::exp(-ring_d2 * ring_inv);
        if (h > 1.0) {
          const Vec3 axis_point = center + h * normal + bend * h * h * e1;
          const double d = (p - axis_point).norm();
          tissue += kTubeIntensity / (1.0 + std::exp((d - tube_radius) / 0.5));
        }

        double marker = 0.0;
        for (int m = 0; m < 3; ++m)
          marker = std::max(marker, cfg.marker_intensity * kMarkerScale[m] * std::exp(-(p - marks[m]).squaredNorm() * mark_inv));
        s.volume.data[n] = static_cast<float>(std::max(tissue, marker));
      }

  if (blur > 0.0)
    for (int a = 0; a < 3; ++a) gaussian_blur_axis(s.volume.data, grid, a, blur / grid.spacing[a]);
  if (cfg.noise_sigma > 0.0)
    for (auto& v : s.volume.data) v = static_cast<float>(v + cfg.noise_sigma * rng.normal());
  return s;
}

std::vector<ManifestEntry> generate_dataset(const PhantomConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::vector<ManifestEntry> manifest;
  manifest.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    Sample s = generate_phantom(cfg, i);
    try {
      save_sample(out_dir, s);
    } catch (const std::exception& e) {
      throw std::runtime_error(concat("sample ", s.meta.sample_id, ": ", e.what()));
    }
    manifest.push_back({s.meta.sample_id, s.meta.quality, s.meta.rng_seed});
  }
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace glip
