#include "glip/volume.hpp"

#include "glip/util.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace glip {

// --- util ------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x = splitmix64(x);
    s = x;
  }
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next());
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

// --- Grid -------------------------------------------------------------------

Index3 Grid::unravel(std::size_t linear) const {
  const std::size_t plane = static_cast<std::size_t>(shape[1]) * shape[2];
  const int i = static_cast<int>(linear / plane);
  const std::size_t rem = linear % plane;
  return {i, static_cast<int>(rem / shape[2]), static_cast<int>(rem % shape[2])};
}

bool Grid::contains(const Index3& idx) const {
  for (int a = 0; a < 3; ++a)
    if (idx[a] < 0 || idx[a] >= shape[a]) return false;
  return true;
}

Vec3 Grid::position(const Index3& idx) const {
  return origin + Vec3(idx[0], idx[1], idx[2]).cwiseProduct(spacing);
}

Vec3 Grid::extent() const {
  return Vec3(shape[0] - 1, shape[1] - 1, shape[2] - 1).cwiseProduct(spacing);
}

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw std::invalid_argument(concat("grid shape axis ", a, " must be >= 1, got ", shape[a]));
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw std::invalid_argument(concat("grid spacing axis ", a, " must be > 0, got ", spacing[a]));
    if (!std::isfinite(origin[a])) throw std::invalid_argument("grid origin must be finite");
  }
}

bool Grid::operator==(const Grid& other) const {
  return shape == other.shape && spacing == other.spacing && origin == other.origin;
}

Vec3 world_to_voxel(const Grid& grid, const Vec3& point_mm) {
  return (point_mm - grid.origin).cwiseQuotient(grid.spacing);
}

Vec3 voxel_to_world(const Grid& grid, const Vec3& index) {
  return grid.origin + index.cwiseProduct(grid.spacing);
}

// --- Volume -----------------------------------------------------------------

Volume Volume::zeros(const Grid& grid) {
  grid.validate();
  return Volume{grid, std::vector<float>(grid.voxel_count(), 0.0f)};
}

void Volume::validate() const {
  grid.validate();
  if (data.size() != grid.voxel_count())
    throw std::invalid_argument(
        concat("volume data has ", data.size(), " elements, shape implies ", grid.voxel_count()));
}

double Volume::mean() const {
  double s = 0.0;
  for (float x : data) s += x;
  return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

// --- Landmarks --------------------------------------------------------------

const Landmark* LandmarkSet::find(std::string_view name) const {
  for (const auto& p : points)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<std::string> LandmarkSet::names() const {
  std::vector<std::string> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.name);
  return out;
}

void LandmarkSet::validate() const {
  if (points.empty()) throw std::invalid_argument("landmark set is empty");
  std::unordered_set<std::string> seen;
  for (const auto& p : points) {
    if (!seen.insert(p.name).second) throw std::invalid_argument(concat("duplicate landmark name '", p.name, "'"));
    if (!p.position.allFinite()) throw std::invalid_argument(concat("landmark '", p.name, "' is not finite"));
  }
}

// --- Quality ----------------------------------------------------------------

std::string to_string(QualityGrade grade) {
  switch (grade) {
    case QualityGrade::Q1: return "1";
    case QualityGrade::Q2: return "2";
    case QualityGrade::Q3Minus: return "3-";
    case QualityGrade::Q3Plus: return "3+";
    case QualityGrade::Q4: return "4";
  }
  return "?";
}

QualityGrade parse_quality(std::string_view text) {
  if (text == "1") return QualityGrade::Q1;
  if (text == "2") return QualityGrade::Q2;
  if (text == "3-") return QualityGrade::Q3Minus;
  if (text == "3+") return QualityGrade::Q3Plus;
  if (text == "4") return QualityGrade::Q4;
  throw std::invalid_argument(concat("unknown quality grade '", text, "' (expected 1, 2, 3-, 3+ or 4)"));
}

int rank(QualityGrade grade) { return static_cast<int>(grade); }

// --- Heatmaps ---------------------------------------------------------------

void HeatmapConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument(concat("heatmap sigma must be > 0, got ", sigma));
}

double heatmap_kernel(double distance_mm, const HeatmapConfig& cfg) {
  const double d = cfg.squared_distance ? distance_mm * distance_mm : distance_mm;
  return std::exp(-d / (2.0 * cfg.sigma * cfg.sigma));
}

Heatmap generate_heatmap(const Grid& geometry, const LandmarkSet& landmarks, const HeatmapConfig& cfg) {
  cfg.validate();
  geometry.validate();
  landmarks.validate();

  Heatmap hm;
  hm.grid = geometry;
  hm.channels = static_cast<int>(landmarks.size());
  hm.data.resize(landmarks.size() * geometry.voxel_count());

  const Vec3 lo = geometry.origin;
  const Vec3 hi = geometry.origin + geometry.extent();
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);

  for (int c = 0; c < hm.channels; ++c) {
    const Vec3& l = landmarks[c].position;
    if ((l.array() < lo.array()).any() || (l.array() > hi.array()).any())
      hm.out_of_bounds.push_back(landmarks[c].name);

    auto out = hm.channel(c);
    std::size_t n = 0;
    for (int i = 0; i < geometry.shape[0]; ++i) {
      const double dx = geometry.origin[0] + i * geometry.spacing[0] - l[0];
      for (int j = 0; j < geometry.shape[1]; ++j) {
        const double dy = geometry.origin[1] + j * geometry.spacing[1] - l[1];
        for (int k = 0; k < geometry.shape[2]; ++k, ++n) {
          const double dz = geometry.origin[2] + k * geometry.spacing[2] - l[2];
          const double d2 = dx * dx + dy * dy + dz * dz;
          out[n] = std::exp(-(cfg.squared_distance ? d2 : std::sqrt(d2)) * inv);
        }
      }
    }
  }
  return hm;
}

// --- Resampling ------------------------------------------------------------

namespace {

void require_finite(const Volume& v) {
  for (std::size_t i = 0; i < v.data.size(); ++i)
    if (!std::isfinite(v.data[i]))
      throw std::invalid_argument(concat("volume contains a non-finite value at linear index ", i));
}

struct AxisSample {
  int lo;
  int hi;
  double w;  // weight of hi
};

std::vector<AxisSample> axis_samples(int old_n, double old_s, int new_n, double new_s) {
  std::vector<AxisSample> out(new_n);
  for (int k = 0; k < new_n; ++k) {
    const double x = k * new_s / old_s;
    int lo = static_cast<int>(std::floor(x));
    lo = std::clamp(lo, 0, old_n - 1);
    const int hi = std::min(lo + 1, old_n - 1);
    const double w = hi == lo ? 0.0 : std::clamp(x - lo, 0.0, 1.0);
    out[k] = {lo, hi, w};
  }
  return out;
}

}  // namespace

Volume resample_to_spacing(const Volume& v, const Vec3& target_spacing) {
  v.validate();
  for (int a = 0; a < 3; ++a)
    if (!(target_spacing[a] > 0.0) || !std::isfinite(target_spacing[a]))
      throw std::invalid_argument(concat("target spacing axis ", a, " must be > 0, got ", target_spacing[a]));
  require_finite(v);
  if (target_spacing == v.grid.spacing) return v;

  Grid g;
  g.origin = v.grid.origin;
  g.spacing = target_spacing;
  const Vec3 extent = v.grid.extent();
  for (int a = 0; a < 3; ++a) {
    // Small slack so that exact multiples are not lost to rounding.
    g.shape[a] = static_cast<int>(std::floor(extent[a] / target_spacing[a] + 1e-9)) + 1;
  }

  std::array<std::vector<AxisSample>, 3> ax;
  for (int a = 0; a < 3; ++a) ax[a] = axis_samples(v.grid.shape[a], v.grid.spacing[a], g.shape[a], g.spacing[a]);

  Volume out = Volume::zeros(g);
  std::size_t n = 0;
  for (int i = 0; i < g.shape[0]; ++i) {
    const auto& si = ax[0][i];
    for (int j = 0; j < g.shape[1]; ++j) {
      const auto& sj = ax[1][j];
      for (int k = 0; k < g.shape[2]; ++k, ++n) {
        const auto& sk = ax[2][k];
        auto lerp_k = [&](int ii, int jj) {
          return (1.0 - sk.w) * v.at(ii, jj, sk.lo) + sk.w * v.at(ii, jj, sk.hi);
        };
        auto lerp_jk = [&](int ii) { return (1.0 - sj.w) * lerp_k(ii, sj.lo) + sj.w * lerp_k(ii, sj.hi); };
        out.data[n] = static_cast<float>((1.0 - si.w) * lerp_jk(si.lo) + si.w * lerp_jk(si.hi));
      }
    }
  }
  return out;
}

Volume downsample(const Volume& v, const Index3& factor) {
  v.validate();
  for (int a = 0; a < 3; ++a) {
    if (factor[a] < 1) throw std::invalid_argument(concat("downsample factor axis ", a, " must be >= 1"));
    if (factor[a] > v.grid.shape[a])
      throw std::invalid_argument(concat("downsample factor ", factor[a], " exceeds shape ", v.grid.shape[a],
                                         " on axis ", a));
  }
  if (factor == Index3{1, 1, 1}) return v;

  Grid g;
  for (int a = 0; a < 3; ++a) {
    g.shape[a] = v.grid.shape[a] / factor[a];
    g.spacing[a] = v.grid.spacing[a] * factor[a];
    g.origin[a] = v.grid.origin[a] + 0.5 * (factor[a] - 1) * v.grid.spacing[a];
  }

  Volume out = Volume::zeros(g);
  const double inv = 1.0 / (static_cast<double>(factor[0]) * factor[1] * factor[2]);
  for (int i = 0; i < g.shape[0]; ++i)
    for (int j = 0; j < g.shape[1]; ++j)
      for (int k = 0; k < g.shape[2]; ++k) {
        double s = 0.0;
        for (int a = 0; a < factor[0]; ++a)
          for (int b = 0; b < factor[1]; ++b)
            for (int c = 0; c < factor[2]; ++c)
              s += v.at(i * factor[0] + a, j * factor[1] + b, k * factor[2] + c);
        out.at(i, j, k) = static_cast<float>(s * inv);
      }
  return out;
}

}  // namespace glip
