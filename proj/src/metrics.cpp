#include "glip/metrics.hpp"

#include "glip/util.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace glip {

void Plane::validate() const {
  if (!point.allFinite() || !normal.allFinite()) throw std::invalid_argument("plane has non-finite components");
  if (std::abs(normal.norm() - 1.0) > 1e-9) throw std::invalid_argument(concat("plane normal is not unit length: ", normal.norm()));
}

bool Extraction::any_ambiguous() const { return std::find(ambiguous.begin(), ambiguous.end(), true) != ambiguous.end(); }

std::vector<std::string> default_landmark_names(int channels) {
  std::vector<std::string> names;
  for (int c = 0; c < channels; ++c)
    names.push_back(channels == static_cast<int>(kHingeNames.size()) ? std::string(kHingeNames[c]) : concat("L", c));
  return names;
}

namespace {

Vec3 refine_centroid(const Grid& grid, const double* v, const Index3& at) {
  double lo = v[grid.linear_index(at[0], at[1], at[2])];
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      for (int dk = -1; dk <= 1; ++dk) {
        const Index3 q{at[0] + di, at[1] + dj, at[2] + dk};
        if (grid.contains(q)) lo = std::min(lo, v[grid.linear_index(q[0], q[1], q[2])]);
      }
  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      for (int dk = -1; dk <= 1; ++dk) {
        const Index3 q{at[0] + di, at[1] + dj, at[2] + dk};
        if (!grid.contains(q)) continue;
        const double w = v[grid.linear_index(q[0], q[1], q[2])] - lo;
        acc += w * grid.position(q);
        wsum += w;
      }
  return wsum > 0.0 ? Vec3(acc / wsum) : grid.position(at);
}

}  // namespace

std::string to_string(DecodeRule rule) { return rule == DecodeRule::Centroid ? "centroid" : "argmax"; }

DecodeRule parse_decode_rule(std::string_view text) {
  if (text == "argmax") return DecodeRule::Argmax;
  if (text == "centroid") return DecodeRule::Centroid;
  throw std::invalid_argument(concat("unknown decode rule '", text, "' (expected argmax or centroid)"));
}

Extraction extract_landmarks(const Grid& grid, const double* values, int channels, const std::vector<std::string>& names,
                             DecodeRule rule) {
  grid.validate();
  if (channels < 1) throw std::invalid_argument("extract_landmarks: no channels");
  const auto labels = names.empty() ? default_landmark_names(channels) : names;
  if (static_cast<int>(labels.size()) != channels)
    throw std::invalid_argument(concat("extract_landmarks: ", labels.size(), " names for ", channels, " channels"));
  const std::size_t nv = grid.voxel_count();
  Extraction out;
  for (int c = 0; c < channels; ++c) {
    const double* v = values + static_cast<std::size_t>(c) * nv;
    std::size_t best = 0;
    int ties = 1;
    for (std::size_t i = 0; i < nv; ++i)
      if (!std::isfinite(v[i])) throw std::invalid_argument(concat("extract_landmarks: channel ", c, " has non-finite values"));
    for (std::size_t i = 1; i < nv; ++i) {
      if (v[i] > v[best]) {
        best = i;
        ties = 1;
      } else if (v[i] == v[best]) {
        ++ties;
      }
    }
    const Index3 at = grid.unravel(best);
    const Vec3 pos = rule == DecodeRule::Centroid ? refine_centroid(grid, v, at) : grid.position(at);
    out.landmarks.points.push_back({labels[c], pos});
    out.ambiguous.push_back(ties > 1);
  }
  return out;
}

Extraction extract_landmarks(const Heatmap& pred, const std::vector<std::string>& names, DecodeRule rule) {
  if (pred.data.size() != pred.grid.voxel_count() * static_cast<std::size_t>(pred.channels))
    throw std::invalid_argument("extract_landmarks: heatmap data size does not match its grid");
  return extract_landmarks(pred.grid, pred.data.data(), pred.channels, names, rule);
}

Plane plane_from_points(const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  if (!p1.allFinite() || !p2.allFinite() || !p3.allFinite()) throw std::domain_error("plane_from_points: non-finite point");
  const Vec3 a = p2 - p1, b = p3 - p1;
  const Vec3 n = a.cross(b);
  const double scale = a.norm() * b.norm();
  if (!(scale > 0.0) || n.norm() <= 1e-9 * scale) throw std::domain_error("plane_from_points: points are collinear or coincident");
  return {p1, n.normalized()};
}

Plane plane_from_landmarks(const LandmarkSet& set) {
  if (set.size() != 3) throw std::invalid_argument(concat("a plane needs exactly 3 landmarks, got ", set.size()));
  return plane_from_points(set[0].position, set[1].position, set[2].position);
}

double point_plane_distance(const Plane& plane, const Vec3& q) { return std::abs((q - plane.point).dot(plane.normal)); }

double avg_projection_distance(const std::array<Vec3, 3>& gt, const std::array<Vec3, 3>& pred) {
  const Plane pg = plane_from_points(gt[0], gt[1], gt[2]);
  const Plane pp = plane_from_points(pred[0], pred[1], pred[2]);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += point_plane_distance(pp, gt[i]) + point_plane_distance(pg, pred[i]);
  return s / 6.0;
}

namespace {

std::array<Vec3, 3> triple(const LandmarkSet& ref, const LandmarkSet& set) {
  if (ref.size() != 3 || set.size() != 3) throw std::invalid_argument("plane metrics need exactly 3 landmarks per set");
  std::array<Vec3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Landmark* l = set.find(ref[i].name);
    if (!l) throw std::invalid_argument("landmark '" + ref[i].name + "' missing from prediction");
    out[i] = l->position;
  }
  return out;
}

}  // namespace

double avg_projection_distance(const LandmarkSet& gt, const LandmarkSet& pred) {
  return avg_projection_distance(triple(gt, gt), triple(gt, pred));
}

double plane_angle(const Plane& a, const Plane& b) {
  // atan2 stays accurate near 0 degrees where acos of the dot product does not.
  const double s = a.normal.cross(b.normal).norm();
  const double c = std::abs(a.normal.dot(b.normal));
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

std::vector<LandmarkError> euclid_errors(const LandmarkSet& gt, const LandmarkSet& pred) {
  if (gt.size() != pred.size())
    throw std::invalid_argument(concat("euclid_errors: ", gt.size(), " ground-truth vs ", pred.size(), " predicted landmarks"));
  std::vector<LandmarkError> out;
  for (const auto& l : gt.points) {
    const Landmark* p = pred.find(l.name);
    if (!p) throw std::invalid_argument("euclid_errors: prediction has no landmark '" + l.name + "'");
    out.push_back({l.name, (p->position - l.position).norm()});
  }
  return out;
}

std::vector<double> sdr(const std::vector<double>& errors, const std::vector<double>& thresholds) {
  if (errors.empty()) throw std::invalid_argument("sdr: empty error list");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw std::invalid_argument("sdr: thresholds must be ascending");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (double t : thresholds) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    out.push_back(static_cast<double>(below) / static_cast<double>(sorted.size()));
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument(concat("quantile level ", q, " outside [0, 1]"));
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(const std::vector<double>& values) { return quantile(values, 0.5); }

}  // namespace glip
