#include "glip/metrics.hpp"
#include "glip/util.hpp"

#include "../support/oracles.hpp"

#include <Eigen/Geometry>
#include <doctest.h>

using namespace glip;

namespace {

Vec3 rand_vec(Rng& rng, double scale = 10.0) { return Vec3(rng.normal(), rng.normal(), rng.normal()) * scale; }

std::array<Vec3, 3> rand_triangle(Rng& rng) { return {rand_vec(rng), rand_vec(rng), rand_vec(rng)}; }

}  // namespace

TEST_CASE("plane construction and point distances") {
  const Plane p = plane_from_points(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
  CHECK(std::abs(p.normal.z()) == doctest::Approx(1.0));
  CHECK(point_plane_distance(p, Vec3(3, -2, 4)) == doctest::Approx(4.0));
  CHECK_THROWS_AS(plane_from_points(Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)), std::domain_error);
  CHECK_THROWS_AS(plane_from_points(Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)), std::domain_error);
}

TEST_CASE("projection distance matches the scalar oracle") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const auto a = rand_triangle(rng), b = rand_triangle(rng);
    CHECK(avg_projection_distance(a, b) == doctest::Approx(oracle::dpp(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("projection distance is symmetric, rigid invariant and recovers a normal offset") {
  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    const auto a = rand_triangle(rng), b = rand_triangle(rng);
    CHECK(avg_projection_distance(a, b) == avg_projection_distance(b, a));

    const Eigen::Matrix3d R = Eigen::AngleAxisd(rng.uniform(0, 6.28), rand_vec(rng, 1).normalized()).toRotationMatrix();
    const Vec3 shift = rand_vec(rng);
    std::array<Vec3, 3> ra, rb;
    for (int i = 0; i < 3; ++i) {
      ra[i] = R * a[i] + shift;
      rb[i] = R * b[i] + shift;
    }
    const double d = avg_projection_distance(a, b);
    CHECK(std::abs(avg_projection_distance(ra, rb) - d) <= 1e-9 * d);

    const Plane p = plane_from_points(a[0], a[1], a[2]);
    const double offset = rng.uniform(0.1, 5.0);
    std::array<Vec3, 3> moved;
    for (int i = 0; i < 3; ++i) moved[i] = a[i] + offset * p.normal + 0.3 * rand_vec(rng, 1).cross(p.normal);
    CHECK(std::abs(avg_projection_distance(a, moved) - offset) <= 1e-9 * offset);
  }
}

TEST_CASE("plane angle lies in [0, 90] and ignores normal orientation") {
  Rng rng(33);
  for (int t = 0; t < 20; ++t) {
    const auto a = rand_triangle(rng), b = rand_triangle(rng);
    const Plane pa = plane_from_points(a[0], a[1], a[2]), pb = plane_from_points(b[0], b[1], b[2]);
    const double ang = plane_angle(pa, pb);
    CHECK(ang >= 0.0);
    CHECK(ang <= 90.0);
    const Plane flipped{pb.point, -pb.normal};
    CHECK(plane_angle(pa, flipped) == ang);
    CHECK(plane_angle(pa, pa) <= 1e-9);
  }
}

TEST_CASE("sdr counts strictly-below errors and is monotone") {
  const std::vector<double> e{0.5, 1.0, 1.0, 2.0, 3.0};
  CHECK(sdr(e, {1.0, 2.0, 5.0}) == std::vector<double>{0.2, 0.6, 1.0});
  Rng rng(34);
  std::vector<double> errs(50);
  for (auto& x : errs) x = std::abs(rng.normal()) * 3;
  const auto curve = sdr(errs, {0.1, 0.5, 1, 2, 3, 5, 8});
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] >= curve[i - 1]);
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({1, 2, 3, 4}) == 2.5);
  CHECK(quantile({0, 10}, 0.25) == 2.5);
}

TEST_CASE("argmax extraction flags ties and rejects non-finite maps") {
  const Grid g{{2, 2, 2}, Vec3::Constant(2.0), Vec3(1, 1, 1)};
  std::vector<double> v(16, 0.0);
  v[5] = 1.0;  // channel 0 peak at (1, 0, 1)
  v[8 + 2] = v[8 + 6] = 3.0;  // channel 1 tie
  const auto ex = extract_landmarks(g, v.data(), 2);
  CHECK(ex.landmarks[0].position == Vec3(3, 1, 3));
  CHECK(ex.landmarks[0].name == "L0");
  CHECK_FALSE(ex.ambiguous[0]);
  CHECK(ex.ambiguous[1]);
  v[0] = std::nan("");
  CHECK_THROWS(extract_landmarks(g, v.data(), 2));
  CHECK(default_landmark_names(3) == std::vector<std::string>{"RCC", "LCC", "NCC"});
}

TEST_CASE("euclid errors pair landmarks by name") {
  LandmarkSet gt, pred;
  gt.points = {{"A", Vec3(0, 0, 0)}, {"B", Vec3(1, 1, 1)}};
  pred.points = {{"B", Vec3(1, 1, 2)}, {"A", Vec3(3, 4, 0)}};
  const auto e = euclid_errors(gt, pred);
  CHECK(e[0].name == "A");
  CHECK(e[0].error_mm == 5.0);
  CHECK(e[1].error_mm == 1.0);
}
