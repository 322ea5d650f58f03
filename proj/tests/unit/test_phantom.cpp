#include "glip/phantom.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace glip;

TEST_CASE("phantoms are determined by (base seed, index)") {
  PhantomConfig cfg;
  cfg.count = 3;
  const Sample a = generate_phantom(cfg, 1), b = generate_phantom(cfg, 1), c = generate_phantom(cfg, 2);
  CHECK(a.volume.data == b.volume.data);
  CHECK(a.landmarks[0].position == b.landmarks[0].position);
  CHECK(a.volume.data != c.volume.data);
  cfg.base_seed = 5;
  CHECK(generate_phantom(cfg, 1).volume.data != a.volume.data);
  CHECK(phantom_seed(0, 1) != phantom_seed(1, 0));
}

TEST_CASE("hinge markers are the brightest structures") {
  PhantomConfig cfg;
  cfg.count = 4;
  cfg.noise_sigma = 0.0;
  cfg.blur_sigma_range = {0.0, 0.0};
  for (int i = 0; i < cfg.count; ++i) {
    const Sample s = generate_phantom(cfg, i);
    REQUIRE(s.landmarks.names() == std::vector<std::string>{"RCC", "LCC", "NCC"});
    const auto it = std::max_element(s.volume.data.begin(), s.volume.data.end());
    const Index3 idx = s.volume.grid.unravel(static_cast<std::size_t>(it - s.volume.data.begin()));
    const Vec3 voxel = world_to_voxel(s.volume.grid, s.landmarks[0].position);
    for (int a = 0; a < 3; ++a) CHECK(idx[a] == static_cast<int>(std::lround(voxel[a])));
    for (const auto& l : s.landmarks.points) {
      const Vec3 v = world_to_voxel(s.volume.grid, l.position);
      for (int a = 0; a < 3; ++a) {
        CHECK(v[a] >= 0.0);
        CHECK(v[a] <= s.volume.grid.shape[a] - 1);
      }
    }
  }
}

TEST_CASE("quality grades follow the degradation thresholds") {
  const auto t = default_quality_thresholds();
  CHECK(grade_for_degradation(t, 0.0) == QualityGrade::Q4);
  CHECK(grade_for_degradation(t, 0.5) == QualityGrade::Q3Minus);
  CHECK(grade_for_degradation(t, 1.0) == QualityGrade::Q1);
}

TEST_CASE("dataset generation writes a reproducible manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "glip_unit_phantoms";
  std::filesystem::remove_all(dir);
  PhantomConfig cfg;
  cfg.count = 3;
  cfg.shape = {32, 32, 32};
  cfg.spacing = Vec3::Ones();
  const auto m1 = generate_dataset(cfg, dir);
  const auto m2 = generate_dataset(cfg, dir);
  CHECK(m1 == m2);
  CHECK(read_manifest(dir) == m1);
  CHECK(load_dataset(dir).size() == 3);
}

TEST_CASE("invalid phantom configs are rejected") {
  PhantomConfig cfg;
  cfg.count = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = PhantomConfig{};
  cfg.annulus_radius_range = {5.0, 4.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_phantom(PhantomConfig{}, 1000), std::invalid_argument);
}
