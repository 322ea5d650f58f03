#include "glip/phantom.hpp"
#include "glip/pipeline.hpp"
#include "glip/second_stage.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace glip;
namespace fs = std::filesystem;

namespace {

std::vector<ManifestEntry> fake_manifest(int n) {
  std::vector<ManifestEntry> m;
  for (int i = n - 1; i >= 0; --i) m.push_back({phantom_id(i), QualityGrade::Q1, 0});
  return m;
}

RunConfig tiny_config() {
  RunConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.folds = 2;
  c.depth = 2;
  c.base_channels = 2;
  c.heatmap.sigma = 2.0;
  c.loss.lambda = 1.0;
  c.patch.patch_size = 8;
  c.patch.depth = 1;
  c.patch.base_channels = 2;
  c.patch.epochs = 1;
  c.patch.disturbance_grid = {0, 1};
  c.patch.sigma_grid = {1.0};
  c.patch.lambda_grid = {1.0};
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset data = [] {
    PhantomConfig p;
    p.count = 10;
    p.shape = {32, 32, 32};
    p.spacing = Vec3::Ones();
    std::vector<Sample> samples;
    for (int i = 0; i < p.count; ++i) samples.push_back(generate_phantom(p, i));
    return prepare_dataset(samples, tiny_config());
  }();
  return data;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("glip_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("split is a deterministic partition of the manifest") {
  const auto m = fake_manifest(23);
  const auto a = split_cv_test(m, 4, {4, 1}, 3);
  const auto b = split_cv_test(m, 4, {4, 1}, 3);
  CHECK(a.test == b.test);
  CHECK(a.folds == b.folds);
  CHECK(a.test.size() == 5);  // round(23 / 5)
  std::set<std::string> seen(a.test.begin(), a.test.end());
  std::size_t total = a.test.size();
  for (const auto& f : a.folds) {
    CHECK(f.size() >= 4);
    CHECK(f.size() <= 5);
    total += f.size();
    seen.insert(f.begin(), f.end());
  }
  CHECK(total == 23);
  CHECK(seen.size() == 23);
  CHECK(a.split_of(a.test[0]) == "test");
  CHECK(a.split_of(a.folds[2][0]) == "cv-fold-2");
  CHECK(a.training_ids(1).size() == total - a.test.size() - a.folds[1].size());
  // Manifest order does not matter, the seed does.
  auto shuffled = m;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(split_cv_test(shuffled, 4, {4, 1}, 3).test == a.test);
  CHECK(split_cv_test(m, 4, {4, 1}, 4).test != a.test);
}

TEST_CASE("hyperparameter selection breaks ties toward smaller sigma then lambda") {
  std::vector<SweepPoint> pts{{4, 1, 2.0, false}, {1, 10, 2.0, false}, {1, 1, 2.0, false}, {0.5, 1, 1.0, true}};
  const auto best = select_hyperparams(pts);
  CHECK(best.sigma == 1);
  CHECK(best.lambda == 1);
  CHECK_THROWS(select_hyperparams({{1, 1, 0, true}}));
}

TEST_CASE("patches keep their origin bookkeeping exact") {
  Volume v = Volume::zeros({{10, 12, 14}, Vec3::Constant(0.5), Vec3(3, -2, 1)});
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i + 1);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Vec3 c = v.grid.origin + Vec3(rng.uniform(-2, 8), rng.uniform(-2, 8), rng.uniform(-2, 8));
    const int pd = static_cast<int>(rng.uniform_int(0, 3));
    const Patch p = extract_patch(v, c, 4, pd, t % 2 ? &rng : nullptr);
    const Index3 near = nearest_voxel(v.grid, c);
    for (int a = 0; a < 3; ++a) {
      CHECK(p.region_start[a] == near[a] - 2 - pd);
      CHECK(p.offset[a] == p.region_start[a] + p.u[a]);
      if (t % 2 == 0) CHECK(p.u[a] == pd);
      if (t % 2 == 1 && pd > 0) {
        CHECK(p.u[a] >= 1);
        CHECK(p.u[a] <= 2 * pd);
      }
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          const Index3 src{p.offset[0] + i, p.offset[1] + j, p.offset[2] + k};
          const float expect = v.grid.contains(src) ? v.at(src[0], src[1], src[2]) : 0.0f;
          CHECK(p.volume.at(i, j, k) == expect);
          CHECK(patch_voxel_world(p, v.grid, {i, j, k}) == v.grid.position(src));
          CHECK(p.volume.grid.position({i, j, k}) == v.grid.position(src));
        }
  }
  Rng zero(1);
  CHECK(sample_disturbance(0, zero) == Index3{0, 0, 0});
}

TEST_CASE("cross validation writes its layout, resumes, and ensembles") {
  const auto root = scratch("cv");
  const auto& data = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto plan = split_cv_test(data.manifest(), cfg.folds, cfg.split_ratio, cfg.seed);
  const auto cv = run_cv(cfg, plan, data, root, null_logger());
  CHECK(cv.run_dir == root / cfg.hash());
  CHECK(fs::exists(cv.run_dir / "config.json"));
  REQUIRE(cv.folds.size() == 2);
  for (const auto& f : cv.folds) {
    CHECK(fs::exists(f.checkpoint()));
    CHECK(fs::exists(f.fold_dir / "metrics.csv"));
    CHECK(fs::exists(f.fold_dir / "checkpoint.json"));
    CHECK(f.history.size() == 2);
    CHECK_FALSE(f.resumed);
  }
  std::ifstream metrics(cv.folds[0].fold_dir / "metrics.csv");
  std::string header;
  std::getline(metrics, header);
  CHECK(header.rfind("schema_version,", 0) == 0);

  const auto again = run_cv(cfg, plan, data, root, null_logger());
  CHECK(again.folds[0].resumed);
  CHECK(again.cv_median_mm == cv.cv_median_mm);

  auto nets = load_fold_networks(cv, 3);
  REQUIRE(nets.size() == 2);
  const auto report = evaluate_test(cv, plan, data, null_logger());
  CHECK(report.records.size() == plan.test.size());
  write_run_report(cv, &report);
  CHECK(EvalReport::read_json(cv.run_dir / "report.json").records.size() == report.records.size());

  // Identical models ensemble to the single model.
  std::vector<Network> same;
  for (int i = 0; i < 4; ++i) {
    same.emplace_back(nets[0].config());
    same.back().load(cv.folds[0].checkpoint());
  }
  const Volume* v = &data.at(plan.test[0]).coarse;
  const Batch single = predict_heatmaps(nets[0], {v});
  CHECK(ensemble_heatmaps(same, {v}).values == single.values);

  // Coordinate averaging of one model is that model's decode.
  std::vector<Network> one;
  one.emplace_back(nets[0].config());
  one.back().load(cv.folds[0].checkpoint());
  const auto names = data.landmark_names();
  const auto by_coords = ensemble_predict(one, *v, names, {DecodeRule::Argmax, EnsembleRule::CoordinateMean});
  const auto by_maps = ensemble_predict(one, *v, names);
  for (std::size_t i = 0; i < names.size(); ++i)
    CHECK(by_coords.landmarks[i].position == by_maps.landmarks[i].position);
  const auto mixed = ensemble_predict(nets, *v, names, {DecodeRule::Centroid, EnsembleRule::CoordinateMean});
  CHECK(mixed.landmarks.size() == names.size());
}

TEST_CASE("training is bitwise reproducible") {
  const auto& data = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto plan = split_cv_test(data.manifest(), cfg.folds, cfg.split_ratio, cfg.seed);
  const auto a = train_fold(cfg, 0, plan, data, scratch("det_a"), null_logger());
  const auto b = train_fold(cfg, 0, plan, data, scratch("det_b"), null_logger());
  CHECK(a.val_errors == b.val_errors);
  CHECK(a.history.back().train_loss == b.history.back().train_loss);
}

TEST_CASE("divergence is detected from non-finite outputs and survives a resume") {
  const auto& data = tiny_dataset();
  RunConfig cfg = tiny_config();
  cfg.learning_rate = 1e30;
  cfg.epochs = 3;
  cfg.divergence_patience = 1;
  const auto plan = split_cv_test(data.manifest(), cfg.folds, cfg.split_ratio, cfg.seed);
  const auto dir = scratch("diverge");
  const auto f = train_fold(cfg, 0, plan, data, dir, null_logger());
  CHECK(f.diverged);
  CHECK_FALSE(f.divergence_reason.empty());

  const auto again = train_fold(cfg, 0, plan, data, dir, null_logger());
  CHECK(again.resumed);
  CHECK(again.diverged);
  CHECK(std::isnan(again.history.back().val_median_mm));
}

TEST_CASE("second stage runs its grid and reports both stages") {
  const auto root = scratch("stage2");
  const auto& data = tiny_dataset();
  const RunConfig cfg = tiny_config();
  const auto plan = split_cv_test(data.manifest(), cfg.folds, cfg.split_ratio, cfg.seed);
  const auto cv = run_cv(cfg, plan, data, root, null_logger());
  const auto r = second_stage_run(cv, plan, data, null_logger());
  CHECK(r.points.size() == 2);
  CHECK(r.report.group_by(GroupKey::Stage).size() == 2);
  CHECK(r.sdr_stage1.size() == r.report.sdr_thresholds.size());
  CHECK(fs::exists(cv.run_dir / "stage2" / "report.json"));
}
