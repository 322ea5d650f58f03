// Acceptance run: one PASS/FAIL/WARN line per criterion, exit status 0 only
// when no criterion fails.

#include "glip/losses.hpp"
#include "glip/metrics.hpp"
#include "glip/ot1d.hpp"
#include "glip/phantom.hpp"
#include "glip/pipeline.hpp"
#include "glip/second_stage.hpp"
#include "glip/util.hpp"

#include "../support/oracles.hpp"

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

using namespace glip;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Warn, Fail };

struct Outcome {
  Status status = Status::Pass;
  std::string detail;
};

const char* label(Status s) { return s == Status::Pass ? "PASS" : s == Status::Warn ? "WARN" : "FAIL"; }

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Options {
  fs::path work;
  int epochs = 20;
  int depth = 3;
  int base_channels = 4;
  int phantoms = 200;
};

Logger fold_logger() {
  return [](const std::string& m) {
    if (m.find(" epoch ") == std::string::npos) std::cerr << "  " << m << "\n";
  };
}

// ---------------------------------------------------------------- losses

struct GradCase {
  LossSpec spec;
  std::string name;
};

std::vector<GradCase> zoo() {
  std::vector<GradCase> out;
  auto add = [&](LossKind k, bool gp, bool one_sided) {
    LossSpec s;
    s.kind = k;
    s.lambda = k == LossKind::OtOnly ? 0.0 : 1.0;
    s.add_grid_penalty = gp;
    s.one_sided_penalty = one_sided;
    out.push_back({s, s.label() + (one_sided ? " one-sided" : "")});
  };
  for (auto k : {LossKind::Glip, LossKind::OtOnly, LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1,
                 LossKind::SmoothL1})
    add(k, false, false);
  for (auto k : {LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1, LossKind::SmoothL1}) add(k, true, false);
  add(LossKind::Glip, false, true);
  return out;
}

bool has_penalty(const LossSpec& s) { return s.kind == LossKind::Glip || s.add_grid_penalty; }

// Nudges values until every kink of the loss is at least `gap` away, so
// central differences never straddle one.
void perturb_ties(Batch& f, const Batch& h, const LossSpec& spec, double gap, Rng& rng) {
  const auto& s = f.shape;
  const std::array<int, 3> stride{s.spatial[1] * s.spatial[2], s.spatial[2], 1};
  for (int round = 0; round < 1000; ++round) {
    bool clean = true;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      double d = f.values[i] - h.values[i];
      bool bad = false;
      if (spec.kind == LossKind::L1) bad = std::abs(d) < gap;
      if (spec.kind == LossKind::SmoothL1) bad = std::abs(d) < gap || std::abs(std::abs(d) - spec.smooth_l1_beta) < gap;
      if (bad) {
        f.values[i] += rng.uniform(2 * gap, 4 * gap);
        clean = false;
      }
    }
    if (has_penalty(spec))
      for (int b = 0; b < s.batch; ++b)
        for (int c = 0; c < s.channels; ++c) {
          const std::size_t off = f.offset(b, c);
          for (int i = 0; i < s.spatial[0]; ++i)
            for (int j = 0; j < s.spatial[1]; ++j)
              for (int k = 0; k < s.spatial[2]; ++k) {
                const Index3 idx{i, j, k};
                const std::size_t u = off + i * stride[0] + j * stride[1] + k;
                for (int a = 0; a < 3; ++a) {
                  if (idx[a] + 1 >= s.spatial[a]) continue;
                  const double d = std::abs(f.values[u] - f.values[u + stride[a]]);
                  if (d < gap || std::abs(d - 1.0) < gap) {
                    f.values[u + stride[a]] += rng.uniform(2 * gap, 4 * gap);
                    clean = false;
                  }
                }
              }
        }
    if (clean) return;
  }
  throw std::runtime_error("could not separate the sample from the loss kinks");
}

Outcome criterion_gradients() {
  Rng rng(101);
  const BatchShape shape{2, 3, {4, 5, 1}};
  int checks = 0, failed = 0;
  double worst = 0.0;
  std::string failures;
  for (const auto& c : zoo()) {
    const auto fn = make_loss(c.spec);
    for (int t = 0; t < 20; ++t) {
      Batch h = Batch::zeros(shape), f = Batch::zeros(shape);
      for (auto& v : h.values) v = rng.uniform();
      const bool prob = is_probability_loss(c.spec.kind);
      for (auto& v : f.values) v = prob ? rng.uniform(0.05, 0.95) : rng.uniform(-3.0, 3.0);
      perturb_ties(f, h, c.spec, 1e-2, rng);
      if (prob)
        for (auto& v : f.values) v = std::clamp(v, 0.02, 0.98);
      const auto r = oracle::check_gradient([&](const std::vector<double>& v) { return fn(Batch{shape, v}, h); },
                                            f.values, 1e-4, 1e-3);
      ++checks;
      worst = std::max(worst, r.worst_rel);
      if (!r.ok) {
        ++failed;
        failures += " " + c.name;
      }
    }
  }
  Outcome o;
  o.status = failed == 0 ? Status::Pass : Status::Fail;
  o.detail = std::to_string(checks - failed) + "/" + std::to_string(checks) + " tensors over " +
             std::to_string(zoo().size()) + " losses, worst relative error " + num(worst, 3) +
             (failed ? "; failing:" + failures : "");
  return o;
}

// ---------------------------------------------------------------- OT oracle

Outcome criterion_ot_oracle() {
  Rng rng(202);
  double worst_rel = 0.0;
  int dual_bad = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = static_cast<int>(rng.uniform_int(2, 32));
    std::vector<double> mu(n), nu(n);
    for (auto& v : mu) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    for (auto& v : nu) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    mu[rng.uniform_int(0, n - 1)] += 0.5;
    nu[rng.uniform_int(0, n - 1)] += 0.5;
    const double primal = w1_oracle_1d(mu, nu);
    const double dual = dual_value_1d(mu, nu).value;
    const double rel = std::abs(dual - primal) / std::max(primal, 1e-12);
    worst_rel = std::max(worst_rel, rel);
    if (rel > 0.05) ++dual_bad;
  }
  double worst_abs = 0.0;
  for (int t = 0; t < 40; ++t) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    const int atoms = 6;
    std::vector<int> a(n, 0), b(n, 0);
    for (int i = 0; i < atoms; ++i) {
      ++a[rng.uniform_int(0, n - 1)];
      ++b[rng.uniform_int(0, n - 1)];
    }
    const std::vector<double> mu(a.begin(), a.end()), nu(b.begin(), b.end());
    worst_abs = std::max(worst_abs, std::abs(w1_oracle_1d(mu, nu) - oracle::w1_exhaustive(a, b)));
  }
  Outcome o;
  o.status = dual_bad == 0 && worst_abs <= 1e-12 ? Status::Pass : Status::Fail;
  o.detail = "dual within 5% on " + std::to_string(50 - dual_bad) + "/50 (worst " + num(100 * worst_rel, 3) +
             "%), exhaustive coupling max |diff| " + num(worst_abs, 3) + " on 40 instances";
  return o;
}

// ---------------------------------------------------------------- identities

Outcome criterion_identities() {
  Rng rng(303);
  int checks = 0, failed = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++failed;
  };
  for (const BatchShape& s : {BatchShape{1, 1, {2, 1, 1}}, BatchShape{2, 3, {4, 5, 1}}, BatchShape{3, 2, {5, 4, 6}}}) {
    Batch h = Batch::zeros(s);
    for (auto& v : h.values) v = rng.uniform();
    if (s.voxels() == 2) h.values = {1.0, 0.0};
    for (double c : {0.0, 1.0, -3.75, 0.1, 1e6}) {
      Batch f = Batch::zeros(s);
      for (auto& v : f.values) v = c;
      expect(ot_loss(f, h).value == 0.0);
    }
    Batch ramp = Batch::zeros(s);
    for (int b = 0; b < s.batch; ++b)
      for (int c = 0; c < s.channels; ++c)
        for (int i = 0; i < s.spatial[0]; ++i)
          for (int j = 0; j < s.spatial[1]; ++j)
            for (int k = 0; k < s.spatial[2]; ++k)
              ramp.values[ramp.offset(b, c) + (i * s.spatial[1] + j) * s.spatial[2] + k] =
                  i - j + k + 0.25 * c - b;
    expect(grid_lipschitz_penalty(ramp).value == 0.0);
    expect(grid_lipschitz_penalty(ramp, true).value == 0.0);

    Batch f = Batch::zeros(s);
    for (auto& v : f.values) v = rng.uniform(-2, 2);
    LossSpec g;
    g.kind = LossKind::Glip;
    g.lambda = 0.0;
    const auto a = glip_loss(f, h, g), b = ot_loss(f, h);
    expect(a.value == b.value && a.grad == b.grad);
    LossSpec ot;
    ot.kind = LossKind::OtOnly;
    const auto c = make_loss(ot)(f, h);
    expect(c.value == b.value && c.grad == b.grad);

    Batch p = Batch::zeros(s);
    for (auto& v : p.values) v = rng.uniform(0.05, 0.95);
    for (auto k : {LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1, LossKind::SmoothL1, LossKind::OtOnly}) {
      LossSpec base;
      base.kind = k;
      base.lambda = 0.0;
      const auto x = with_grid_penalty(base)(p, h), y = base_loss(base)(p, h);
      expect(x.value == y.value && x.grad == y.grad);
    }
  }
  Outcome o;
  o.status = failed == 0 ? Status::Pass : Status::Fail;
  o.detail = std::to_string(checks - failed) + "/" + std::to_string(checks) + " exact identities";
  return o;
}

// ---------------------------------------------------------------- geometry

Vec3 rand_vec(Rng& rng, double scale) { return Vec3(rng.normal(), rng.normal(), rng.normal()) * scale; }

Outcome criterion_geometry() {
  Rng rng(404);
  int failed = 0;
  double worst_rigid = 0.0, worst_offset = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::array<Vec3, 3> a{rand_vec(rng, 10), rand_vec(rng, 10), rand_vec(rng, 10)};
    const std::array<Vec3, 3> b{rand_vec(rng, 10), rand_vec(rng, 10), rand_vec(rng, 10)};
    const double d = avg_projection_distance(a, b);
    if (d != avg_projection_distance(b, a)) ++failed;

    const Eigen::Matrix3d R =
        Eigen::AngleAxisd(rng.uniform(0, 2 * M_PI), rand_vec(rng, 1).normalized()).toRotationMatrix();
    const Vec3 shift = rand_vec(rng, 50);
    std::array<Vec3, 3> ra, rb;
    for (int i = 0; i < 3; ++i) {
      ra[i] = R * a[i] + shift;
      rb[i] = R * b[i] + shift;
    }
    const double rel = std::abs(avg_projection_distance(ra, rb) - d) / d;
    worst_rigid = std::max(worst_rigid, rel);
    if (rel > 1e-9) ++failed;

    const Plane pa = plane_from_points(a[0], a[1], a[2]);
    const double offset = rng.uniform(0.1, 10.0);
    std::array<Vec3, 3> moved;
    for (int i = 0; i < 3; ++i) moved[i] = a[i] + offset * pa.normal + rand_vec(rng, 1).cross(pa.normal);
    const double off_rel = std::abs(avg_projection_distance(a, moved) - offset) / offset;
    worst_offset = std::max(worst_offset, off_rel);
    if (off_rel > 1e-9) ++failed;

    const Plane pb = plane_from_points(b[0], b[1], b[2]);
    const double ang = plane_angle(pa, pb);
    if (!(ang >= 0.0 && ang <= 90.0)) ++failed;
    if (plane_angle(pa, Plane{pb.point, -pb.normal}) != ang) ++failed;
    if (plane_angle(Plane{pa.point, -pa.normal}, pb) != ang) ++failed;
    if (plane_angle(pa, pa) > 1e-9) ++failed;

    std::vector<double> errs(30);
    for (auto& e : errs) e = std::abs(rng.normal()) * 4;
    std::vector<double> th(12);
    for (auto& x : th) x = rng.uniform(0, 12);
    std::sort(th.begin(), th.end());
    const auto curve = sdr(errs, th);
    for (std::size_t i = 1; i < curve.size(); ++i)
      if (curve[i] < curve[i - 1]) ++failed;
  }
  Outcome o;
  o.status = failed == 0 ? Status::Pass : Status::Fail;
  o.detail = std::to_string(failed) + " violations over 200 trials; rigid rel " + num(worst_rigid, 3) +
             ", normal offset rel " + num(worst_offset, 3);
  return o;
}

// ---------------------------------------------------------------- heatmaps

Outcome criterion_heatmaps() {
  Rng rng(505);
  int failed = 0, trials = 0;
  double worst_kernel = 0.0;
  for (bool squared : {false, true})
    for (int t = 0; t < 100; ++t, ++trials) {
      const Grid g{{16, 16, 16}, Vec3::Constant(rng.uniform(0.5, 2.0)), rand_vec(rng, 5)};
      const HeatmapConfig cfg{rng.uniform(0.5, 4.0), squared};
      const Vec3 l = g.origin + Vec3(rng.uniform(0, 15), rng.uniform(0, 15), rng.uniform(0, 15)) * g.spacing.x();
      LandmarkSet set;
      set.points = {{"A", l}};
      const Heatmap h = generate_heatmap(g, set, cfg);
      const Vec3 vi = world_to_voxel(g, l);
      const Index3 nearest{static_cast<int>(std::lround(vi.x())), static_cast<int>(std::lround(vi.y())),
                           static_cast<int>(std::lround(vi.z()))};
      const auto ex = extract_landmarks(h);
      if ((ex.landmarks[0].position - g.position(nearest)).norm() > 1e-12) ++failed;
      for (std::size_t u = 0; u < h.data.size(); ++u) {
        const double expect = heatmap_kernel((g.position(g.unravel(u)) - l).norm(), cfg);
        worst_kernel = std::max(worst_kernel, std::abs(h.data[u] - expect));
      }
      // A landmark on a node: the six axis neighbours and the eight corner
      // neighbours each share one value.
      LandmarkSet centred;
      const Index3 c{static_cast<int>(rng.uniform_int(1, 14)), static_cast<int>(rng.uniform_int(1, 14)),
                     static_cast<int>(rng.uniform_int(1, 14))};
      centred.points = {{"A", g.position(c)}};
      const Heatmap hc = generate_heatmap(g, centred, cfg);
      auto at = [&](int di, int dj, int dk) { return hc.data[g.linear_index(c[0] + di, c[1] + dj, c[2] + dk)]; };
      const double axis = at(1, 0, 0), corner = at(1, 1, 1);
      auto differs = [](double a, double b) { return std::abs(a - b) > 1e-12; };
      for (int s : {-1, 1}) {
        if (differs(at(s, 0, 0), axis) || differs(at(0, s, 0), axis) || differs(at(0, 0, s), axis)) ++failed;
        for (int s2 : {-1, 1})
          for (int s3 : {-1, 1})
            if (differs(at(s, s2, s3), corner)) ++failed;
      }
    }
  if (worst_kernel > 1e-12) ++failed;
  Outcome o;
  o.status = failed == 0 ? Status::Pass : Status::Fail;
  o.detail = std::to_string(trials) + " placements, both conventions; " + std::to_string(failed) +
             " violations, max |h - kernel(d)| " + num(worst_kernel, 3);
  return o;
}

// ---------------------------------------------------------------- experiments

struct Experiment {
  Options opt;
  RunConfig base;
  Dataset data;
  SplitPlan plan;
  fs::path runs;
  std::optional<CvResult> glip;
  std::optional<EvalReport> glip_test;
};

RunConfig experiment_config(const Options& opt) {
  RunConfig c;
  c.loss.kind = LossKind::Glip;
  c.loss.lambda = 10.0;
  c.heatmap.sigma = 1.0;
  c.folds = 4;
  c.split_ratio = {4, 1};
  c.epochs = opt.epochs;
  c.batch_size = 4;
  c.depth = opt.depth;
  c.base_channels = opt.base_channels;
  c.learning_rate = 1e-3;
  c.seed = 0;
  c.patch.patch_size = 16;
  c.patch.disturbance_grid = {2};
  c.patch.sigma_grid = {1.0};
  c.patch.lambda_grid = {10.0};
  c.patch.epochs = 10;
  c.patch.batch_size = 4;
  c.patch.depth = 2;
  c.patch.base_channels = 4;
  return c;
}

Experiment make_experiment(const Options& opt) {
  Experiment e;
  e.opt = opt;
  e.base = experiment_config(opt);
  PhantomConfig p;
  p.count = opt.phantoms;
  std::vector<Sample> samples;
  for (int i = 0; i < p.count; ++i) samples.push_back(generate_phantom(p, i));
  e.data = prepare_dataset(samples, e.base);
  e.plan = split_cv_test(e.data.manifest(), e.base.folds, e.base.split_ratio, e.base.seed);
  e.runs = opt.work / "runs";
  return e;
}

double voxel_mm(const Experiment& e) { return e.data.samples().front().coarse.grid.spacing.x(); }

Outcome criterion_end_to_end(Experiment& e) {
  e.glip = run_cv(e.base, e.plan, e.data, e.runs, fold_logger());
  e.glip_test = evaluate_test(*e.glip, e.plan, e.data, null_logger());
  write_run_report(*e.glip, &*e.glip_test);
  const double med = median(e.glip_test->landmark_errors());
  const double limit = 2.0 * voxel_mm(e);

  const fs::path rerun_dir = e.opt.work / "rerun_fold0";
  fs::remove_all(rerun_dir);
  const FoldResult again = train_fold(e.base, 0, e.plan, e.data, rerun_dir, null_logger());
  const FoldResult& first = e.glip->folds[0];
  bool same = again.val_errors == first.val_errors && again.history.size() == first.history.size();
  for (std::size_t i = 0; same && i < again.history.size(); ++i)
    same = again.history[i].train_loss == first.history[i].train_loss &&
           again.history[i].val_median_mm == first.history[i].val_median_mm;

  std::string folds;
  for (const auto& f : e.glip->folds) folds += " " + num(f.val_median_mm, 3);
  Outcome o;
  o.status = med <= limit && !e.glip->diverged && same ? Status::Pass : Status::Fail;
  o.detail = "test median " + num(med, 3) + " mm (limit " + num(limit, 3) + " mm = 2 voxels), fold val medians" + folds +
             ", diverged " + (e.glip->diverged ? "yes" : "no") + ", fold-0 rerun bitwise " + (same ? "yes" : "no");
  return o;
}

Outcome criterion_tradeoff(Experiment& e) {
  auto cv_of = [&](LossKind kind, double sigma) {
    RunConfig c = e.base;
    c.loss.kind = kind;
    c.heatmap.sigma = sigma;
    if (kind != LossKind::Glip) c.loss.lambda = 10.0;
    const CvResult r = run_cv(c, e.plan, e.data, e.runs, fold_logger());
    std::cerr << "  " << c.loss.label() << " sigma " << sigma << ": CV median " << r.cv_median_mm
              << (r.diverged ? " (diverged)" : "") << "\n";
    return r;
  };
  const CvResult& g1 = *e.glip;
  const CvResult g16 = cv_of(LossKind::Glip, 16.0);
  const bool glip_ok = !g1.diverged && (g16.diverged || g1.cv_median_mm <= g16.cv_median_mm);

  std::ostringstream table;
  table << "GLIP s1 " << num(g1.cv_median_mm, 3) << " vs s16 " << num(g16.cv_median_mm, 3);
  bool pathology = false;
  for (auto kind : {LossKind::Mse, LossKind::Wce}) {
    const CvResult s1 = cv_of(kind, 1.0), s16 = cv_of(kind, 16.0);
    const double best = std::min(s1.diverged ? INFINITY : s1.cv_median_mm, s16.diverged ? INFINITY : s16.cv_median_mm);
    const bool hit = s1.diverged || (std::isfinite(best) && s1.cv_median_mm >= 2.0 * best);
    pathology = pathology || hit;
    table << "; " << to_string(kind) << " s1 " << (s1.diverged ? "diverged" : num(s1.cv_median_mm, 3)) << " s16 "
          << (s16.diverged ? "diverged" : num(s16.cv_median_mm, 3)) << (hit ? " (pathology)" : "");
  }
  Outcome o;
  if (!glip_ok) {
    o.status = Status::Fail;
  } else {
    o.status = pathology ? Status::Pass : Status::Warn;
  }
  o.detail = table.str() + (glip_ok && !pathology ? "; imbalance pathology not elicited by the synthetic data" : "");
  return o;
}

int patch_round_trip_mismatches(const Experiment& e) {
  Rng rng(808);
  int mismatches = 0;
  const int ps = e.base.patch.patch_size;
  for (int t = 0; t < 200; ++t) {
    const Volume& v = e.data.samples()[rng.uniform_int(0, e.data.size() - 1)].full;
    const Vec3 centre = v.grid.origin + Vec3(rng.uniform(-4, v.grid.extent().x() + 4),
                                             rng.uniform(-4, v.grid.extent().y() + 4),
                                             rng.uniform(-4, v.grid.extent().z() + 4));
    const int pd = static_cast<int>(rng.uniform_int(0, 8));
    const Patch p = extract_patch(v, centre, ps, pd, t % 2 ? &rng : nullptr);
    for (int i = 0; i < ps; ++i)
      for (int j = 0; j < ps; ++j)
        for (int k = 0; k < ps; ++k) {
          const Index3 src{p.offset[0] + i, p.offset[1] + j, p.offset[2] + k};
          const float expect = v.grid.contains(src) ? v.at(src[0], src[1], src[2]) : 0.0f;
          if (p.volume.at(i, j, k) != expect || p.volume.grid.position({i, j, k}) != v.grid.position(src) ||
              patch_voxel_world(p, v.grid, {i, j, k}) != v.grid.position(src))
            ++mismatches;
        }
    const Index3 near = nearest_voxel(v.grid, centre);
    for (int a = 0; a < 3; ++a)
      if (p.offset[a] != near[a] - ps / 2 - pd + p.u[a]) ++mismatches;
  }
  return mismatches;
}

Outcome criterion_two_stage(Experiment& e) {
  const int mismatches = patch_round_trip_mismatches(e);
  const std::string round_trip =
      "patch round-trip mismatches " + std::to_string(mismatches) + " over 200 patches";
  const double half_voxel = 0.5 * voxel_mm(e);
  const int ps = e.base.patch.patch_size;
  Outcome o;
  try {
    const SecondStageResult r = second_stage_run(*e.glip, e.plan, e.data, fold_logger());
    const auto stages = r.report.group_by(GroupKey::Stage);
    const double s1 = sdr(stages.at("1").landmark_errors(), {half_voxel})[0];
    const double s2 = sdr(stages.at("2").landmark_errors(), {half_voxel})[0];
    o.status = s2 >= s1 && mismatches == 0 ? Status::Pass : Status::Fail;
    o.detail = "SDR@" + num(half_voxel, 3) + " mm stage 1 " + num(s1, 3) + ", stage 2 " + num(s2, 3) +
               " (p^s=" + std::to_string(ps) + ", p^d=" + std::to_string(r.best.disturbance) + "); " + round_trip;
  } catch (const std::exception& ex) {
    const double s1 = sdr(e.glip_test->landmark_errors(), {half_voxel})[0];
    const double half_width = 0.5 * ps * e.data.samples().front().full.grid.spacing.x();
    o.status = Status::Fail;
    o.detail = std::string("no second-stage model: ") + ex.what() + " (stage-1 test median " +
               num(median(e.glip_test->landmark_errors()), 3) + " mm against a patch half-width of " +
               num(half_width, 3) + " mm; stage-1 SDR@" + num(half_voxel, 3) + " mm " + num(s1, 3) + "); " + round_trip;
  }
  return o;
}

Outcome criterion_ensemble(Experiment& e) {
  auto nets = load_fold_networks(*e.glip, 3);
  std::vector<Network> same;
  for (int i = 0; i < 4; ++i) {
    same.emplace_back(nets.front().config());
    same.back().load(e.glip->folds[0].checkpoint());
  }
  std::vector<const Volume*> vols;
  for (const auto& id : e.plan.test) vols.push_back(&e.data.at(id).coarse);
  const Batch single = predict_heatmaps(nets.front(), vols);
  const Batch ens = ensemble_heatmaps(same, vols);
  int differing = 0;
  for (const auto& id : e.plan.test) {
    const Volume& v = e.data.at(id).coarse;
    const auto names = e.data.landmark_names();
    std::vector<Network> one;
    one.emplace_back(nets.front().config());
    one.back().load(e.glip->folds[0].checkpoint());
    const auto a = ensemble_predict(same, v, names), b = ensemble_predict(one, v, names);
    for (std::size_t i = 0; i < a.landmarks.size(); ++i)
      if (a.landmarks[i].position != b.landmarks[i].position) ++differing;
  }
  Outcome o;
  o.status = ens.values == single.values && differing == 0 ? Status::Pass : Status::Fail;
  o.detail = std::to_string(vols.size()) + " test volumes, heatmaps " +
             (ens.values == single.values ? "bitwise equal" : "differ") + ", " + std::to_string(differing) +
             " differing landmarks";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options opt;
  opt.work = fs::temp_directory_path() / "glip_acceptance";
  std::vector<int> only;
  app.add_option("--work", opt.work, "Working directory for training runs");
  app.add_option("--epochs", opt.epochs, "Epochs per network in the experiments");
  app.add_option("--depth", opt.depth, "Network depth in the experiments");
  app.add_option("--base-channels", opt.base_channels, "Base channel count in the experiments");
  app.add_option("--phantoms", opt.phantoms, "Number of phantoms");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(opt.work);

  std::optional<Experiment> exp;
  auto experiment = [&]() -> Experiment& {
    if (!exp) exp = make_experiment(opt);
    return *exp;
  };
  auto glip_run = [&]() -> Experiment& {
    Experiment& e = experiment();
    if (!e.glip) {
      e.glip = run_cv(e.base, e.plan, e.data, e.runs, fold_logger());
      e.glip_test = evaluate_test(*e.glip, e.plan, e.data, null_logger());
    }
    return e;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss gradients", criterion_gradients},
      {"OT primal-dual oracle", criterion_ot_oracle},
      {"trivial identities", criterion_identities},
      {"geometry", criterion_geometry},
      {"heatmaps", criterion_heatmaps},
      {"end-to-end GLiP", [&] { return criterion_end_to_end(experiment()); }},
      {"trade-off", [&] { return criterion_tradeoff(glip_run()); }},
      {"two-stage", [&] { return criterion_two_stage(glip_run()); }},
      {"ensemble", [&] { return criterion_ensemble(glip_run()); }},
  };

  int failures = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {Status::Fail, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::Fail) ++failures;
    std::ostringstream line;
    line << "criterion " << id << " [" << criteria[i].first << "]: " << label(o.status) << " - " << o.detail << " ("
         << num(secs, 3) << " s)";
    lines.push_back(line.str());
    std::cout << line.str() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << "\n";
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return failures ? 1 : 0;
}
