#include "glip/second_stage.hpp"

#include "glip/util.hpp"

#include <cmath>
#include <limits>

namespace glip {

using nlohmann::json;

Index3 nearest_voxel(const Grid& grid, const Vec3& world) {
  const Vec3 f = world_to_voxel(grid, world);
  return {static_cast<int>(std::lround(f[0])), static_cast<int>(std::lround(f[1])), static_cast<int>(std::lround(f[2]))};
}

Index3 sample_disturbance(int disturbance, Rng& rng) {
  if (disturbance < 0) throw std::invalid_argument(concat("disturbance must be >= 0, got ", disturbance));
  if (disturbance == 0) return {0, 0, 0};
  Index3 u;
  for (int a = 0; a < 3; ++a) u[a] = static_cast<int>(rng.uniform_int(1, 2 * disturbance));
  return u;
}

Patch extract_patch(const Volume& v, const Vec3& center, int patch_size, int disturbance, Rng* rng) {
  if (patch_size < 1) throw std::invalid_argument(concat("patch size must be >= 1, got ", patch_size));
  if (disturbance < 0) throw std::invalid_argument(concat("disturbance must be >= 0, got ", disturbance));
  if (!center.allFinite()) throw std::invalid_argument("patch center is not finite");
  const Index3 c = nearest_voxel(v.grid, center);
  Patch p;
  p.u = rng ? sample_disturbance(disturbance, *rng) : Index3{disturbance, disturbance, disturbance};
  for (int a = 0; a < 3; ++a) {
    p.region_start[a] = c[a] - patch_size / 2 - disturbance;
    p.offset[a] = p.region_start[a] + p.u[a];
  }
  Grid g;
  g.shape = {patch_size, patch_size, patch_size};
  g.spacing = v.grid.spacing;
  g.origin = v.grid.position(p.offset);
  p.volume = Volume::zeros(g);
  std::size_t n = 0;
  for (int i = 0; i < patch_size; ++i)
    for (int j = 0; j < patch_size; ++j)
      for (int k = 0; k < patch_size; ++k, ++n) {
        const Index3 s{p.offset[0] + i, p.offset[1] + j, p.offset[2] + k};
        if (v.grid.contains(s)) p.volume.data[n] = v.at(s[0], s[1], s[2]);
      }
  return p;
}

Vec3 patch_voxel_world(const Patch& p, const Grid& source, const Index3& idx) {
  return source.position({p.offset[0] + idx[0], p.offset[1] + idx[1], p.offset[2] + idx[2]});
}

std::map<std::string, LandmarkSet> global_predictions(Network& net, const std::vector<std::string>& ids,
                                                      const Dataset& data, int batch_size, DecodeRule decode) {
  const auto names = data.landmark_names();
  std::map<std::string, LandmarkSet> out;
  for (std::size_t b0 = 0; b0 < ids.size(); b0 += batch_size) {
    std::vector<const Volume*> vols;
    for (std::size_t i = b0; i < std::min(ids.size(), b0 + batch_size); ++i) vols.push_back(&data.at(ids[i]).coarse);
    const Batch pred = predict_heatmaps(net, vols);
    for (std::size_t i = 0; i < vols.size(); ++i)
      out[ids[b0 + i]] = extract_landmarks(vols[i]->grid, pred.values.data() + pred.offset(static_cast<int>(i), 0),
                                           pred.shape.channels, names, decode)
                             .landmarks;
  }
  return out;
}

namespace {

std::string point_key(int pd, double sigma, double lambda) {
  return concat("pd", pd, "_s", format_number(sigma), "_l", format_number(lambda));
}

LossSpec local_loss(const LossSpec& base, double lambda) {
  LossSpec l = base;
  l.lambda = lambda;
  if (l.kind == LossKind::Glip && lambda == 0.0) l.kind = LossKind::OtOnly;
  return l;
}

NetworkConfig local_network(const RunConfig& cfg, const LossSpec& loss, int out_channels, int fold) {
  NetworkConfig n;
  n.out_channels = out_channels;
  n.depth = cfg.patch.depth;
  n.base_channels = cfg.patch.base_channels;
  n.head = head_for_loss(loss.kind);
  n.batch_norm = cfg.batch_norm;
  n.seed = mix_seed(cfg.seed ^ 0x6c6f63616cULL, static_cast<std::uint64_t>(fold));
  n.input_shape = Index3{cfg.patch.patch_size, cfg.patch.patch_size, cfg.patch.patch_size};
  return n;
}

TrainItem patch_item(const PreparedSample& s, const Vec3& center, const PatchConfig& pc, int disturbance, Rng* rng,
                     int channel) {
  auto vol = std::make_shared<Volume>(extract_patch(s.full, center, pc.patch_size, disturbance, rng).volume);
  TrainItem it;
  it.input = vol.get();
  it.storage = std::move(vol);
  it.landmarks = s.landmarks;
  it.channel = channel;
  return it;
}

struct PointOutcome {
  StageTwoPoint point;
  std::vector<FoldResult> folds;
};

}  // namespace

SecondStageResult second_stage_run(const CvResult& first, const SplitPlan& plan, const Dataset& data, const Logger& log) {
  const RunConfig& cfg = first.config;
  const PatchConfig& pc = cfg.patch;
  const auto names = data.landmark_names();
  const int nl = static_cast<int>(names.size());
  for (const auto& f : first.folds)
    if (f.diverged) throw std::runtime_error(concat("first-stage fold ", f.fold, " diverged; second stage needs every fold"));

  auto global_nets = load_fold_networks(first, nl);
  if (static_cast<int>(global_nets.size()) != cfg.folds) throw std::runtime_error("first-stage run is incomplete");

  // Per-fold global predictions on all CV samples.
  std::vector<std::string> cv_ids;
  for (const auto& f : plan.folds) cv_ids.insert(cv_ids.end(), f.begin(), f.end());
  std::vector<std::map<std::string, LandmarkSet>> fold_preds;
  for (int k = 0; k < cfg.folds; ++k) fold_preds.push_back(global_predictions(global_nets[k], cv_ids, data, cfg.batch_size, cfg.inference.decode));

  SecondStageResult result;
  std::map<std::string, LandmarkSet> stage1_test;
  for (const auto& id : plan.test) {
    const auto& s = data.at(id);
    const auto ex = ensemble_predict(global_nets, s.coarse, names, cfg.inference);
    stage1_test[id] = ex.landmarks;
    result.report.records.push_back(make_record(id, s.quality, cfg.loss.label(), 1, s.landmarks, ex.landmarks, ex.any_ambiguous()));
  }

  const auto stage_dir = first.run_dir / "stage2";
  std::vector<PointOutcome> outcomes;
  for (int pd : pc.disturbance_grid)
    for (double sigma : pc.sigma_grid)
      for (double lambda : pc.lambda_grid) {
        PointOutcome o;
        o.point = {pd, sigma, lambda, 0.0, false, point_key(pd, sigma, lambda)};
        const LossSpec loss = local_loss(cfg.loss, lambda);
        HeatmapConfig hm = cfg.heatmap;
        hm.sigma = sigma;
        std::vector<double> pooled;
        for (int k = 0; k < cfg.folds; ++k) {
          const auto train_ids = plan.training_ids(k);
          const auto& preds = fold_preds[k];
          TrainSpec spec;
          spec.loss = loss;
          spec.heatmap = hm;
          spec.network = local_network(cfg, loss, nl, k);
          spec.learning_rate = cfg.learning_rate;
          spec.epochs = pc.epochs;
          spec.batch_size = pc.batch_size;
          spec.divergence_patience = cfg.divergence_patience;
          spec.decode = cfg.inference.decode;
          spec.seed = mix_seed(cfg.seed ^ 0x7374616765ULL, static_cast<std::uint64_t>(k));
          const std::uint64_t item_seed = mix_seed(spec.seed, 0x7061746368ULL);
          spec.train_items = [&data, &preds, train_ids, pc, pd, nl, item_seed](int epoch) {
            std::vector<TrainItem> items;
            Rng rng(mix_seed(item_seed, static_cast<std::uint64_t>(epoch)));
            for (const auto& id : train_ids)
              for (int i = 0; i < nl; ++i)
                items.push_back(patch_item(data.at(id), preds.at(id)[i].position, pc, pd, &rng, -1));
            return items;
          };
          for (const auto& id : plan.folds[k])
            for (int i = 0; i < nl; ++i) spec.val_items.push_back(patch_item(data.at(id), preds.at(id)[i].position, pc, pd, nullptr, i));
          spec.diagonal_mm = spec.val_items.front().input->grid.diagonal_mm();
          spec.descriptor = {{"network_config", network_config_json(spec.network)},
                             {"loss_spec", loss_spec_json(loss)},
                             {"fold_index", k},
                             {"epoch", pc.epochs},
                             {"config_hash", first.hash},
                             {"stage", 2},
                             {"patch_size", pc.patch_size},
                             {"disturbance", pd},
                             {"sigma", sigma}};
          o.folds.push_back(train_network(spec, k, stage_dir / o.point.key / concat("fold", k), log));
          o.point.diverged = o.point.diverged || o.folds.back().diverged;
          pooled.insert(pooled.end(), o.folds.back().val_errors.begin(), o.folds.back().val_errors.end());
        }
        o.point.cv_median_mm = pooled.empty() ? std::numeric_limits<double>::quiet_NaN() : median(pooled);
        log(concat("stage 2 ", o.point.key, ": CV median ", format_number(o.point.cv_median_mm), " mm",
                   o.point.diverged ? ", diverged" : ""));
        result.points.push_back(o.point);
        outcomes.push_back(std::move(o));
      }

  const PointOutcome* best = nullptr;
  for (const auto& o : outcomes) {
    if (o.point.diverged || !std::isfinite(o.point.cv_median_mm)) continue;
    const auto& p = o.point;
    if (!best || p.cv_median_mm < best->point.cv_median_mm ||
        (p.cv_median_mm == best->point.cv_median_mm &&
         std::tie(p.sigma, p.lambda, p.disturbance) < std::tie(best->point.sigma, best->point.lambda, best->point.disturbance)))
      best = &o;
  }
  if (!best) throw std::runtime_error("second stage: every grid point diverged");
  result.best = best->point;

  const LossSpec loss = local_loss(cfg.loss, best->point.lambda);
  std::vector<Network> local;
  for (const auto& f : best->folds) {
    Network net(local_network(cfg, loss, nl, f.fold));
    net.load(f.checkpoint());
    local.push_back(std::move(net));
  }
  const std::string label = cfg.loss.label();
  for (const auto& id : plan.test) {
    const auto& s = data.at(id);
    LandmarkSet refined;
    bool ambiguous = false;
    for (int i = 0; i < nl; ++i) {
      const Patch p = extract_patch(s.full, stage1_test.at(id)[i].position, pc.patch_size, best->point.disturbance, nullptr);
      const auto ex = ensemble_predict(local, p.volume, names, cfg.inference);
      ambiguous = ambiguous || ex.ambiguous[i];
      // Back to the source grid through the patch origin; the centroid rule
      // keeps its sub-voxel residual.
      const Vec3 pos = ex.landmarks[i].position;
      const Index3 at = nearest_voxel(p.volume.grid, pos);
      refined.points.push_back({names[i], patch_voxel_world(p, s.full.grid, at) + (pos - p.volume.grid.position(at))});
    }
    result.report.records.push_back(make_record(id, s.quality, label, 2, s.landmarks, refined, ambiguous));
  }
  const auto stages = result.report.group_by(GroupKey::Stage);
  result.sdr_stage1 = stages.at("1").sdr_curve();
  result.sdr_stage2 = stages.at("2").sdr_curve();

  write_text_atomic(stage_dir / "report.json", second_stage_json(result).dump(2) + "\n");
  result.report.write_csv(stage_dir / "test.csv");
  return result;
}

json second_stage_json(const SecondStageResult& r) {
  json pts = json::array();
  for (const auto& p : r.points)
    pts.push_back({{"key", p.key},
                   {"disturbance", p.disturbance},
                   {"sigma", p.sigma},
                   {"lambda", p.lambda},
                   {"cv_median_mm", std::isfinite(p.cv_median_mm) ? json(p.cv_median_mm) : json(nullptr)},
                   {"diverged", p.diverged}});
  json j = r.report.to_json({GroupKey::Stage, GroupKey::Quality});
  j["grid"] = pts;
  j["best"] = {{"disturbance", r.best.disturbance}, {"sigma", r.best.sigma}, {"lambda", r.best.lambda},
               {"cv_median_mm", r.best.cv_median_mm}};
  j["sdr_stage1"] = r.sdr_stage1;
  j["sdr_stage2"] = r.sdr_stage2;
  return j;
}

}  // namespace glip
