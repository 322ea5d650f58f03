#include "glip/pipeline.hpp"

#include "glip/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace glip {

using nlohmann::json;

Logger stderr_logger() {
  return [](const std::string& msg) { std::cerr << msg << std::endl; };
}

Logger null_logger() {
  return [](const std::string&) {};
}

std::string SplitPlan::split_of(const std::string& sample_id) const {
  if (std::find(test.begin(), test.end(), sample_id) != test.end()) return "test";
  for (std::size_t k = 0; k < folds.size(); ++k)
    if (std::find(folds[k].begin(), folds[k].end(), sample_id) != folds[k].end()) return concat("cv-fold-", k);
  return {};
}

std::vector<std::string> SplitPlan::training_ids(int k) const {
  if (k < 0 || k >= static_cast<int>(folds.size())) throw std::invalid_argument(concat("fold index ", k, " out of range"));
  std::vector<std::string> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (static_cast<int>(f) != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
  return out;
}

SplitPlan split_cv_test(const std::vector<ManifestEntry>& manifest, int folds, std::array<int, 2> ratio,
                        std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument(concat("need at least 2 folds, got ", folds));
  if (ratio[0] < 1 || ratio[1] < 1) throw std::invalid_argument("split ratio entries must be >= 1");
  const int n = static_cast<int>(manifest.size());
  std::vector<std::string> ids;
  for (const auto& e : manifest) ids.push_back(e.sample_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw std::invalid_argument("manifest has duplicate sample ids");

  const int n_test = static_cast<int>(std::lround(static_cast<double>(n) * ratio[1] / (ratio[0] + ratio[1])));
  if (n - n_test < folds || n_test < 1)
    throw std::invalid_argument(concat("too few samples (", n, ") for a test split and ", folds, " folds"));

  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  for (int i = n - 1; i > 0; --i) std::swap(ids[i], ids[static_cast<std::size_t>(rng.uniform_int(0, i))]);

  SplitPlan plan;
  plan.test.assign(ids.begin(), ids.begin() + n_test);
  plan.folds.assign(folds, {});
  for (int i = n_test; i < n; ++i) plan.folds[(i - n_test) % folds].push_back(ids[i]);
  return plan;
}

Dataset::Dataset(std::vector<PreparedSample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (!index_.emplace(samples_[i].id, i).second) throw std::invalid_argument("duplicate sample id " + samples_[i].id);
}

const PreparedSample& Dataset::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown sample id " + id);
  return samples_[it->second];
}

std::vector<ManifestEntry> Dataset::manifest() const {
  std::vector<ManifestEntry> out;
  for (const auto& s : samples_) out.push_back({s.id, s.quality, 0});
  return out;
}

std::vector<std::string> Dataset::landmark_names() const {
  if (samples_.empty()) throw std::logic_error("empty dataset");
  return samples_.front().landmarks.names();
}

Volume preprocess_full(const Volume& v, const RunConfig& cfg) {
  if (cfg.target_spacing_mm > 0.0) return resample_to_spacing(v, Vec3::Constant(cfg.target_spacing_mm));
  return v;
}

Volume preprocess_coarse(const Volume& full, const RunConfig& cfg) {
  return downsample(full, {cfg.downsample, cfg.downsample, cfg.downsample});
}

Dataset prepare_dataset(const std::vector<Sample>& samples, const RunConfig& cfg) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedSample p;
    p.id = s.meta.sample_id;
    p.quality = s.meta.quality;
    p.landmarks = s.landmarks;
    p.full = preprocess_full(s.volume, cfg);
    p.coarse = preprocess_coarse(p.full, cfg);
    if (!out.empty()) {
      if (p.coarse.grid.shape != out.front().coarse.grid.shape)
        throw std::invalid_argument("sample " + p.id + ": preprocessed shape differs from the first sample");
      if (p.landmarks.names() != out.front().landmarks.names())
        throw std::invalid_argument("sample " + p.id + ": landmark names differ from the first sample");
    }
    out.push_back(std::move(p));
  }
  return Dataset(std::move(out));
}

json network_config_json(const NetworkConfig& n) {
  return {{"in_channels", n.in_channels},       {"out_channels", n.out_channels}, {"depth", n.depth},
          {"base_channels", n.base_channels},   {"head", to_string(n.head)},      {"batch_norm", n.batch_norm},
          {"seed", n.seed}};
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

namespace {

std::string fmt(double v) { return format_number(v); }

Batch target_batch(const std::vector<const TrainItem*>& items, const HeatmapConfig& hm) {
  std::vector<Heatmap> maps;
  maps.reserve(items.size());
  for (const TrainItem* it : items) maps.push_back(generate_heatmap(it->input->grid, it->landmarks, hm));
  return stack_heatmaps(maps);
}

Tensor input_tensor(const std::vector<const TrainItem*>& items) {
  std::vector<const Volume*> v;
  for (const TrainItem* it : items) v.push_back(it->input);
  return volumes_to_tensor(v);
}

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

/// Errors of the items' decoded predictions; empty optional on non-finite output.
std::optional<std::vector<double>> validation_errors(Network& net, const std::vector<TrainItem>& items, int batch_size,
                                                     DecodeRule decode) {
  std::vector<double> errors;
  for (std::size_t b0 = 0; b0 < items.size(); b0 += batch_size) {
    std::vector<const TrainItem*> chunk;
    for (std::size_t i = b0; i < std::min(items.size(), b0 + batch_size); ++i) chunk.push_back(&items[i]);
    const Tensor out = net.forward(input_tensor(chunk), false);
    if (!all_finite(out.data)) return std::nullopt;
    const Batch pred = tensor_to_batch(out);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const TrainItem& it = *chunk[i];
      const auto ex = extract_landmarks(it.input->grid, pred.values.data() + pred.offset(static_cast<int>(i), 0),
                                        pred.shape.channels, it.landmarks.names(), decode);
      const auto errs = euclid_errors(it.landmarks, ex.landmarks);
      if (it.channel >= 0) {
        errors.push_back(errs.at(it.channel).error_mm);
      } else {
        for (const auto& e : errs) errors.push_back(e.error_mm);
      }
    }
  }
  return errors;
}

/// JSON has no NaN; non-finite values are stored as null.
json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); }

json history_json(const std::vector<EpochRecord>& h) {
  json a = json::array();
  for (const auto& e : h)
    a.push_back({{"epoch", e.epoch},
                 {"train_loss", nullable(e.train_loss)},
                 {"val_median_mm", nullable(e.val_median_mm)},
                 {"val_mean_mm", nullable(e.val_mean_mm)},
                 {"clamped", e.clamped}});
  return a;
}

std::vector<EpochRecord> history_from_json(const json& a) {
  std::vector<EpochRecord> h;
  for (const auto& e : a) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.train_loss = number_or_nan(e.at("train_loss"));
    r.val_median_mm = number_or_nan(e.at("val_median_mm"));
    r.val_mean_mm = number_or_nan(e.at("val_mean_mm"));
    r.clamped = e.at("clamped").get<std::size_t>();
    h.push_back(r);
  }
  return h;
}

void write_metrics_csv(const std::filesystem::path& path, int fold, const std::vector<EpochRecord>& h) {
  std::ostringstream os;
  os << std::setprecision(17) << "schema_version,fold,epoch,train_loss,val_median_mm,val_mean_mm,clamped\n";
  for (const auto& e : h)
    os << kReportSchemaVersion << ',' << fold << ',' << e.epoch << ',' << e.train_loss << ',' << e.val_median_mm << ','
       << e.val_mean_mm << ',' << e.clamped << '\n';
  write_text_atomic(path, os.str());
}

std::optional<FoldResult> load_completed(const std::filesystem::path& dir, const json& descriptor, int fold) {
  const auto path = dir / "checkpoint.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream is(path);
  json j;
  try {
    is >> j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (j.value("status", "") != "complete" || j.value("descriptor", json()) != descriptor) return std::nullopt;
  FoldResult r;
  r.fold = fold;
  r.fold_dir = dir;
  r.diverged = j.at("diverged").get<bool>();
  r.divergence_reason = j.at("divergence_reason").get<std::string>();
  r.epochs_run = j.at("epochs_run").get<int>();
  r.history = history_from_json(j.at("history"));
  r.val_errors = j.at("val_errors_mm").get<std::vector<double>>();
  r.val_median_mm = r.val_errors.empty() ? std::numeric_limits<double>::quiet_NaN() : median(r.val_errors);
  r.resumed = true;
  if (!r.diverged && !std::filesystem::exists(r.checkpoint())) return std::nullopt;
  return r;
}

}  // namespace

FoldResult train_network(const TrainSpec& spec, int fold, const std::filesystem::path& dir, const Logger& log) {
  if (auto done = load_completed(dir, spec.descriptor, fold)) {
    log(concat("fold ", fold, ": reusing completed run in ", dir.string()));
    return *done;
  }
  if (spec.val_items.empty()) throw std::invalid_argument("train_network: no validation items");
  const LossFn loss_fn = make_loss(spec.loss);
  Network net(spec.network);
  Adam opt(spec.learning_rate);

  FoldResult r;
  r.fold = fold;
  r.fold_dir = dir;
  int above_limit = 0;

  for (int epoch = 1; epoch <= spec.epochs && !r.diverged; ++epoch) {
    const auto items = spec.train_items(epoch);
    if (items.empty()) throw std::invalid_argument("train_network: no training items");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += spec.batch_size) {
      std::vector<const TrainItem*> chunk;
      for (std::size_t i = b0; i < std::min(order.size(), b0 + spec.batch_size); ++i) chunk.push_back(&items[order[i]]);
      const Batch target = target_batch(chunk, spec.heatmap);
      net.zero_grad();
      const Tensor out = net.forward(input_tensor(chunk), true);
      const LossValue lv = loss_fn(tensor_to_batch(out), target);
      rec.clamped += lv.clamped;
      if (!std::isfinite(lv.value) || !all_finite(out.data)) {
        r.diverged = true;
        r.divergence_reason = concat("non-finite loss at epoch ", epoch);
        loss_sum = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      loss_sum += lv.value;
      ++batches;
      Tensor g = Tensor::zeros(out.n, out.c, out.s);
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<float>(lv.grad[i]);
      net.backward(g);
      opt.step(net.parameters());
    }
    rec.train_loss = r.diverged ? loss_sum : loss_sum / std::max(1, batches);

    if (!r.diverged) {
      const auto errors = validation_errors(net, spec.val_items, spec.batch_size, spec.decode);
      if (!errors) {
        r.diverged = true;
        r.divergence_reason = concat("non-finite network output at epoch ", epoch);
      } else {
        r.val_errors = *errors;
        rec.val_median_mm = median(*errors);
        rec.val_mean_mm = std::accumulate(errors->begin(), errors->end(), 0.0) / static_cast<double>(errors->size());
        above_limit = rec.val_median_mm > 0.5 * spec.diagonal_mm ? above_limit + 1 : 0;
        if (above_limit >= spec.divergence_patience) {
          r.diverged = true;
          r.divergence_reason = concat("validation median above half the diagonal for ", above_limit, " epochs");
        }
      }
    }
    if (r.diverged) {
      rec.val_median_mm = rec.val_mean_mm = std::numeric_limits<double>::quiet_NaN();
    }
    r.history.push_back(rec);
    r.epochs_run = epoch;
    log(concat("fold ", fold, " epoch ", epoch, "/", spec.epochs, " loss ", fmt(rec.train_loss), " val median ",
               fmt(rec.val_median_mm), " mm", r.diverged ? " DIVERGED: " + r.divergence_reason : ""));
  }
  r.val_median_mm = r.val_errors.empty() ? std::numeric_limits<double>::quiet_NaN() : median(r.val_errors);

  std::filesystem::create_directories(dir);
  if (!r.diverged) net.save(r.checkpoint());
  write_metrics_csv(dir / "metrics.csv", fold, r.history);
  json j = spec.descriptor;
  j["descriptor"] = spec.descriptor;
  j["status"] = "complete";
  j["diverged"] = r.diverged;
  j["divergence_reason"] = r.divergence_reason;
  j["epochs_run"] = r.epochs_run;
  j["history"] = history_json(r.history);
  j["val_errors_mm"] = r.val_errors;
  write_text_atomic(dir / "checkpoint.json", j.dump(2) + "\n");
  return r;
}

NetworkConfig network_config_for(const RunConfig& cfg, int out_channels, int fold) {
  NetworkConfig n;
  n.in_channels = 1;
  n.out_channels = out_channels;
  n.depth = cfg.depth;
  n.base_channels = cfg.base_channels;
  n.head = head_for_loss(cfg.loss.kind);
  n.batch_norm = cfg.batch_norm;
  n.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(fold));
  return n;
}

std::filesystem::path run_directory(const std::filesystem::path& runs_root, const RunConfig& cfg) {
  return runs_root / cfg.hash();
}

FoldResult train_fold(const RunConfig& cfg, int fold, const SplitPlan& plan, const Dataset& data,
                      const std::filesystem::path& run_dir, const Logger& log) {
  cfg.validate();
  if (static_cast<int>(plan.folds.size()) != cfg.folds)
    throw std::invalid_argument(concat("split has ", plan.folds.size(), " folds, config expects ", cfg.folds));
  const auto names = data.landmark_names();

  std::vector<TrainItem> train;
  for (const auto& id : plan.training_ids(fold)) train.push_back({&data.at(id).coarse, nullptr, data.at(id).landmarks, -1});
  TrainSpec spec;
  spec.loss = cfg.loss;
  spec.heatmap = cfg.heatmap;
  spec.network = network_config_for(cfg, static_cast<int>(names.size()), fold);
  spec.learning_rate = cfg.learning_rate;
  spec.epochs = cfg.epochs;
  spec.batch_size = cfg.batch_size;
  spec.divergence_patience = cfg.divergence_patience;
  spec.decode = cfg.inference.decode;
  spec.seed = mix_seed(cfg.seed ^ 0x747261696eULL, static_cast<std::uint64_t>(fold));
  spec.train_items = [train](int) { return train; };
  for (const auto& id : plan.folds.at(fold)) spec.val_items.push_back({&data.at(id).coarse, nullptr, data.at(id).landmarks, -1});
  spec.diagonal_mm = spec.val_items.front().input->grid.diagonal_mm();
  spec.descriptor = {{"network_config", network_config_json(spec.network)},
                     {"loss_spec", loss_spec_json(cfg.loss)},
                     {"fold_index", fold},
                     {"epoch", cfg.epochs},
                     {"config_hash", cfg.hash()},
                     {"stage", 1}};
  return train_network(spec, fold, run_dir / concat("fold", fold), log);
}

CvResult run_cv(const RunConfig& cfg, const SplitPlan& plan, const Dataset& data, const std::filesystem::path& runs_root,
                const Logger& log) {
  cfg.validate();
  CvResult cv;
  cv.config = cfg;
  cv.hash = cfg.hash();
  cv.run_dir = run_directory(runs_root, cfg);
  std::filesystem::create_directories(cv.run_dir);
  write_text_atomic(cv.run_dir / "config.json", cfg.to_json().dump(2) + "\n");
  std::vector<double> pooled;
  for (int k = 0; k < cfg.folds; ++k) {
    cv.folds.push_back(train_fold(cfg, k, plan, data, cv.run_dir, log));
    cv.diverged = cv.diverged || cv.folds.back().diverged;
    pooled.insert(pooled.end(), cv.folds.back().val_errors.begin(), cv.folds.back().val_errors.end());
  }
  cv.cv_median_mm = pooled.empty() ? std::numeric_limits<double>::quiet_NaN() : median(pooled);
  log(concat("run ", cv.hash, " (", cfg.loss.label(), ", sigma ", fmt(cfg.heatmap.sigma), ", lambda ", fmt(cfg.loss.lambda),
             "): CV median ", fmt(cv.cv_median_mm), " mm", cv.diverged ? ", diverged" : ""));
  return cv;
}

std::vector<Network> load_fold_networks(const CvResult& cv, int out_channels) {
  std::vector<Network> nets;
  for (const auto& f : cv.folds) {
    if (f.diverged) continue;
    Network net(network_config_for(cv.config, out_channels, f.fold));
    net.load(f.checkpoint());
    nets.push_back(std::move(net));
  }
  return nets;
}

Batch predict_heatmaps(Network& net, const std::vector<const Volume*>& volumes) {
  return tensor_to_batch(net.forward(volumes_to_tensor(volumes), false));
}

Batch ensemble_heatmaps(std::vector<Network>& nets, const std::vector<const Volume*>& volumes) {
  if (nets.empty()) throw std::invalid_argument("ensemble needs at least one network");
  Batch sum = predict_heatmaps(nets.front(), volumes);
  for (std::size_t m = 1; m < nets.size(); ++m) {
    const Batch b = predict_heatmaps(nets[m], volumes);
    if (!(b.shape == sum.shape)) throw std::invalid_argument("ensemble members disagree on output shape");
    for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += b.values[i];
  }
  const double inv = static_cast<double>(nets.size());
  for (auto& v : sum.values) v /= inv;
  return sum;
}

Extraction ensemble_predict(std::vector<Network>& nets, const Volume& volume, const std::vector<std::string>& names,
                            const InferenceConfig& inference) {
  if (inference.ensemble == EnsembleRule::HeatmapMean) {
    const Batch mean = ensemble_heatmaps(nets, {&volume});
    return extract_landmarks(volume.grid, mean.values.data(), mean.shape.channels, names, inference.decode);
  }
  if (nets.empty()) throw std::invalid_argument("ensemble_predict: no networks");
  Extraction out;
  for (std::size_t m = 0; m < nets.size(); ++m) {
    const Batch pred = predict_heatmaps(nets[m], {&volume});
    const Extraction ex = extract_landmarks(volume.grid, pred.values.data(), pred.shape.channels, names, inference.decode);
    if (m == 0) {
      out = ex;
      continue;
    }
    for (std::size_t i = 0; i < ex.landmarks.size(); ++i) {
      out.landmarks[i].position += ex.landmarks[i].position;
      out.ambiguous[i] = out.ambiguous[i] || ex.ambiguous[i];
    }
  }
  for (auto& p : out.landmarks.points) p.position /= static_cast<double>(nets.size());
  return out;
}

EvalReport evaluate_test(const CvResult& cv, const SplitPlan& plan, const Dataset& data, const Logger& log) {
  const auto names = data.landmark_names();
  auto nets = load_fold_networks(cv, static_cast<int>(names.size()));
  EvalReport report;
  if (nets.empty()) {
    log("run " + cv.hash + ": every fold diverged, no test evaluation");
    return report;
  }
  for (const auto& id : plan.test) {
    const auto& s = data.at(id);
    const auto ex = ensemble_predict(nets, s.coarse, names, cv.config.inference);
    report.records.push_back(make_record(id, s.quality, cv.config.loss.label(), 1, s.landmarks, ex.landmarks, ex.any_ambiguous()));
  }
  const auto sum = summarize(report.landmark_errors());
  log(concat("run ", cv.hash, ": test median ", fmt(sum.median), " mm over ", report.records.size(), " samples"));
  return report;
}

void write_run_report(const CvResult& cv, const EvalReport* test) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config_hash"] = cv.hash;
  j["config"] = cv.config.to_json();
  json folds = json::array();
  for (const auto& f : cv.folds)
    folds.push_back({{"fold", f.fold},
                     {"diverged", f.diverged},
                     {"divergence_reason", f.divergence_reason},
                     {"epochs_run", f.epochs_run},
                     {"val_median_mm", std::isfinite(f.val_median_mm) ? json(f.val_median_mm) : json(nullptr)}});
  j["cv"] = {{"folds", folds},
             {"diverged", cv.diverged},
             {"median_mm", std::isfinite(cv.cv_median_mm) ? json(cv.cv_median_mm) : json(nullptr)}};
  if (test) j["test"] = test->to_json({GroupKey::Quality});
  write_text_atomic(cv.run_dir / "report.json", j.dump(2) + "\n");
  if (test) test->write_csv(cv.run_dir / "test.csv");
}

SweepPoint select_hyperparams(const std::vector<SweepPoint>& points) {
  if (points.empty()) throw std::invalid_argument("select_hyperparams: no configurations");
  const SweepPoint* best = nullptr;
  for (const auto& p : points) {
    if (p.diverged || !std::isfinite(p.cv_median_mm)) continue;
    if (!best || p.cv_median_mm < best->cv_median_mm ||
        (p.cv_median_mm == best->cv_median_mm &&
         (p.sigma < best->sigma || (p.sigma == best->sigma && p.lambda < best->lambda))))
      best = &p;
  }
  if (!best) throw std::runtime_error("select_hyperparams: every configuration diverged");
  return *best;
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "sigma") return SweepAxis::Sigma;
  if (text == "lambda") return SweepAxis::Lambda;
  if (text == "grid") return SweepAxis::Grid;
  throw std::invalid_argument(concat("unknown sweep axis '", text, "' (expected sigma, lambda or grid)"));
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Sigma: return "sigma";
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Grid: return "grid";
  }
  return "?";
}

SweepResult sensitivity_sweep(const RunConfig& cfg, SweepAxis axis, const SplitPlan& plan, const Dataset& data,
                              const std::filesystem::path& runs_root, const Logger& log, bool evaluate) {
  std::vector<std::pair<double, double>> points;
  switch (axis) {
    case SweepAxis::Sigma:
      for (double s : cfg.sigma_grid) points.emplace_back(s, cfg.loss.lambda);
      break;
    case SweepAxis::Lambda:
      for (double l : cfg.lambda_grid) points.emplace_back(cfg.heatmap.sigma, l);
      break;
    case SweepAxis::Grid:
      for (double s : cfg.sigma_grid)
        for (double l : cfg.lambda_grid) points.emplace_back(s, l);
      break;
  }
  SweepResult result;
  result.axis = axis;
  std::vector<SweepPoint> sp;
  for (const auto& [sigma, lambda] : points) {
    RunConfig c = cfg;
    c.heatmap.sigma = sigma;
    c.loss.lambda = lambda;
    if (c.loss.kind == LossKind::Glip && lambda == 0.0) c.loss.kind = LossKind::OtOnly;
    const CvResult cv = run_cv(c, plan, data, runs_root, log);
    SweepRow row;
    row.point = {sigma, lambda, cv.cv_median_mm, cv.diverged};
    row.hash = cv.hash;
    if (evaluate) {
      const EvalReport test = evaluate_test(cv, plan, data, log);
      write_run_report(cv, &test);
      row.test_error = summarize(test.landmark_errors());
      row.test_sdr = test.sdr_curve();
    } else {
      write_run_report(cv, nullptr);
    }
    result.rows.push_back(row);
    sp.push_back(row.point);
  }
  try {
    result.best = select_hyperparams(sp);
  } catch (const std::runtime_error& e) {
    log(std::string("sweep: ") + e.what());
  }
  return result;
}

json sweep_json(const SweepResult& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"sigma", row.point.sigma},
                    {"lambda", row.point.lambda},
                    {"config_hash", row.hash},
                    {"cv_median_mm", num(row.point.cv_median_mm)},
                    {"diverged", row.point.diverged},
                    {"test_count", row.test_error.count},
                    {"test_q25_mm", num(row.test_error.q25)},
                    {"test_median_mm", num(row.test_error.median)},
                    {"test_q75_mm", num(row.test_error.q75)},
                    {"test_worst_mm", num(row.test_error.worst)},
                    {"test_sdr", row.test_sdr}});
  json j = {{"schema_version", kReportSchemaVersion}, {"axis", to_string(r.axis)}, {"rows", rows}};
  j["sdr_thresholds_mm"] = default_sdr_thresholds();
  if (r.best) j["best"] = {{"sigma", r.best->sigma}, {"lambda", r.best->lambda}, {"cv_median_mm", r.best->cv_median_mm}};
  return j;
}

void write_sweep(const SweepResult& r, const std::filesystem::path& out_dir) {
  const std::string stem = "sweep_" + to_string(r.axis);
  write_text_atomic(out_dir / (stem + ".json"), sweep_json(r).dump(2) + "\n");
  std::ostringstream os;
  os << std::setprecision(17)
     << "schema_version,sigma,lambda,config_hash,cv_median_mm,diverged,test_q25_mm,test_median_mm,test_q75_mm,test_worst_mm\n";
  for (const auto& row : r.rows)
    os << kReportSchemaVersion << ',' << row.point.sigma << ',' << row.point.lambda << ',' << row.hash << ','
       << row.point.cv_median_mm << ',' << (row.point.diverged ? 1 : 0) << ',' << row.test_error.q25 << ','
       << row.test_error.median << ',' << row.test_error.q75 << ',' << row.test_error.worst << '\n';
  write_text_atomic(out_dir / (stem + ".csv"), os.str());
}

}  // namespace glip
