#include "glip/config.hpp"

#include "glip/util.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace glip {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid configuration (" << problems.size() << " problem" << (problems.size() == 1 ? "" : "s") << ")";
  for (const auto& p : problems) os << "\n  - " << p;
  return os.str();
}

template <typename T>
void check_grid(const std::vector<T>& grid, const char* name, bool allow_zero, std::vector<std::string>& problems) {
  if (grid.empty()) problems.push_back(concat(name, " must not be empty"));
  for (T v : grid)
    if (!(allow_zero ? v >= 0 : v > 0)) problems.push_back(concat(name, " entries must be ", allow_zero ? ">= 0" : "> 0", ", got ", v));
}

/// Reads `key` from a section into `out`, recording type errors.
class Reader {
 public:
  Reader(const json& section, std::string path, std::vector<std::string>& problems)
      : section_(section), path_(std::move(path)), problems_(problems) {
    if (!section_.is_object()) problems_.push_back(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!section_.is_object() || !section_.contains(key)) return;
    try {
      const json& v = section_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(concat(path_, ".", key, ": ", e.what()));
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    if (!section_.is_object() || !section_.contains(key)) return nullptr;
    return &section_.at(key);
  }

  void finish() {
    if (!section_.is_object()) return;
    for (const auto& [k, v] : section_.items())
      if (!seen_.count(k)) problems_.push_back(concat(path_, ": unknown key '", k, "'"));
  }

 private:
  const json& section_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

void PatchConfig::validate(std::vector<std::string>& problems) const {
  if (patch_size < 1) problems.push_back(concat("patch.patch_size must be >= 1, got ", patch_size));
  if (disturbance < 0) problems.push_back(concat("patch.disturbance must be >= 0, got ", disturbance));
  check_grid(disturbance_grid, "patch.disturbance_grid", true, problems);
  check_grid(sigma_grid, "patch.sigma_grid", false, problems);
  check_grid(lambda_grid, "patch.lambda_grid", false, problems);
  if (!(sigma > 0.0)) problems.push_back(concat("patch.sigma must be > 0, got ", sigma));
  if (!(lambda >= 0.0)) problems.push_back(concat("patch.lambda must be >= 0, got ", lambda));
  if (epochs < 1) problems.push_back(concat("patch.epochs must be >= 1, got ", epochs));
  if (batch_size < 1) problems.push_back(concat("patch.batch_size must be >= 1, got ", batch_size));
  if (depth < 1) problems.push_back(concat("patch.depth must be >= 1, got ", depth));
  if (base_channels < 1) problems.push_back(concat("patch.base_channels must be >= 1, got ", base_channels));
  if (depth >= 1 && depth < 16 && patch_size >= 1 && patch_size % (1 << depth) != 0)
    problems.push_back(concat("patch.patch_size ", patch_size, " must be divisible by 2^patch.depth = ", 1 << depth));
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> p;
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    p.push_back(concat("loss: ", e.what()));
  }
  if (!(heatmap.sigma > 0.0)) p.push_back(concat("heatmap.sigma must be > 0, got ", heatmap.sigma));
  check_grid(sigma_grid, "sweep.sigma_grid", false, p);
  check_grid(lambda_grid, "sweep.lambda_grid", true, p);
  if (optimizer != "adam") p.push_back("optimizer.name: only 'adam' is supported, got '" + optimizer + "'");
  if (!(learning_rate > 0.0)) p.push_back(concat("optimizer.learning_rate must be > 0, got ", learning_rate));
  if (epochs < 1) p.push_back(concat("training.epochs must be >= 1, got ", epochs));
  if (batch_size < 1) p.push_back(concat("training.batch_size must be >= 1, got ", batch_size));
  if (folds < 2) p.push_back(concat("training.folds must be >= 2, got ", folds));
  if (split_ratio[0] < 1 || split_ratio[1] < 1)
    p.push_back(concat("training.split_ratio entries must be >= 1, got [", split_ratio[0], ", ", split_ratio[1], "]"));
  if (divergence_patience < 1) p.push_back("training.divergence_patience must be >= 1");
  if (depth < 1) p.push_back(concat("network.depth must be >= 1, got ", depth));
  if (base_channels < 1) p.push_back(concat("network.base_channels must be >= 1, got ", base_channels));
  if (!(target_spacing_mm >= 0.0)) p.push_back("preprocess.target_spacing_mm must be >= 0 (0 disables resampling)");
  if (downsample < 1) p.push_back(concat("preprocess.downsample must be >= 1, got ", downsample));
  patch.validate(p);
  return p;
}

void RunConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

std::string to_string(EnsembleRule rule) {
  return rule == EnsembleRule::CoordinateMean ? "coordinate_mean" : "heatmap_mean";
}

EnsembleRule parse_ensemble_rule(std::string_view text) {
  if (text == "heatmap_mean") return EnsembleRule::HeatmapMean;
  if (text == "coordinate_mean") return EnsembleRule::CoordinateMean;
  throw std::invalid_argument(concat("unknown ensemble rule '", text, "' (expected heatmap_mean or coordinate_mean)"));
}

json loss_spec_json(const LossSpec& loss) {
  return {{"kind", to_string(loss.kind)},
          {"lambda", loss.lambda},
          {"add_grid_penalty", loss.add_grid_penalty},
          {"one_sided_penalty", loss.one_sided_penalty},
          {"focal_gamma", loss.focal_gamma},
          {"focal_alpha", loss.focal_alpha},
          {"wce_pos_weight", loss.wce_pos_weight},
          {"smooth_l1_beta", loss.smooth_l1_beta}};
}

json RunConfig::to_json() const {
  json j;
  j["loss"] = loss_spec_json(loss);
  j["heatmap"] = {{"sigma", heatmap.sigma}, {"squared_distance", heatmap.squared_distance}};
  j["sweep"] = {{"sigma_grid", sigma_grid}, {"lambda_grid", lambda_grid}};
  j["optimizer"] = {{"name", optimizer}, {"learning_rate", learning_rate}};
  j["training"] = {{"epochs", epochs},
                   {"batch_size", batch_size},
                   {"folds", folds},
                   {"split_ratio", split_ratio},
                   {"seed", seed},
                   {"divergence_patience", divergence_patience}};
  j["network"] = {{"depth", depth}, {"base_channels", base_channels}, {"batch_norm", batch_norm}};
  j["preprocess"] = {{"target_spacing_mm", target_spacing_mm}, {"downsample", downsample}};
  j["patch"] = {{"patch_size", patch.patch_size},   {"disturbance", patch.disturbance},
                {"disturbance_grid", patch.disturbance_grid}, {"sigma_grid", patch.sigma_grid},
                {"lambda_grid", patch.lambda_grid}, {"sigma", patch.sigma},
                {"lambda", patch.lambda},           {"epochs", patch.epochs},
                {"batch_size", patch.batch_size},   {"depth", patch.depth},
                {"base_channels", patch.base_channels}};
  j["inference"] = {{"decode", to_string(inference.decode)}, {"ensemble", to_string(inference.ensemble)}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  Reader top(j, "config", problems);

  if (const json* s = top.sub("loss")) {
    Reader r(*s, "loss", problems);
    std::string kind;
    r.get("kind", kind);
    if (!kind.empty()) {
      try {
        c.loss.kind = parse_loss_kind(kind);
      } catch (const std::invalid_argument& e) {
        problems.push_back(concat("loss.kind: ", e.what()));
      }
    }
    r.get("lambda", c.loss.lambda);
    r.get("add_grid_penalty", c.loss.add_grid_penalty);
    r.get("one_sided_penalty", c.loss.one_sided_penalty);
    r.get("focal_gamma", c.loss.focal_gamma);
    r.get("focal_alpha", c.loss.focal_alpha);
    r.get("wce_pos_weight", c.loss.wce_pos_weight);
    r.get("smooth_l1_beta", c.loss.smooth_l1_beta);
    r.finish();
  }
  if (const json* s = top.sub("heatmap")) {
    Reader r(*s, "heatmap", problems);
    r.get("sigma", c.heatmap.sigma);
    r.get("squared_distance", c.heatmap.squared_distance);
    r.finish();
  }
  if (const json* s = top.sub("sweep")) {
    Reader r(*s, "sweep", problems);
    r.get("sigma_grid", c.sigma_grid);
    r.get("lambda_grid", c.lambda_grid);
    r.finish();
  }
  if (const json* s = top.sub("optimizer")) {
    Reader r(*s, "optimizer", problems);
    r.get("name", c.optimizer);
    r.get("learning_rate", c.learning_rate);
    r.finish();
  }
  if (const json* s = top.sub("training")) {
    Reader r(*s, "training", problems);
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("folds", c.folds);
    r.get("split_ratio", c.split_ratio);
    r.get("seed", c.seed);
    r.get("divergence_patience", c.divergence_patience);
    r.finish();
  }
  if (const json* s = top.sub("network")) {
    Reader r(*s, "network", problems);
    r.get("depth", c.depth);
    r.get("base_channels", c.base_channels);
    r.get("batch_norm", c.batch_norm);
    r.finish();
  }
  if (const json* s = top.sub("preprocess")) {
    Reader r(*s, "preprocess", problems);
    r.get("target_spacing_mm", c.target_spacing_mm);
    r.get("downsample", c.downsample);
    r.finish();
  }
  if (const json* s = top.sub("patch")) {
    Reader r(*s, "patch", problems);
    r.get("patch_size", c.patch.patch_size);
    r.get("disturbance", c.patch.disturbance);
    r.get("disturbance_grid", c.patch.disturbance_grid);
    r.get("sigma_grid", c.patch.sigma_grid);
    r.get("lambda_grid", c.patch.lambda_grid);
    r.get("sigma", c.patch.sigma);
    r.get("lambda", c.patch.lambda);
    r.get("epochs", c.patch.epochs);
    r.get("batch_size", c.patch.batch_size);
    r.get("depth", c.patch.depth);
    r.get("base_channels", c.patch.base_channels);
    r.finish();
  }
  if (const json* s = top.sub("inference")) {
    Reader r(*s, "inference", problems);
    std::string decode, ensemble;
    r.get("decode", decode);
    r.get("ensemble", ensemble);
    r.finish();
    try {
      if (!decode.empty()) c.inference.decode = parse_decode_rule(decode);
    } catch (const std::invalid_argument& e) {
      problems.push_back(concat("inference.decode: ", e.what()));
    }
    try {
      if (!ensemble.empty()) c.inference.ensemble = parse_ensemble_rule(ensemble);
    } catch (const std::invalid_argument& e) {
      problems.push_back(concat("inference.ensemble: ", e.what()));
    }
  }
  top.sub("phantom");
  top.finish();

  for (auto& p : c.problems()) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

namespace {

json read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file " + path.string()});
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return j;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_json(read_config_file(path)); }

json phantom_config_json(const PhantomConfig& cfg) {
  json thresholds = json::array();
  for (const auto& t : cfg.quality_thresholds)
    thresholds.push_back({{"max_degradation", t.max_degradation}, {"grade", to_string(t.grade)}});
  return {{"shape", cfg.shape},
          {"spacing", {cfg.spacing.x(), cfg.spacing.y(), cfg.spacing.z()}},
          {"tube_radius_range", {cfg.tube_radius_range.lo, cfg.tube_radius_range.hi}},
          {"annulus_radius_range", {cfg.annulus_radius_range.lo, cfg.annulus_radius_range.hi}},
          {"marker_intensity", cfg.marker_intensity},
          {"noise_sigma", cfg.noise_sigma},
          {"blur_sigma_range", {cfg.blur_sigma_range.lo, cfg.blur_sigma_range.hi}},
          {"quality_thresholds", thresholds},
          {"count", cfg.count},
          {"base_seed", cfg.base_seed}};
}

PhantomConfig phantom_config_from_json(const json& j) {
  PhantomConfig c;
  std::vector<std::string> problems;
  if (!j.is_object() || !j.contains("phantom")) return c;
  Reader r(j.at("phantom"), "phantom", problems);
  r.get("shape", c.shape);
  std::array<double, 3> spacing{c.spacing.x(), c.spacing.y(), c.spacing.z()};
  r.get("spacing", spacing);
  c.spacing = Vec3(spacing[0], spacing[1], spacing[2]);
  auto range = [&](const char* key, Range& out) {
    std::array<double, 2> v{out.lo, out.hi};
    r.get(key, v);
    out = {v[0], v[1]};
  };
  range("tube_radius_range", c.tube_radius_range);
  range("annulus_radius_range", c.annulus_radius_range);
  r.get("marker_intensity", c.marker_intensity);
  r.get("noise_sigma", c.noise_sigma);
  range("blur_sigma_range", c.blur_sigma_range);
  if (const json* t = r.sub("quality_thresholds")) {
    if (!t->is_array()) {
      problems.push_back("phantom.quality_thresholds must be a list");
    } else {
      c.quality_thresholds.clear();
      for (std::size_t i = 0; i < t->size(); ++i) {
        Reader e((*t)[i], concat("phantom.quality_thresholds[", i, "]"), problems);
        QualityThreshold q;
        std::string grade;
        e.get("max_degradation", q.max_degradation);
        e.get("grade", grade);
        e.finish();
        try {
          q.grade = parse_quality(grade);
        } catch (const std::invalid_argument& ex) {
          problems.push_back(concat("phantom.quality_thresholds[", i, "].grade: ", ex.what()));
        }
        c.quality_thresholds.push_back(q);
      }
    }
  }
  r.get("count", c.count);
  r.get("base_seed", c.base_seed);
  r.finish();
  if (problems.empty()) {
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      problems.push_back(concat("phantom: ", e.what()));
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

PhantomConfig load_phantom_config(const std::filesystem::path& path) {
  return phantom_config_from_json(read_config_file(path));
}

std::string RunConfig::hash() const { return to_hex(fnv1a64(to_json().dump())); }

}  // namespace glip
