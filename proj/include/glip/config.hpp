#pragma once

#include "glip/losses.hpp"
#include "glip/metrics.hpp"
#include "glip/phantom.hpp"
#include "glip/volume.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace glip {

/// Raised when a configuration is invalid; carries every problem found.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

nlohmann::json loss_spec_json(const LossSpec& spec);

enum class EnsembleRule {
  /// Average the fold heatmaps, then decode.
  HeatmapMean,
  /// Decode each fold model, then average the landmark coordinates.
  CoordinateMean,
};

std::string to_string(EnsembleRule rule);
/// "heatmap_mean" or "coordinate_mean".
EnsembleRule parse_ensemble_rule(std::string_view text);

struct InferenceConfig {
  DecodeRule decode = DecodeRule::Argmax;
  EnsembleRule ensemble = EnsembleRule::HeatmapMean;
};

struct PatchConfig {
  int patch_size = 32;
  int disturbance = 0;
  std::vector<int> disturbance_grid{0, 2, 4, 8};
  std::vector<double> sigma_grid{0.5, 1, 2, 4, 8, 16};
  std::vector<double> lambda_grid{0.1, 1, 10};
  /// Heatmap sigma and GLiP lambda of the local network (mm on the full-res grid).
  double sigma = 0.5;
  double lambda = 1.0;
  int epochs = 100;
  int batch_size = 4;
  int depth = 2;
  int base_channels = 8;

  void validate(std::vector<std::string>& problems) const;
};

struct RunConfig {
  LossSpec loss;
  HeatmapConfig heatmap;
  std::vector<double> sigma_grid{0.5, 1, 2, 4, 8, 16, 32, 64};
  std::vector<double> lambda_grid{1, 10, 100};
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 4;
  int folds = 4;
  /// CV : test proportions.
  std::array<int, 2> split_ratio{4, 1};
  std::uint64_t seed = 0;
  /// Consecutive epochs with validation median above half the diagonal
  /// before a fold counts as diverged.
  int divergence_patience = 10;

  int depth = 4;
  int base_channels = 16;
  bool batch_norm = false;

  /// Preprocessing of the first-stage input: optional resampling to an
  /// isotropic spacing, then mean-pool downsampling.
  double target_spacing_mm = 0.0;
  int downsample = 2;

  PatchConfig patch;
  InferenceConfig inference;

  /// Throws ConfigError listing all problems.
  void validate() const;
  std::vector<std::string> problems() const;

  nlohmann::json to_json() const;
  /// Strict: unknown keys and type mismatches are reported, all at once.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  /// Hex FNV-1a of the canonical JSON of every field.
  std::string hash() const;
};

/// Phantom generator settings from the optional "phantom" section of a
/// config file. Missing keys keep their defaults; problems are collected
/// and thrown together as ConfigError.
PhantomConfig phantom_config_from_json(const nlohmann::json& j);
nlohmann::json phantom_config_json(const PhantomConfig& cfg);
PhantomConfig load_phantom_config(const std::filesystem::path& path);

}  // namespace glip
