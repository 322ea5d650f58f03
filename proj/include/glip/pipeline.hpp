#pragma once

#include "glip/config.hpp"
#include "glip/net.hpp"
#include "glip/report.hpp"
#include "glip/sample_io.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace glip {

using Logger = std::function<void(const std::string&)>;
/// Writes to stderr.
Logger stderr_logger();
Logger null_logger();

struct SplitPlan {
  std::vector<std::string> test;
  std::vector<std::vector<std::string>> folds;

  /// "test", "cv-fold-<k>" or empty.
  std::string split_of(const std::string& sample_id) const;
  /// All CV ids except those in fold `k`, in fold order.
  std::vector<std::string> training_ids(int k) const;
};

/// Deterministic shuffle of the manifest (sorted by id first), then the first
/// round(n * ratio[1] / (ratio[0] + ratio[1])) ids form the test set and the
/// rest are dealt round-robin into `folds` folds.
SplitPlan split_cv_test(const std::vector<ManifestEntry>& manifest, int folds, std::array<int, 2> ratio,
                        std::uint64_t seed);

struct PreparedSample {
  std::string id;
  QualityGrade quality = QualityGrade::Q3Plus;
  LandmarkSet landmarks;
  /// Full-resolution volume (resampled when a target spacing is configured).
  Volume full;
  /// First-stage network input.
  Volume coarse;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<PreparedSample> samples);

  const PreparedSample& at(const std::string& id) const;
  const std::vector<PreparedSample>& samples() const { return samples_; }
  std::vector<ManifestEntry> manifest() const;
  std::vector<std::string> landmark_names() const;
  std::size_t size() const { return samples_.size(); }

 private:
  std::vector<PreparedSample> samples_;
  std::map<std::string, std::size_t> index_;
};

Volume preprocess_full(const Volume& v, const RunConfig& cfg);
Volume preprocess_coarse(const Volume& full, const RunConfig& cfg);
Dataset prepare_dataset(const std::vector<Sample>& samples, const RunConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_median_mm = 0.0;
  double val_mean_mm = 0.0;
  std::size_t clamped = 0;
};

struct FoldResult {
  int fold = 0;
  bool diverged = false;
  std::string divergence_reason;
  int epochs_run = 0;
  std::vector<EpochRecord> history;
  /// Final-epoch validation errors, every landmark of every held-out sample.
  std::vector<double> val_errors;
  double val_median_mm = 0.0;
  std::filesystem::path fold_dir;
  bool resumed = false;

  std::filesystem::path checkpoint() const { return fold_dir / "checkpoint.bin"; }
};

/// One supervised set: inputs on a common grid shape plus world landmarks.
struct TrainItem {
  const Volume* input = nullptr;
  /// Keeps generated inputs (patches) alive; null for dataset volumes.
  std::shared_ptr<const Volume> storage;
  LandmarkSet landmarks;
  /// Channel to decode for the error, or -1 for all channels.
  int channel = -1;
};

struct TrainSpec {
  LossSpec loss;
  HeatmapConfig heatmap;
  NetworkConfig network;
  double learning_rate = 1e-3;
  int epochs = 1;
  int batch_size = 4;
  int divergence_patience = 10;
  std::uint64_t seed = 0;
  /// Decoding of validation predictions.
  DecodeRule decode = DecodeRule::Argmax;
  /// Produces the training items for an epoch; called once per epoch.
  std::function<std::vector<TrainItem>(int epoch)> train_items;
  std::vector<TrainItem> val_items;
  /// Diagonal of the input region, for the divergence rule.
  double diagonal_mm = 0.0;
  /// Descriptor fields stored next to the checkpoint.
  nlohmann::json descriptor;
};

/// Generic training loop shared by both stages. Writes checkpoint.bin,
/// checkpoint.json and metrics.csv into `dir`. If `dir` already holds a
/// completed run with the same descriptor it is loaded instead.
FoldResult train_network(const TrainSpec& spec, int fold, const std::filesystem::path& dir, const Logger& log);

nlohmann::json network_config_json(const NetworkConfig& n);
/// Shortest round-trippable-looking decimal, used in labels and logs.
std::string format_number(double v);

NetworkConfig network_config_for(const RunConfig& cfg, int out_channels, int fold);

/// Trains on all CV folds except `fold` and validates on `fold`.
FoldResult train_fold(const RunConfig& cfg, int fold, const SplitPlan& plan, const Dataset& data,
                      const std::filesystem::path& run_dir, const Logger& log);

struct CvResult {
  RunConfig config;
  std::string hash;
  std::filesystem::path run_dir;
  std::vector<FoldResult> folds;
  bool diverged = false;
  /// Median over the pooled final validation errors of all folds.
  double cv_median_mm = 0.0;
};

std::filesystem::path run_directory(const std::filesystem::path& runs_root, const RunConfig& cfg);

CvResult run_cv(const RunConfig& cfg, const SplitPlan& plan, const Dataset& data, const std::filesystem::path& runs_root,
                const Logger& log);

/// Loads every non-diverged fold network of a CV run.
std::vector<Network> load_fold_networks(const CvResult& cv, int out_channels);

/// Forward pass of each volume, returned as a (B, N_l, ...) double batch.
Batch predict_heatmaps(Network& net, const std::vector<const Volume*>& volumes);
/// Voxel-wise mean of the model heatmaps.
Batch ensemble_heatmaps(std::vector<Network>& nets, const std::vector<const Volume*>& volumes);
/// Fold-ensembled landmarks of one volume. The ambiguity flag of a channel
/// is set when any decode involved in it was ambiguous.
Extraction ensemble_predict(std::vector<Network>& nets, const Volume& volume, const std::vector<std::string>& names,
                            const InferenceConfig& inference = {});

/// First-stage test evaluation by fold ensembling.
EvalReport evaluate_test(const CvResult& cv, const SplitPlan& plan, const Dataset& data, const Logger& log);

/// Writes runs/<hash>/report.json with the config, CV and (optional) test results.
void write_run_report(const CvResult& cv, const EvalReport* test);

struct SweepPoint {
  double sigma = 0.0;
  double lambda = 0.0;
  double cv_median_mm = 0.0;
  bool diverged = false;
};

/// Minimum CV median; ties go to smaller sigma, then smaller lambda.
/// Diverged points are skipped; throws when every point diverged.
SweepPoint select_hyperparams(const std::vector<SweepPoint>& points);

enum class SweepAxis { Sigma, Lambda, Grid };
SweepAxis parse_sweep_axis(std::string_view text);
std::string to_string(SweepAxis axis);

struct SweepRow {
  SweepPoint point;
  std::string hash;
  Summary test_error;
  std::vector<double> test_sdr;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Sigma;
  std::vector<SweepRow> rows;
  std::optional<SweepPoint> best;
};

/// Runs CV (and test evaluation) for every grid point of the axis. Sigma
/// sweeps keep cfg.loss.lambda fixed and lambda sweeps keep cfg.heatmap.sigma;
/// the grid axis covers the full sigma x lambda product. Completed points are
/// reused from disk.
SweepResult sensitivity_sweep(const RunConfig& cfg, SweepAxis axis, const SplitPlan& plan, const Dataset& data,
                              const std::filesystem::path& runs_root, const Logger& log, bool evaluate = true);

nlohmann::json sweep_json(const SweepResult& r);
void write_sweep(const SweepResult& r, const std::filesystem::path& out_dir);

}  // namespace glip
