#pragma once

#include "glip/volume.hpp"

#include <functional>
#include <string>
#include <vector>

namespace glip {

enum class LossKind { Glip, OtOnly, Wce, Focal, Mse, L1, SmoothL1 };

std::string to_string(LossKind kind);
/// Accepts the canonical upper-case names and common lower-case aliases
/// ("glip", "ot", "wce", "fl", "mse", "l1", "sl1", ...).
LossKind parse_loss_kind(std::string_view text);
/// WCE and FOCAL consume probabilities and expect a sigmoid head.
bool is_probability_loss(LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::Glip;
  double lambda = 10.0;
  /// "+GP" ablation: add the grid penalty to a non-OT loss.
  bool add_grid_penalty = false;
  /// max(|df| - 1, 0)^2 instead of the two-sided (|df| - 1)^2.
  bool one_sided_penalty = false;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double wce_pos_weight = 10.0;
  double smooth_l1_beta = 1.0;

  void validate() const;
  /// Short label such as "GLIP", "MSE" or "MSE+GP".
  std::string label() const;
};

/// Shape of a (batch, channel, D1, D2, D3) array.
struct BatchShape {
  int batch = 1;
  int channels = 1;
  Index3 spatial{1, 1, 1};

  std::size_t voxels() const { return static_cast<std::size_t>(spatial[0]) * spatial[1] * spatial[2]; }
  std::size_t numel() const { return voxels() * channels * batch; }
  bool operator==(const BatchShape&) const = default;
};

/// Dense batch of per-voxel values; used both for network outputs f(I) and
/// for stacked target heatmaps.
struct Batch {
  BatchShape shape;
  std::vector<double> values;

  static Batch zeros(const BatchShape& shape) { return {shape, std::vector<double>(shape.numel(), 0.0)}; }
  std::size_t offset(int b, int c) const { return (static_cast<std::size_t>(b) * shape.channels + c) * shape.voxels(); }
};

using PredictionBatch = Batch;

/// Stacks per-sample heatmaps (all on grids of equal shape) into a batch.
Batch stack_heatmaps(const std::vector<Heatmap>& heatmaps);

struct LossValue {
  double value = 0.0;
  /// d value / d pred, same layout as the prediction batch.
  std::vector<double> grad;
  /// Number of probabilities clamped into [eps, 1 - eps] before taking logs.
  std::size_t clamped = 0;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Batch-pooled optimal-transport dual loss: per landmark channel, minus the
/// heatmap-weighted mean of f plus the (1 - h)-weighted mean of f, both pooled
/// over the whole minibatch, then averaged with the 1 / (|B| N_l) prefactor.
/// Throws std::domain_error when a channel has zero positive or negative mass.
LossValue ot_loss(const PredictionBatch& pred, const Batch& target);

/// Batch mean of the per-sample grid penalty: the sum over all 6-neighbour
/// voxel edges and channels of (|f_u - f_v| - 1)^2. The subgradient at
/// f_u == f_v is zero.
LossValue grid_lipschitz_penalty(const PredictionBatch& pred, bool one_sided = false);

/// ot_loss + lambda * grid_lipschitz_penalty. With lambda == 0 the result is
/// exactly ot_loss.
LossValue glip_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);

LossValue wce_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);
LossValue focal_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);
LossValue mse_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);
LossValue l1_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);
LossValue smooth_l1_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec);

using LossFn = std::function<LossValue(const PredictionBatch&, const Batch&)>;

/// The loss selected by spec.kind alone, ignoring add_grid_penalty.
LossFn base_loss(const LossSpec& spec);

/// base + lambda * grid penalty, for any base kind other than GLIP. With
/// lambda == 0 this returns exactly what the base loss returns.
LossFn with_grid_penalty(const LossSpec& base);

/// Full training loss for a spec, honouring add_grid_penalty.
LossFn make_loss(const LossSpec& spec);

}  // namespace glip
