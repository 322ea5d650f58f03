#pragma once

#include "glip/losses.hpp"
#include "glip/tensor.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace glip {

enum class HeadActivation { Identity, Sigmoid };

std::string to_string(HeadActivation h);
HeadActivation parse_head_activation(std::string_view text);
/// Identity for the OT family and regression losses, sigmoid for WCE/FOCAL.
HeadActivation head_for_loss(LossKind kind);

struct NetworkConfig {
  int in_channels = 1;
  int out_channels = 3;
  int depth = 4;
  int base_channels = 16;
  HeadActivation head = HeadActivation::Identity;
  bool batch_norm = false;
  std::uint64_t seed = 0;
  /// Optional expected input shape; when set, build_network checks that every
  /// axis is divisible by 2^depth.
  std::optional<Index3> input_shape;

  void validate() const;
  void check_spatial(const Index3& s) const;
};

/// U-shaped 3D encoder-decoder: `depth` levels of two 3x3x3 conv + ReLU
/// followed by 2x max pooling, a bottleneck block, a mirrored decoder with
/// trilinear x2 upsampling and skip concatenation, and a 1x1x1 head.
class Network {
 public:
  explicit Network(const NetworkConfig& cfg);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  const NetworkConfig& config() const { return cfg_; }

  /// Output shape (B, out_channels, D1, D2, D3). Activations are cached for
  /// a following backward call.
  Tensor forward(const Tensor& x, bool training = false);
  /// Accumulates parameter gradients from d loss / d output.
  void backward(const Tensor& grad_output);
  void zero_grad();

  /// Trainable parameters in a fixed order.
  std::vector<Param*> parameters();
  /// Parameters plus non-trainable buffers (what a checkpoint stores).
  std::vector<Param*> state();
  std::vector<const Param*> state() const;
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  /// Throws when names or sizes differ from this network's layout.
  void load(const std::filesystem::path& path);

 private:
  struct Impl;
  NetworkConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

Network build_network(const NetworkConfig& cfg);

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(const std::vector<Param*>& params);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Converts a batch of volumes (same shape) into an (B, 1, D1, D2, D3) tensor.
Tensor volumes_to_tensor(const std::vector<const Volume*>& volumes);
Batch tensor_to_batch(const Tensor& t);
Tensor batch_to_tensor(const Batch& b);

}  // namespace glip
