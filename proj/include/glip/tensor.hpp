#pragma once

#include "glip/util.hpp"
#include "glip/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace glip {

/// Dense float tensor in (N, C, D1, D2, D3) layout, D3 fastest.
struct Tensor {
  int n = 0;
  int c = 0;
  Index3 s{0, 0, 0};
  std::vector<float> data;

  static Tensor zeros(int n, int c, const Index3& s);
  std::size_t voxels() const { return static_cast<std::size_t>(s[0]) * s[1] * s[2]; }
  std::size_t numel() const { return voxels() * c * n; }
  float* ptr(int b, int ch) { return data.data() + (static_cast<std::size_t>(b) * c + ch) * voxels(); }
  const float* ptr(int b, int ch) const { return data.data() + (static_cast<std::size_t>(b) * c + ch) * voxels(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && s == o.s; }
};

std::string shape_string(const Tensor& t);

/// A named parameter (or buffer) with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;
  bool trainable = true;

  void resize(std::size_t n) {
    value.assign(n, 0.0f);
    grad.assign(n, 0.0f);
  }
};

/// 3D convolution with cubic kernel 1 or 3, stride 1 and zero "same" padding.
/// The input of the last forward call is kept for backward.
class Conv3d {
 public:
  Conv3d(int in_channels, int out_channels, int kernel, const std::string& name);

  /// He-normal weights, zero bias.
  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  /// Accumulates parameter gradients; returns d loss / d input unless
  /// need_input_grad is false (then an empty tensor).
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }

  Param weight;
  Param bias;

 private:
  int cin_, cout_, k_;
  Tensor input_;
};

/// Per-channel batch normalization with affine scale/shift. Uses batch
/// statistics when training and running averages otherwise.
class BatchNorm3d {
 public:
  BatchNorm3d(int channels, const std::string& name);
  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& grad_out);

  Param gamma, beta, running_mean, running_var;

 private:
  int channels_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  double momentum_ = 0.1, eps_ = 1e-5;
};

void relu_inplace(Tensor& x);
/// grad *= (out > 0), where out is the ReLU output.
void relu_backward_inplace(const Tensor& out, Tensor& grad);

void sigmoid_inplace(Tensor& x);
void sigmoid_backward_inplace(const Tensor& out, Tensor& grad);

/// 2x2x2 max pooling; `argmax` receives, per output element, the input offset
/// within its channel. Ties resolve to the first element in scan order.
Tensor maxpool2_forward(const Tensor& x, std::vector<std::uint32_t>& argmax);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, const Index3& in_shape);

/// Trilinear x2 upsampling with half-pixel centres (align_corners = false) and
/// edge clamping.
Tensor upsample2_forward(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits along channels at `first`; inverse of concat_channels.
void split_channels(const Tensor& x, int first, Tensor& a, Tensor& b);

}  // namespace glip
