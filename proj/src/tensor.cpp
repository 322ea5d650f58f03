#include "glip/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace glip {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;
using ColMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using ConstColMap = Eigen::Map<const ColMat>;
using StridedColMap = Eigen::Map<ColMat, 0, Eigen::OuterStride<>>;

/// out[:, c0:c0+t] = w (m x k, row-major) * col (k x t, row-major), computed as
/// the transposed product so the long voxel axis is the GEMM row dimension.
inline void gemm_tile(const float* w, int m, int k, const float* col, Eigen::Index t, float* out, Eigen::Index c0,
                      Eigen::Index v) {
  StridedColMap o(out + c0, t, m, Eigen::OuterStride<>(v));
  o.noalias() = ConstColMap(col, t, k) * ConstColMap(w, k, m);
}

constexpr int kTargetTileColumns = 1024;

/// Copies one x-line of the source shifted by dx into dst, zero outside.
inline void shifted_line(const float* src, float* dst, int w, int dx) {
  if (dx == 0) {
    std::memcpy(dst, src, sizeof(float) * w);
  } else if (dx < 0) {
    dst[0] = 0.0f;
    std::memcpy(dst + 1, src, sizeof(float) * (w - 1));
  } else {
    std::memcpy(dst, src + 1, sizeof(float) * (w - 1));
    dst[w - 1] = 0.0f;
  }
}

struct Tiling {
  int lines_per_tile;
  int lines;
  int width;
};

Tiling tiling_for(const Index3& s) {
  const int lines = s[0] * s[1];
  const int per = std::max(1, std::min(lines, kTargetTileColumns / std::max(1, s[2])));
  return {per, lines, s[2]};
}

/// Builds the im2col tile for lines [line0, line0 + nl) of one sample.
void im2col_tile(const float* in, int cin, const Index3& s, int line0, int nl, float* col) {
  const std::size_t v = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  const int w = s[2];
  const std::size_t t = static_cast<std::size_t>(nl) * w;
  std::size_t r = 0;
  for (int ci = 0; ci < cin; ++ci)
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++r) {
          float* row = col + r * t;
          for (int li = 0; li < nl; ++li) {
            const int line = line0 + li;
            const int zz = line / s[1] + dz, yy = line % s[1] + dy;
            float* dst = row + static_cast<std::size_t>(li) * w;
            if (zz < 0 || zz >= s[0] || yy < 0 || yy >= s[1]) {
              std::fill(dst, dst + w, 0.0f);
            } else {
              shifted_line(in + ci * v + (static_cast<std::size_t>(zz) * s[1] + yy) * w, dst, w, dx);
            }
          }
        }
}


typedef float Vec16 __attribute__((vector_size(64)));
typedef float Vec8 __attribute__((vector_size(32)));

template <typename V>
inline V load(const float* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <typename V>
inline void store(float* p, const V& v) {
  std::memcpy(p, &v, sizeof(V));
}

template <typename V>
inline float hsum(const V& v) {
  float s = 0.0f;
  for (std::size_t i = 0; i < sizeof(V) / sizeof(float); ++i) s += v[i];
  return s;
}

/// Copies `channels` channels of shape s into a zero border of width one.
void pad_channels(const float* in, int channels, const Index3& s, std::vector<float>& out) {
  const int hp = s[1] + 2, wp = s[2] + 2;
  const std::size_t vp = static_cast<std::size_t>(s[0] + 2) * hp * wp;
  const std::size_t v = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  out.assign(vp * channels, 0.0f);
  for (int c = 0; c < channels; ++c)
    for (int z = 0; z < s[0]; ++z)
      for (int y = 0; y < s[1]; ++y)
        std::memcpy(out.data() + c * vp + (static_cast<std::size_t>(z + 1) * hp + (y + 1)) * wp + 1,
                    in + c * v + (static_cast<std::size_t>(z) * s[1] + y) * s[2], sizeof(float) * s[2]);
}

/// Direct 3x3x3 convolution of a padded input, CB output channels at a time.
/// out[co] = bias[co] + sum_{ci, offset} w[co, ci, offset] * in[ci, x + offset].
template <typename V, int CB>
void direct_conv3(const float* pin, int cin, const Index3& s, const float* w, const float* bias, int co0, float* out) {
  constexpr int L = sizeof(V) / sizeof(float);
  const int hp = s[1] + 2, wp = s[2] + 2;
  const std::size_t vp = static_cast<std::size_t>(s[0] + 2) * hp * wp;
  const std::size_t v = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  for (int z = 0; z < s[0]; ++z)
    for (int y = 0; y < s[1]; ++y)
      for (int xb = 0; xb < s[2]; xb += L) {
        V acc[CB];
        for (int c = 0; c < CB; ++c) acc[c] = V{} + (bias ? bias[co0 + c] : 0.0f);
        for (int ci = 0; ci < cin; ++ci) {
          const float* wc = w + (static_cast<std::size_t>(co0) * cin + ci) * 27;
          const std::size_t wstride = static_cast<std::size_t>(cin) * 27;
          for (int dz = 0; dz < 3; ++dz)
            for (int dy = 0; dy < 3; ++dy) {
              const float* row = pin + ci * vp + (static_cast<std::size_t>(z + dz) * hp + (y + dy)) * wp + xb;
              const int o = dz * 9 + dy * 3;
              const V x0 = load<V>(row), x1 = load<V>(row + 1), x2 = load<V>(row + 2);
              for (int c = 0; c < CB; ++c) {
                const float* wo = wc + c * wstride + o;
                acc[c] += x0 * wo[0] + x1 * wo[1] + x2 * wo[2];
              }
            }
        }
        for (int c = 0; c < CB; ++c) store(out + (co0 + c) * v + (static_cast<std::size_t>(z) * s[1] + y) * s[2] + xb, acc[c]);
      }
}

/// gw[co, ci, offset] += sum_x g[co, x] * in[ci, x + offset] for CB output channels.
template <typename V, int CB>
void direct_conv3_weight_grad(const float* pin, int cin, const Index3& s, const float* g, int co0, float* gw) {
  const int hp = s[1] + 2, wp = s[2] + 2;
  constexpr int L = sizeof(V) / sizeof(float);
  const std::size_t vp = static_cast<std::size_t>(s[0] + 2) * hp * wp;
  const std::size_t v = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  for (int ci = 0; ci < cin; ++ci)
    for (int dz = 0; dz < 3; ++dz)
      for (int dy = 0; dy < 3; ++dy) {
        V acc[CB][3];
        for (int c = 0; c < CB; ++c) acc[c][0] = acc[c][1] = acc[c][2] = V{};
        for (int z = 0; z < s[0]; ++z)
          for (int y = 0; y < s[1]; ++y) {
            const float* row = pin + ci * vp + (static_cast<std::size_t>(z + dz) * hp + (y + dy)) * wp;
            const float* grow = g + (static_cast<std::size_t>(z) * s[1] + y) * s[2];
            for (int xb = 0; xb < s[2]; xb += L) {
              const V x0 = load<V>(row + xb), x1 = load<V>(row + xb + 1), x2 = load<V>(row + xb + 2);
              for (int c = 0; c < CB; ++c) {
                const V gv = load<V>(grow + (co0 + c) * v + xb);
                acc[c][0] += gv * x0;
                acc[c][1] += gv * x1;
                acc[c][2] += gv * x2;
              }
            }
          }
        for (int c = 0; c < CB; ++c)
          for (int dx = 0; dx < 3; ++dx) gw[((static_cast<std::size_t>(co0 + c) * cin + ci) * 27) + dz * 9 + dy * 3 + dx] += hsum(acc[c][dx]);
      }
}

template <typename V>
void direct_conv3_all(const float* pin, int cin, const Index3& s, const float* w, const float* bias, int cout, float* out) {
  int co = 0;
  for (; co + 4 <= cout; co += 4) direct_conv3<V, 4>(pin, cin, s, w, bias, co, out);
  for (; co < cout; ++co) direct_conv3<V, 1>(pin, cin, s, w, bias, co, out);
}

template <typename V>
void direct_conv3_weight_grad_all(const float* pin, int cin, const Index3& s, const float* g, int cout, float* gw) {
  int co = 0;
  for (; co + 4 <= cout; co += 4) direct_conv3_weight_grad<V, 4>(pin, cin, s, g, co, gw);
  for (; co < cout; ++co) direct_conv3_weight_grad<V, 1>(pin, cin, s, g, co, gw);
}

enum class DirectWidth { None, W8, W16 };

DirectWidth direct_width(const Index3& s) {
  if (s[2] % 16 == 0) return DirectWidth::W16;
  if (s[2] % 8 == 0) return DirectWidth::W8;
  return DirectWidth::None;
}

void conv3_direct(const float* pin, int cin, const Index3& s, const float* w, const float* bias, int cout, float* out) {
  if (direct_width(s) == DirectWidth::W16) direct_conv3_all<Vec16>(pin, cin, s, w, bias, cout, out);
  else direct_conv3_all<Vec8>(pin, cin, s, w, bias, cout, out);
}

void conv3_direct_weight_grad(const float* pin, int cin, const Index3& s, const float* g, int cout, float* gw) {
  if (direct_width(s) == DirectWidth::W16) direct_conv3_weight_grad_all<Vec16>(pin, cin, s, g, cout, gw);
  else direct_conv3_weight_grad_all<Vec8>(pin, cin, s, g, cout, gw);
}

/// Kernel for the input gradient: flipped in space, in/out channels swapped.
std::vector<float> flipped_kernel(const std::vector<float>& w, int cin, int cout) {
  std::vector<float> f(w.size());
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int o = 0; o < 27; ++o)
        f[(static_cast<std::size_t>(ci) * cout + co) * 27 + o] = w[(static_cast<std::size_t>(co) * cin + ci) * 27 + 26 - o];
  return f;
}

void check_input(const Tensor& x) {
  if (x.data.size() != x.numel()) throw std::invalid_argument("tensor: data size does not match shape " + shape_string(x));
}

}  // namespace

Tensor Tensor::zeros(int n, int c, const Index3& s) {
  Tensor t;
  t.n = n;
  t.c = c;
  t.s = s;
  t.data.assign(t.numel(), 0.0f);
  return t;
}

std::string shape_string(const Tensor& t) {
  return concat("(", t.n, ", ", t.c, ", ", t.s[0], ", ", t.s[1], ", ", t.s[2], ")");
}

Conv3d::Conv3d(int in_channels, int out_channels, int kernel, const std::string& name)
    : cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (cin_ < 1 || cout_ < 1) throw std::invalid_argument("Conv3d: channel counts must be >= 1");
  if (k_ != 1 && k_ != 3) throw std::invalid_argument("Conv3d: kernel must be 1 or 3");
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(static_cast<std::size_t>(cout_) * cin_ * k_ * k_ * k_);
  bias.resize(cout_);
}

void Conv3d::init(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(cin_) * k_ * k_ * k_));
  for (auto& w : weight.value) w = static_cast<float>(stddev * rng.normal());
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Tensor Conv3d::forward(const Tensor& x) {
  check_input(x);
  if (x.c != cin_) throw std::invalid_argument(concat("Conv3d ", weight.name, ": expected ", cin_, " input channels, got ", x.c));
  input_ = x;
  Tensor out = Tensor::zeros(x.n, cout_, x.s);
  const Eigen::Index v = static_cast<Eigen::Index>(x.voxels());
  const int kk = cin_ * k_ * k_ * k_;

  if (k_ == 3 && direct_width(x.s) != DirectWidth::None) {
    std::vector<float> padded;
    for (int b = 0; b < x.n; ++b) {
      pad_channels(x.ptr(b, 0), cin_, x.s, padded);
      conv3_direct(padded.data(), cin_, x.s, weight.value.data(), bias.value.data(), cout_, out.ptr(b, 0));
    }
    return out;
  }
  if (k_ == 1) {
    for (int b = 0; b < x.n; ++b) gemm_tile(weight.value.data(), cout_, kk, x.ptr(b, 0), v, out.ptr(b, 0), 0, v);
  } else {
    const Tiling tl = tiling_for(x.s);
    std::vector<float> col(static_cast<std::size_t>(kk) * tl.lines_per_tile * tl.width);
    for (int b = 0; b < x.n; ++b) {
      for (int line0 = 0; line0 < tl.lines; line0 += tl.lines_per_tile) {
        const int nl = std::min(tl.lines_per_tile, tl.lines - line0);
        const Eigen::Index t = static_cast<Eigen::Index>(nl) * tl.width;
        im2col_tile(x.ptr(b, 0), cin_, x.s, line0, nl, col.data());
        gemm_tile(weight.value.data(), cout_, kk, col.data(), t, out.ptr(b, 0), static_cast<Eigen::Index>(line0) * tl.width, v);
      }
    }
  }
  for (int b = 0; b < x.n; ++b)
    for (int co = 0; co < cout_; ++co) {
      float* p = out.ptr(b, co);
      const float bv = bias.value[co];
      for (Eigen::Index i = 0; i < v; ++i) p[i] += bv;
    }
  return out;
}

Tensor Conv3d::backward(const Tensor& grad_out, bool need_input_grad) {
  const Tensor& x = input_;
  if (grad_out.n != x.n || grad_out.c != cout_ || grad_out.s != x.s)
    throw std::invalid_argument(concat("Conv3d ", weight.name, ": gradient shape ", shape_string(grad_out), " does not match"));
  const Eigen::Index v = static_cast<Eigen::Index>(x.voxels());
  const int kk = cin_ * k_ * k_ * k_;
  ConstRowMap w(weight.value.data(), cout_, kk);
  RowMap gw(weight.grad.data(), cout_, kk);

  for (int b = 0; b < x.n; ++b)
    for (int co = 0; co < cout_; ++co) {
      const float* g = grad_out.ptr(b, co);
      double s = 0.0;
      for (Eigen::Index i = 0; i < v; ++i) s += g[i];
      bias.grad[co] += static_cast<float>(s);
    }

  Tensor gin;
  if (need_input_grad) gin = Tensor::zeros(x.n, cin_, x.s);

  if (k_ == 1) {
    for (int b = 0; b < x.n; ++b) {
      ConstRowMap g(grad_out.ptr(b, 0), cout_, v);
      gw.noalias() += g * ConstRowMap(x.ptr(b, 0), cin_, v).transpose();
      if (need_input_grad) RowMap(gin.ptr(b, 0), cin_, v).noalias() = w.transpose() * g;
    }
    return gin;
  }

  if (direct_width(x.s) != DirectWidth::None) {
    std::vector<float> padded;
    for (int b = 0; b < x.n; ++b) {
      pad_channels(x.ptr(b, 0), cin_, x.s, padded);
      conv3_direct_weight_grad(padded.data(), cin_, x.s, grad_out.ptr(b, 0), cout_, weight.grad.data());
    }
    if (!need_input_grad) return gin;
    const auto flipped = flipped_kernel(weight.value, cin_, cout_);
    for (int b = 0; b < x.n; ++b) {
      pad_channels(grad_out.ptr(b, 0), cout_, x.s, padded);
      conv3_direct(padded.data(), cout_, x.s, flipped.data(), nullptr, cin_, gin.ptr(b, 0));
    }
    return gin;
  }

  const Tiling tl = tiling_for(x.s);
  std::vector<float> col(static_cast<std::size_t>(kk) * tl.lines_per_tile * tl.width);
  for (int b = 0; b < x.n; ++b) {
    ConstRowMap g(grad_out.ptr(b, 0), cout_, v);
    for (int line0 = 0; line0 < tl.lines; line0 += tl.lines_per_tile) {
      const int nl = std::min(tl.lines_per_tile, tl.lines - line0);
      const Eigen::Index t = static_cast<Eigen::Index>(nl) * tl.width;
      im2col_tile(x.ptr(b, 0), cin_, x.s, line0, nl, col.data());
      gw.noalias() += g.middleCols(static_cast<Eigen::Index>(line0) * tl.width, t) * ConstRowMap(col.data(), kk, t).transpose();
    }
  }
  if (!need_input_grad) return gin;

  // The input gradient is a same-padded convolution of grad_out with the
  // spatially flipped, channel-transposed kernel.
  const int kg = cout_ * 27;
  const auto flipped = flipped_kernel(weight.value, cin_, cout_);
  std::vector<float> gcol(static_cast<std::size_t>(kg) * tl.lines_per_tile * tl.width);
  for (int b = 0; b < x.n; ++b) {
    for (int line0 = 0; line0 < tl.lines; line0 += tl.lines_per_tile) {
      const int nl = std::min(tl.lines_per_tile, tl.lines - line0);
      const Eigen::Index t = static_cast<Eigen::Index>(nl) * tl.width;
      im2col_tile(grad_out.ptr(b, 0), cout_, x.s, line0, nl, gcol.data());
      gemm_tile(flipped.data(), cin_, kg, gcol.data(), t, gin.ptr(b, 0), static_cast<Eigen::Index>(line0) * tl.width, v);
    }
  }
  return gin;
}

BatchNorm3d::BatchNorm3d(int channels, const std::string& name) : channels_(channels) {
  gamma.name = name + ".gamma";
  beta.name = name + ".beta";
  running_mean.name = name + ".running_mean";
  running_var.name = name + ".running_var";
  gamma.resize(channels);
  beta.resize(channels);
  running_mean.resize(channels);
  running_var.resize(channels);
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
  std::fill(running_var.value.begin(), running_var.value.end(), 1.0f);
  running_mean.trainable = running_var.trainable = false;
}

Tensor BatchNorm3d::forward(const Tensor& x, bool training) {
  check_input(x);
  if (x.c != channels_) throw std::invalid_argument(concat("BatchNorm3d: expected ", channels_, " channels, got ", x.c));
  Tensor out = Tensor::zeros(x.n, x.c, x.s);
  xhat_ = Tensor::zeros(x.n, x.c, x.s);
  inv_std_.assign(channels_, 0.0);
  const std::size_t v = x.voxels();
  const double count = static_cast<double>(v) * x.n;
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const float* p = x.ptr(b, c);
        for (std::size_t i = 0; i < v; ++i) s += p[i];
      }
      mean = s / count;
      for (int b = 0; b < x.n; ++b) {
        const float* p = x.ptr(b, c);
        for (std::size_t i = 0; i < v; ++i) s2 += (p[i] - mean) * (p[i] - mean);
      }
      var = s2 / count;
      running_mean.value[c] = static_cast<float>((1.0 - momentum_) * running_mean.value[c] + momentum_ * mean);
      running_var.value[c] = static_cast<float>((1.0 - momentum_) * running_var.value[c] + momentum_ * var);
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (int b = 0; b < x.n; ++b) {
      const float* p = x.ptr(b, c);
      float* xh = xhat_.ptr(b, c);
      float* o = out.ptr(b, c);
      for (std::size_t i = 0; i < v; ++i) {
        xh[i] = static_cast<float>((p[i] - mean) * inv);
        o[i] = gamma.value[c] * xh[i] + beta.value[c];
      }
    }
  }
  return out;
}

Tensor BatchNorm3d::backward(const Tensor& grad_out) {
  Tensor gin = Tensor::zeros(grad_out.n, grad_out.c, grad_out.s);
  const std::size_t v = grad_out.voxels();
  const double count = static_cast<double>(v) * grad_out.n;
  for (int c = 0; c < channels_; ++c) {
    double sg = 0.0, sgx = 0.0;
    for (int b = 0; b < grad_out.n; ++b) {
      const float* g = grad_out.ptr(b, c);
      const float* xh = xhat_.ptr(b, c);
      for (std::size_t i = 0; i < v; ++i) {
        sg += g[i];
        sgx += g[i] * xh[i];
      }
    }
    beta.grad[c] += static_cast<float>(sg);
    gamma.grad[c] += static_cast<float>(sgx);
    const double k = gamma.value[c] * inv_std_[c];
    for (int b = 0; b < grad_out.n; ++b) {
      const float* g = grad_out.ptr(b, c);
      const float* xh = xhat_.ptr(b, c);
      float* gi = gin.ptr(b, c);
      for (std::size_t i = 0; i < v; ++i) gi[i] = static_cast<float>(k * (g[i] - sg / count - xh[i] * sgx / count));
    }
  }
  return gin;
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(out.data[i] > 0.0f)) grad.data[i] = 0.0f;
}

void sigmoid_inplace(Tensor& x) {
  for (auto& v : x.data) v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
}

void sigmoid_backward_inplace(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] *= out.data[i] * (1.0f - out.data[i]);
}

Tensor maxpool2_forward(const Tensor& x, std::vector<std::uint32_t>& argmax) {
  check_input(x);
  for (int a = 0; a < 3; ++a)
    if (x.s[a] % 2 != 0) throw std::invalid_argument("maxpool2: spatial dims must be even, got " + shape_string(x));
  const Index3 os{x.s[0] / 2, x.s[1] / 2, x.s[2] / 2};
  Tensor out = Tensor::zeros(x.n, x.c, os);
  argmax.assign(out.numel(), 0);
  std::size_t o = 0;
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const float* p = x.ptr(b, c);
      for (int i = 0; i < os[0]; ++i)
        for (int j = 0; j < os[1]; ++j)
          for (int k = 0; k < os[2]; ++k, ++o) {
            float best = -std::numeric_limits<float>::infinity();
            std::uint32_t at = 0;
            for (int di = 0; di < 2; ++di)
              for (int dj = 0; dj < 2; ++dj)
                for (int dk = 0; dk < 2; ++dk) {
                  const std::uint32_t idx =
                      static_cast<std::uint32_t>(((2 * i + di) * x.s[1] + (2 * j + dj)) * x.s[2] + (2 * k + dk));
                  if (di + dj + dk == 0 || p[idx] > best) {
                    best = p[idx];
                    at = idx;
                  }
                }
            out.data[o] = best;
            argmax[o] = at;
          }
    }
  return out;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, const Index3& in_shape) {
  Tensor gin = Tensor::zeros(grad_out.n, grad_out.c, in_shape);
  const std::size_t ov = grad_out.voxels();
  std::size_t o = 0;
  for (int b = 0; b < grad_out.n; ++b)
    for (int c = 0; c < grad_out.c; ++c) {
      float* g = gin.ptr(b, c);
      for (std::size_t i = 0; i < ov; ++i, ++o) g[argmax[o]] += grad_out.data[o];
    }
  return gin;
}

namespace {

/// Doubles one axis of every channel: shape (outer, n, inner) -> (outer, 2n, inner).
void upsample_axis(const std::vector<float>& in, std::vector<float>& out, std::size_t outer, int n, std::size_t inner) {
  out.assign(outer * 2 * n * inner, 0.0f);
  for (std::size_t o = 0; o < outer; ++o)
    for (int j = 0; j < 2 * n; ++j) {
      const int i = j / 2;
      const int nb = (j % 2 == 0) ? std::max(i - 1, 0) : std::min(i + 1, n - 1);
      const float* a = in.data() + (o * n + i) * inner;
      const float* bb = in.data() + (o * n + nb) * inner;
      float* dst = out.data() + (o * 2 * n + j) * inner;
      for (std::size_t q = 0; q < inner; ++q) dst[q] = 0.75f * a[q] + 0.25f * bb[q];
    }
}

void upsample_axis_adjoint(const std::vector<float>& gout, std::vector<float>& gin, std::size_t outer, int n,
                           std::size_t inner) {
  gin.assign(outer * n * inner, 0.0f);
  for (std::size_t o = 0; o < outer; ++o)
    for (int j = 0; j < 2 * n; ++j) {
      const int i = j / 2;
      const int nb = (j % 2 == 0) ? std::max(i - 1, 0) : std::min(i + 1, n - 1);
      const float* src = gout.data() + (o * 2 * n + j) * inner;
      float* a = gin.data() + (o * n + i) * inner;
      float* bb = gin.data() + (o * n + nb) * inner;
      for (std::size_t q = 0; q < inner; ++q) {
        a[q] += 0.75f * src[q];
        bb[q] += 0.25f * src[q];
      }
    }
}

}  // namespace

Tensor upsample2_forward(const Tensor& x) {
  check_input(x);
  const std::size_t nc = static_cast<std::size_t>(x.n) * x.c;
  Index3 s = x.s;
  std::vector<float> cur = x.data, next;
  for (int a = 2; a >= 0; --a) {
    std::size_t inner = 1;
    for (int q = a + 1; q < 3; ++q) inner *= s[q];
    std::size_t outer = nc;
    for (int q = 0; q < a; ++q) outer *= s[q];
    upsample_axis(cur, next, outer, s[a], inner);
    s[a] *= 2;
    cur.swap(next);
  }
  Tensor out;
  out.n = x.n;
  out.c = x.c;
  out.s = s;
  out.data = std::move(cur);
  return out;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  check_input(grad_out);
  for (int a = 0; a < 3; ++a)
    if (grad_out.s[a] % 2 != 0) throw std::invalid_argument("upsample2_backward: odd gradient shape");
  const std::size_t nc = static_cast<std::size_t>(grad_out.n) * grad_out.c;
  Index3 s = grad_out.s;
  std::vector<float> cur = grad_out.data, next;
  for (int a = 0; a < 3; ++a) {
    s[a] /= 2;
    std::size_t inner = 1;
    for (int q = a + 1; q < 3; ++q) inner *= s[q];
    std::size_t outer = nc;
    for (int q = 0; q < a; ++q) outer *= s[q];
    upsample_axis_adjoint(cur, next, outer, s[a], inner);
    cur.swap(next);
  }
  Tensor gin;
  gin.n = grad_out.n;
  gin.c = grad_out.c;
  gin.s = s;
  gin.data = std::move(cur);
  return gin;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.s != b.s) throw std::invalid_argument("concat_channels: " + shape_string(a) + " vs " + shape_string(b));
  Tensor out = Tensor::zeros(a.n, a.c + b.c, a.s);
  const std::size_t v = a.voxels();
  for (int n = 0; n < a.n; ++n) {
    std::copy_n(a.ptr(n, 0), a.c * v, out.ptr(n, 0));
    std::copy_n(b.ptr(n, 0), b.c * v, out.ptr(n, a.c));
  }
  return out;
}

void split_channels(const Tensor& x, int first, Tensor& a, Tensor& b) {
  if (first < 0 || first > x.c) throw std::invalid_argument("split_channels: split point out of range");
  a = Tensor::zeros(x.n, first, x.s);
  b = Tensor::zeros(x.n, x.c - first, x.s);
  const std::size_t v = x.voxels();
  for (int n = 0; n < x.n; ++n) {
    std::copy_n(x.ptr(n, 0), first * v, a.ptr(n, 0));
    std::copy_n(x.ptr(n, first), (x.c - first) * v, b.ptr(n, 0));
  }
}

}  // namespace glip
