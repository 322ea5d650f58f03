#include "glip/losses.hpp"

#include "glip/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace glip {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Glip: return "GLIP";
    case LossKind::OtOnly: return "OT_ONLY";
    case LossKind::Wce: return "WCE";
    case LossKind::Focal: return "FOCAL";
    case LossKind::Mse: return "MSE";
    case LossKind::L1: return "L1";
    case LossKind::SmoothL1: return "SMOOTH_L1";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "GLIP") return LossKind::Glip;
  if (s == "OT_ONLY" || s == "OT") return LossKind::OtOnly;
  if (s == "WCE") return LossKind::Wce;
  if (s == "FOCAL" || s == "FL") return LossKind::Focal;
  if (s == "MSE") return LossKind::Mse;
  if (s == "L1") return LossKind::L1;
  if (s == "SMOOTH_L1" || s == "SL1") return LossKind::SmoothL1;
  throw std::invalid_argument(concat("unknown loss kind '", text, "'"));
}

bool is_probability_loss(LossKind kind) { return kind == LossKind::Wce || kind == LossKind::Focal; }

void LossSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument(concat("loss lambda must be >= 0, got ", lambda));
  if (kind == LossKind::Glip && !(lambda > 0.0))
    throw std::invalid_argument("GLIP requires lambda > 0 (use OT_ONLY for the unpenalized loss)");
  if (kind == LossKind::Glip && add_grid_penalty)
    throw std::invalid_argument("add_grid_penalty applies to non-GLIP losses only");
  if (kind == LossKind::OtOnly && add_grid_penalty)
    throw std::invalid_argument("OT_ONLY never applies the grid penalty");
  if (!(focal_gamma >= 0.0)) throw std::invalid_argument("focal_gamma must be >= 0");
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw std::invalid_argument("focal_alpha must lie in (0, 1)");
  if (!(wce_pos_weight > 0.0)) throw std::invalid_argument("wce_pos_weight must be > 0");
  if (!(smooth_l1_beta > 0.0)) throw std::invalid_argument("smooth_l1_beta must be > 0");
}

std::string LossSpec::label() const { return to_string(kind) + (add_grid_penalty ? "+GP" : ""); }

Batch stack_heatmaps(const std::vector<Heatmap>& heatmaps) {
  if (heatmaps.empty()) throw std::invalid_argument("stack_heatmaps: empty list");
  Batch out;
  out.shape = {static_cast<int>(heatmaps.size()), heatmaps[0].channels, heatmaps[0].grid.shape};
  out.values.reserve(out.shape.numel());
  for (const auto& h : heatmaps) {
    if (h.channels != out.shape.channels || h.grid.shape != out.shape.spatial)
      throw std::invalid_argument("stack_heatmaps: heatmaps differ in shape");
    out.values.insert(out.values.end(), h.data.begin(), h.data.end());
  }
  return out;
}

namespace {

void check_pair(const PredictionBatch& pred, const Batch& target) {
  if (!(pred.shape == target.shape)) throw std::invalid_argument("loss: prediction and target shapes differ");
  if (pred.values.size() != pred.shape.numel() || target.values.size() != target.shape.numel())
    throw std::invalid_argument("loss: value count does not match shape");
}

template <typename Term>
LossValue elementwise_mean(const PredictionBatch& pred, const Batch& target, Term term) {
  check_pair(pred, target);
  const std::size_t n = pred.values.size();
  LossValue out;
  out.grad.resize(n);
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double g = 0.0;
    sum += term(pred.values[i], target.values[i], g, out.clamped);
    out.grad[i] = g * inv;
  }
  out.value = sum * inv;
  return out;
}

/// Clamps p into [eps, 1 - eps]; returns false when clamping was needed.
bool clamp_probability(double& p) {
  if (p < kProbabilityEpsilon) {
    p = kProbabilityEpsilon;
    return false;
  }
  if (p > 1.0 - kProbabilityEpsilon) {
    p = 1.0 - kProbabilityEpsilon;
    return false;
  }
  return true;
}

void add_scaled(LossValue& into, const LossValue& other, double scale) {
  into.value += scale * other.value;
  for (std::size_t i = 0; i < into.grad.size(); ++i) into.grad[i] += scale * other.grad[i];
  into.clamped += other.clamped;
}

}  // namespace

LossValue ot_loss(const PredictionBatch& pred, const Batch& target) {
  check_pair(pred, target);
  const auto& s = pred.shape;
  const std::size_t nv = s.voxels();

  LossValue out;
  out.grad.assign(pred.values.size(), 0.0);
  const double prefactor = 1.0 / (static_cast<double>(s.batch) * s.channels);

  for (int c = 0; c < s.channels; ++c) {
    // Both means are normalized, so shifting f by a constant leaves the loss
    // unchanged; the shift makes constant fields give exactly zero.
    const double ref = pred.values[pred.offset(0, c)];
    double pos_mass = 0.0, neg_mass = 0.0, pos_sum = 0.0, neg_sum = 0.0;
    for (int b = 0; b < s.batch; ++b) {
      const std::size_t off = pred.offset(b, c);
      for (std::size_t v = 0; v < nv; ++v) {
        const double h = target.values[off + v];
        const double f = pred.values[off + v] - ref;
        pos_mass += h;
        neg_mass += 1.0 - h;
        pos_sum += h * f;
        neg_sum += (1.0 - h) * f;
      }
    }
    if (!(pos_mass > 0.0) || !(neg_mass > 0.0))
      throw std::domain_error(concat("ot_loss: channel ", c, " has zero ", pos_mass > 0.0 ? "negative" : "positive",
                                     " mass across the batch"));

    out.value += prefactor * (-pos_sum / pos_mass + neg_sum / neg_mass);
    for (int b = 0; b < s.batch; ++b) {
      const std::size_t off = pred.offset(b, c);
      for (std::size_t v = 0; v < nv; ++v) {
        const double h = target.values[off + v];
        out.grad[off + v] = prefactor * (-h / pos_mass + (1.0 - h) / neg_mass);
      }
    }
  }
  return out;
}

LossValue grid_lipschitz_penalty(const PredictionBatch& pred, bool one_sided) {
  const auto& s = pred.shape;
  if (pred.values.size() != s.numel()) throw std::invalid_argument("grid penalty: value count does not match shape");
  for (int a = 0; a < 3; ++a)
    if (s.spatial[a] < 1) throw std::invalid_argument("grid penalty: spatial axes must be >= 1");

  LossValue out;
  out.grad.assign(pred.values.size(), 0.0);
  const double inv_batch = 1.0 / static_cast<double>(s.batch);
  const std::array<std::size_t, 3> stride{static_cast<std::size_t>(s.spatial[1]) * s.spatial[2],
                                          static_cast<std::size_t>(s.spatial[2]), 1};
  double total = 0.0;
  for (int b = 0; b < s.batch; ++b)
    for (int c = 0; c < s.channels; ++c) {
      const std::size_t off = pred.offset(b, c);
      const double* f = pred.values.data() + off;
      double* g = out.grad.data() + off;
      for (int i = 0; i < s.spatial[0]; ++i)
        for (int j = 0; j < s.spatial[1]; ++j)
          for (int k = 0; k < s.spatial[2]; ++k) {
            const std::size_t u = i * stride[0] + j * stride[1] + k;
            const std::array<bool, 3> has_next{i + 1 < s.spatial[0], j + 1 < s.spatial[1], k + 1 < s.spatial[2]};
            for (int a = 0; a < 3; ++a) {
              if (!has_next[a]) continue;
              const std::size_t v = u + stride[a];
              const double d = f[u] - f[v];
              const double excess = std::abs(d) - 1.0;
              if (one_sided && excess <= 0.0) continue;
              total += excess * excess;
              const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
              const double dd = 2.0 * excess * sign * inv_batch;
              g[u] += dd;
              g[v] -= dd;
            }
          }
    }
  out.value = total * inv_batch;
  return out;
}

LossValue glip_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec) {
  LossValue out = ot_loss(pred, target);
  if (spec.lambda != 0.0) add_scaled(out, grid_lipschitz_penalty(pred, spec.one_sided_penalty), spec.lambda);
  return out;
}

LossValue wce_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec) {
  const double w = spec.wce_pos_weight;
  return elementwise_mean(pred, target, [w](double p, double h, double& g, std::size_t& clamped) {
    const bool inside = clamp_probability(p);
    if (!inside) ++clamped;
    g = inside ? (-w * h / p + (1.0 - h) / (1.0 - p)) : 0.0;
    return -w * h * std::log(p) - (1.0 - h) * std::log(1.0 - p);
  });
}

LossValue focal_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec) {
  const double a = spec.focal_alpha, gm = spec.focal_gamma;
  return elementwise_mean(pred, target, [a, gm](double p, double h, double& g, std::size_t& clamped) {
    const bool inside = clamp_probability(p);
    if (!inside) ++clamped;
    const double q = 1.0 - p;
    const double lp = std::log(p), lq = std::log(q);
    const double qg = std::pow(q, gm), pg = std::pow(p, gm);
    const double pos = -a * h * qg * lp;
    const double neg = -(1.0 - a) * (1.0 - h) * pg * lq;
    if (inside) {
      const double dpos = -a * h * (-gm * std::pow(q, gm - 1.0) * lp + qg / p);
      const double dneg = -(1.0 - a) * (1.0 - h) * (gm * std::pow(p, gm - 1.0) * lq - pg / q);
      g = dpos + dneg;
    } else {
      g = 0.0;
    }
    return pos + neg;
  });
}

LossValue mse_loss(const PredictionBatch& pred, const Batch& target, const LossSpec&) {
  return elementwise_mean(pred, target, [](double f, double h, double& g, std::size_t&) {
    const double d = f - h;
    g = 2.0 * d;
    return d * d;
  });
}

LossValue l1_loss(const PredictionBatch& pred, const Batch& target, const LossSpec&) {
  return elementwise_mean(pred, target, [](double f, double h, double& g, std::size_t&) {
    const double d = f - h;
    g = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    return std::abs(d);
  });
}

LossValue smooth_l1_loss(const PredictionBatch& pred, const Batch& target, const LossSpec& spec) {
  const double beta = spec.smooth_l1_beta;
  return elementwise_mean(pred, target, [beta](double f, double h, double& g, std::size_t&) {
    const double d = f - h;
    if (std::abs(d) < beta) {
      g = d / beta;
      return 0.5 * d * d / beta;
    }
    g = d > 0.0 ? 1.0 : -1.0;
    return std::abs(d) - 0.5 * beta;
  });
}

LossFn base_loss(const LossSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LossKind::Glip: return [spec](const auto& p, const auto& t) { return glip_loss(p, t, spec); };
    case LossKind::OtOnly: return [](const auto& p, const auto& t) { return ot_loss(p, t); };
    case LossKind::Wce: return [spec](const auto& p, const auto& t) { return wce_loss(p, t, spec); };
    case LossKind::Focal: return [spec](const auto& p, const auto& t) { return focal_loss(p, t, spec); };
    case LossKind::Mse: return [spec](const auto& p, const auto& t) { return mse_loss(p, t, spec); };
    case LossKind::L1: return [spec](const auto& p, const auto& t) { return l1_loss(p, t, spec); };
    case LossKind::SmoothL1: return [spec](const auto& p, const auto& t) { return smooth_l1_loss(p, t, spec); };
  }
  throw std::invalid_argument("unknown loss kind");
}

LossFn with_grid_penalty(const LossSpec& base) {
  if (base.kind == LossKind::Glip) throw std::invalid_argument("with_grid_penalty: GLIP already carries the penalty");
  LossSpec plain = base;
  plain.add_grid_penalty = false;
  LossFn inner = base_loss(plain);
  const double lambda = base.lambda;
  const bool one_sided = base.one_sided_penalty;
  return [inner, lambda, one_sided](const PredictionBatch& p, const Batch& t) {
    LossValue out = inner(p, t);
    if (lambda != 0.0) add_scaled(out, grid_lipschitz_penalty(p, one_sided), lambda);
    return out;
  };
}

LossFn make_loss(const LossSpec& spec) {
  spec.validate();
  return spec.add_grid_penalty ? with_grid_penalty(spec) : base_loss(spec);
}

}  // namespace glip
