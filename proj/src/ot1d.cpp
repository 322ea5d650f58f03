#include "glip/ot1d.hpp"

#include "glip/util.hpp"

#include <cmath>
#include <stdexcept>

namespace glip {

namespace {

std::vector<double> normalized(const std::vector<double>& m, const char* name) {
  double total = 0.0;
  for (double x : m) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(concat(name, " must be finite and nonnegative"));
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument(concat(name, " has zero total mass"));
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] / total;
  return out;
}

void check_pair(const std::vector<double>& mu, const std::vector<double>& nu, double spacing) {
  if (mu.size() != nu.size()) throw std::invalid_argument("mu and nu must have the same number of bins");
  if (mu.empty()) throw std::invalid_argument("mu and nu are empty");
  if (!(spacing > 0.0)) throw std::invalid_argument("grid_spacing must be > 0");
}

double penalty_1d(const std::vector<double>& phi) {
  double p = 0.0;
  for (std::size_t k = 0; k + 1 < phi.size(); ++k) {
    const double e = std::abs(phi[k + 1] - phi[k]) - 1.0;
    p += e * e;
  }
  return p;
}

}  // namespace

double w1_oracle_1d(const std::vector<double>& mu, const std::vector<double>& nu, double grid_spacing) {
  check_pair(mu, nu, grid_spacing);
  const auto a = normalized(mu, "mu"), b = normalized(nu, "nu");
  double cdf = 0.0, sum = 0.0;
  for (std::size_t k = 0; k + 1 < a.size(); ++k) {
    cdf += a[k] - b[k];
    sum += std::abs(cdf);
  }
  return grid_spacing * sum;
}

DualResult dual_value_1d(const std::vector<double>& mu, const std::vector<double>& nu, int steps, double lambda,
                         double grid_spacing) {
  check_pair(mu, nu, grid_spacing);
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  const auto a = normalized(mu, "mu"), b = normalized(nu, "nu");
  const std::size_t n = a.size();

  std::vector<double> diff(n);
  for (std::size_t k = 0; k < n; ++k) diff[k] = a[k] - b[k];

  auto linear = [&](const std::vector<double>& phi) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += phi[k] * diff[k];
    return s;
  };

  // Steps are taken on the increments d_k = phi[k+1] - phi[k]. In these
  // coordinates the penalty separates per edge with curvature 2 lambda, and
  // the ascent cannot lock an increment into the wrong sign, which plain
  // steps on phi do from phi = 0.
  const double step = 1.0 / (4.0 * lambda);
  std::vector<double> phi(n, 0.0), grad(n), best = phi;
  double best_obj = linear(phi) - lambda * penalty_1d(phi);

  DualResult r;
  for (int it = 1; it <= steps; ++it) {
    grad = diff;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double d = phi[k + 1] - phi[k];
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      const double g = 2.0 * lambda * (std::abs(d) - 1.0) * sign;
      grad[k + 1] -= g;
      grad[k] += g;
    }
    // Chain rule: raising d_k raises every phi[j] with j > k.
    double tail = 0.0, gnorm = 0.0;
    std::vector<double> gd(n, 0.0);
    for (std::size_t k = n - 1; k-- > 0;) {
      tail += grad[k + 1];
      gd[k] = tail;
      gnorm += tail * tail;
    }
    double acc = 0.0, mean = 0.0;
    std::vector<double> next(n);
    next[0] = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      acc += phi[k + 1] - phi[k] + step * gd[k];
      next[k + 1] = acc;
    }
    for (double v : next) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) phi[k] = next[k] - mean;

    const double obj = linear(phi) - lambda * penalty_1d(phi);
    if (obj >= best_obj) {
      best_obj = obj;
      best = phi;
    }
    r.iterations = it;
    if (std::sqrt(gnorm) < 1e-9) {
      r.converged = true;
      break;
    }
  }
  r.phi = best;
  r.value = grid_spacing * linear(best);
  r.penalized = grid_spacing * best_obj;
  return r;
}

}  // namespace glip
