#pragma once

#include <cstddef>
#include <vector>

namespace glip {

/// Exact 1D Wasserstein-1 distance between two histograms on a regular grid:
/// spacing * sum_k |CDF_mu(k) - CDF_nu(k)|. Both inputs are normalized to unit
/// mass first; they must have equal length.
double w1_oracle_1d(const std::vector<double>& mu, const std::vector<double>& nu, double grid_spacing = 1.0);

struct DualResult {
  /// sum_k phi_k (mu_k - nu_k), scaled by the grid spacing.
  double value = 0.0;
  /// value minus lambda times the grid penalty on phi.
  double penalized = 0.0;
  std::vector<double> phi;
  int iterations = 0;
  bool converged = false;
};

/// Maximizes the dual objective sum phi (mu - nu) over a free per-bin potential
/// by gradient ascent, with the grid penalty sum (|phi_{k+1} - phi_k| - 1)^2
/// standing in for the 1-Lipschitz constraint. When `steps` are exhausted the
/// best iterate is returned with converged == false.
DualResult dual_value_1d(const std::vector<double>& mu, const std::vector<double>& nu, int steps = 20000,
                         double lambda = 20.0, double grid_spacing = 1.0);

}  // namespace glip
