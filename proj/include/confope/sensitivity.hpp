#pragma once
// Sensitivity model: a confounding budget Gamma bounds how far the confounded
// action odds may drift from the observed behavior policy's odds. That turns a
// point-estimate kernel into per-row envelopes the robust estimators search.

#include "confope/data.hpp"
#include "confope/mdp.hpp"

namespace confope {

// Multipliers alpha <= 1 <= beta per (s, a) cell derived from the behavior
// probability pi: alpha = pi + (1 - pi)/Gamma, beta = Gamma + pi (1 - Gamma).
double alpha_bound(double pi, double gamma);
double beta_bound(double pi, double gamma);

struct BoundsTable {
  std::vector<Vec> alpha, beta;  // per model table, [s*A+a]
};
BoundsTable bounds_from_gamma(const Model& m, double gamma);

// Row envelopes lo <= P <= hi around a kernel point estimate. `defined` marks
// rows that have data behind them.
struct Uncertainty {
  int S = 0, A = 0;
  bool pooled = true;
  std::vector<Vec> lo, hi;  // [(s*A+a)*S+s2]
  std::vector<Vec> alpha, beta;
  std::vector<std::vector<char>> defined;

  int steps() const { return static_cast<int>(lo.size()); }
  const Vec& lo_t(int h) const { return lo[pooled ? 0 : static_cast<size_t>(h)]; }
  const Vec& hi_t(int h) const { return hi[pooled ? 0 : static_cast<size_t>(h)]; }
  bool row_defined(int h, int s, int a) const {
    return defined[pooled ? 0 : static_cast<size_t>(h)][static_cast<size_t>(s) * A + a] != 0;
  }
};

// lo = alpha P_hat, hi = min(beta P_hat, 1), per model table.
Uncertainty build_uncertainty(const Model& m, double gamma);

// Finite-sample widening: behavior probabilities shrunk by their confidence
// width before the multipliers (conservative direction), kernel entries
// widened by theirs: lo = alpha_d1 max(P_hat - dP, 0), hi = min(beta_d1 (P_hat + dP), 1).
Uncertainty build_uncertainty_widened(const Model& m, double gamma, const Widths& w);

// Stationary envelope: per-entry intersection across steps (max of lo, min of
// hi) over steps where the row is defined. Pooled input passes through.
Uncertainty intersect_steps(const Uncertainty& tu);

// Throws InfeasibleError if some defined row has sum(lo) > 1 or sum(hi) < 1.
void check_feasible(const Uncertainty& tu);

// Smallest Gamma consistent with the fixture: max odds ratio between the
// confounded behavior policy and its observed marginalization, over cells the
// behavior policy visits. Infinity when some confounded probability is 0 or 1
// while the marginal is interior.
double true_gamma(const ConfoundedMdp& mdp, const Policy& pi_b);

}  // namespace confope
