#pragma once
// Off-policy evaluation: plain fitted Q evaluation, its pessimistic variant
// that minimizes each backup over a kernel envelope, the naive
// subtract-the-worst-case lower bound, and the convex building blocks
// (a linear minimization and a Euclidean projection over a box-simplex slice).

#include <map>
#include <string>

#include "confope/data.hpp"
#include "confope/mdp.hpp"
#include "confope/sensitivity.hpp"

namespace confope {

// Minimize sum_i cost_i m_i over {lo <= m <= hi, sum_i m_i = 1}: start every
// coordinate at lo and greedily fill toward hi in ascending cost order (ties
// broken by index). Throws InfeasibleError when the slice is empty.
Vec knapsack_min_row(const Vec& cost, const Vec& lo, const Vec& hi);

// Euclidean projection onto {lo <= x <= hi, sum_i x_i = 1}: x = clip(y +
// lambda, lo, hi) with lambda found by bisection on sum x(lambda) = 1.
Vec project_box_simplex(const Vec& y, const Vec& lo, const Vec& hi, double tol = 1e-12);

struct ValueReport {
  std::string method;
  bool is_lower_bound = false;
  Vec v1;              // estimated value per initial state
  std::vector<Vec> f;  // per-step state-action tables [s*A+a]
  std::map<std::string, double> diagnostics;
};

// Verify that every cell the evaluation policy needs from start state s0 has
// data: forward closure through the kernel-estimate support. Throws
// CoverageError naming offending cells. s0 = -1 instead checks every
// state-with-data against pi_e's support.
void check_coverage(const Model& m, const Policy& pi_e, int s0);

// Fitted Q evaluation on the point-estimate kernel.
ValueReport fqe(const Model& m, const Policy& pi_e, int s0 = -1);

// Pessimistic variant: each backup minimizes the continuation over the row
// envelope at that step. A valid lower bound when the envelope contains the
// true marginal kernel.
ValueReport cfqe(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0 = -1);

// Same recursion against a single stationary envelope (the step-intersected
// set used by the model-based route); coincides with `cfqe` when handed the
// same envelopes.
ValueReport mb_relaxation(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0 = -1);

// Worst-case FQE error bounds under a misspecification rate eps, scaled by
// the reward range; the additive caps for the pessimistic estimators.
struct TheoryEnvelopes {
  double fqe_lo = 0.0;   // value - estimate is at least this (negative)
  double fqe_hi = 0.0;   // and at most this (positive)
  double cfqe_cap = 0.0; // value - pessimistic estimate is in [0, cap]
  double mb_cap = 0.0;
};
TheoryEnvelopes theory_envelopes(double eps, int H, double reward_range);

// FQE value shifted down by the worst-case overestimate for the given eps.
ValueReport naive_lb(const Model& m, const Policy& pi_e, double eps, int s0 = -1);

// Largest per-row l1 deviation from the point estimate that the envelope
// permits: max over defined rows of sum_s2 max(P_hat - lo, hi - P_hat). The
// misspecification rate to feed `naive_lb` for a given envelope.
double envelope_l1_radius(const Model& m, const Uncertainty& tu);

}  // namespace confope
