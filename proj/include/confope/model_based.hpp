#pragma once
// Stationary-kernel dynamic programming: value and exact derivatives (reverse
// accumulation), projected gradient descent for the worst kernel inside an
// envelope, and a grid-search oracle for small instances.

#include <cstdint>

#include "confope/data.hpp"
#include "confope/mdp.hpp"
#include "confope/sensitivity.hpp"

namespace confope {

// Episode value of pi from start state s0 under a stationary kernel
// P[(s*A+a)*S+s2] and reward r[s*A+a], over H steps.
double mb_value(const Vec& P, const Vec& r, const Policy& pi, int S, int A, int H, int s0);

struct MbEval {
  double v = 0.0;
  Vec dP;  // dV/dP, same layout as P
};
MbEval mb_value_grad(const Vec& P, const Vec& r, const Policy& pi, int S, int A, int H, int s0);

struct PolicyEval {
  double v = 0.0;
  Mat dtheta;  // dV/dtheta for a softmax policy, [s][a]
};
PolicyEval value_policy_grad(const Vec& P, const Vec& r, const Policy& softmax_pi, int S, int A,
                             int H, int s0);

struct PgdOptions {
  int iters = 300;
  double eta0 = 0.5;     // step size eta0 / sqrt(t)
  int restarts = 0;      // extra random starts inside the envelope
  uint64_t seed = 0;     // used only when restarts > 0
  bool record_trace = false;
  const Vec* init = nullptr;  // optional warm start, layout of Model::P[0]
};
struct PgdResult {
  double v_min = 0.0;
  Vec P_best;
  Vec trace_v, trace_gnorm;  // per iteration when record_trace
};

// Minimize V(s0) over kernels in the stationary envelope, starting from the
// projection of the model's pooled point estimate. Returns the best iterate
// encountered. Rows without data stay at the point estimate and are excluded
// from the search (coverage from s0 is checked first).
PgdResult mb_pgd(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0,
                 const PgdOptions& opt = {});

// Exhaustive search over a per-row grid of the envelope (grid step
// `resolution`, interval endpoints always included), restricted to the rows
// reachable from s0 under pi_e, followed by one refinement pass at a tenth of
// the step around the best point. Only for small instances; throws
// ConfigError when the grid would be too large.
double mb_bruteforce(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0,
                     double resolution);

}  // namespace confope
