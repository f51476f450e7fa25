// Benchmark environments: small confounded MDPs whose values, gaps, and
// sensitivity budgets are known in closed form, used as ground truth by the
// tests and the CLI.
#pragma once

#include <confope/mdp.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace confope {

// A fixture bundles one or two MDPs (pairs share an observed law), the
// behavior policy per MDP, a target policy, and a map of analytically
// derived reference quantities ("known") that validate_fixture() recomputes
// from the assembled tables through independent code paths.
struct Fixture {
  std::string id;
  std::vector<ConfoundedMdp> mdps;
  std::vector<Policy> pi_b;  // parallel to mdps
  Policy pi_e;
  std::map<std::string, double> known;
  // Optional observation projection: full state -> observed state. Empty
  // means fully observed. Used by environments that hide a coordinate.
  std::vector<int> obs_projection;
  std::string notes;
};

// Two memoryless-confounded MDPs with identical observed laws whose target
// values differ by 2*eps*H*|1-2z|. eps in [0, 0.5); z, z1, z2 in [0, 1].
// The internal horizon is H+1 (one lead-in step from the non-rewarding
// state); "H" counts the reward-bearing steps.
Fixture memoryless_pair(double eps = 0.1, double z = 0.0, double z1 = 0.25,
                        double z2 = 0.75, int H = 10);

// Deterministic history-dependent confounder that remembers whether action 0
// has been played exclusively. True value H; any estimator fed only the
// observed one-step tables is capped near 2*log2(H)+9.
Fixture memory_chain(int H = 64);

// Pair with a history-dependent confounder tracking whether the action
// sequence still alternates. Identical observed laws at every horizon, yet
// one MDP is worth (1-2^(1-H))*(H-1)*rho and the other 0 under the uniform
// target policy, where rho rescales rewards into [0,1]. Requires H >= 3.
Fixture alternating_pair(int H = 10);

// Hypercube walk on {0,1}^n plus a rewarding hub state; a single global
// binary confounder selects one of two hub-entry probabilities. The pair's
// observed laws agree for horizons H <= n/4 while the values from the
// all-ones corner differ. p is 2x2: p[i][j] = hub-entry probability in MDP i
// when the confounder is j. All entries must lie in [0, 1].
Fixture hypercube_pair(int n = 8,
                       const Mat& p = {{0.99, 0.98}, {0.01, 0.02}},
                       int H = 9);

// 4x4 gridworld with an i.i.d. binary confounder toggling the slip level.
// The behavior policy is epsilon-greedy with epsilon depending on the slip
// level, giving an exact odds-ratio budget gamma_star = 31/21.
Fixture gridworld_iid(double slip_high = 0.35, double slip_low = 0.05,
                      double p_high = 0.5, int H = 8);

// Stylized patient simulator: heart rate and blood pressure on an LxL grid
// plus a binary glucose flag that is i.i.d. given a global latent type.
// The projection hides glucose; one (state, action) cell separates the two
// types in the projected kernel by an l2 distance recorded in "delta_sep".
// n_types = 1 drops the confounding entirely (single latent type).
Fixture sepsis_toy(int levels = 3, int n_types = 2, int H = 60);

// Internal 4-state instance with a global binary confounder, built for the
// trajectory-clustering pipeline: the designated cell (s=0, a=0) separates
// the two mixture components by exactly 0.5 in l2.
Fixture two_mixture();

// Build a fixture by id (short aliases and hyphens accepted) with default
// parameters, and re-derive every `known` entry through library oracles;
// construction fails if any entry cannot be reproduced.
Fixture make_fixture(const std::string& id);
std::vector<std::string> fixture_ids();

// Copy of a Global-confounder model with u pinned: U becomes 1.
ConfoundedMdp pin_global_u(const ConfoundedMdp& m, int u);

// Recompute every "known" entry from the fixture's tables via library
// routines and return the maximum absolute discrepancy.
double validate_fixture(const Fixture& fx);

// Copy of m with the horizon changed (stationary models only).
ConfoundedMdp with_horizon(const ConfoundedMdp& m, int H);

// State with the largest initial mass (tie -> smallest index).
int start_state(const ConfoundedMdp& m);

// Random small instances with a controlled sensitivity budget: behavior
// policies are tilted away from their confounder-marginal by a factor that
// is shrunk until true_gamma() <= gamma_cap.
struct RandomSpec {
  int S = 3, U = 2, A = 2, H = 8;
  double gamma_cap = 1.1;
  std::uint64_t seed = 0;
  bool shift_rewards_to_zero = true;
};
Fixture random_confounded(const RandomSpec& spec);

// Pearson chi-squared two-sample test on count vectors (shared support).
// Returns the p-value; bins with zero combined count are dropped.
double two_sample_chi2(const std::vector<long long>& a,
                       const std::vector<long long>& b);

}  // namespace confope
