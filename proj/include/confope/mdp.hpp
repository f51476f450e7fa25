#pragma once
// Tabular episodic MDP with an unobserved confounder u alongside the observed
// state s. The confounder can influence transitions and the behavior policy but
// never the reward table or the evaluation policy. Provides exact evaluation,
// marginalization, occupancies, concentrability and mixing diagnostics, and
// JSON (de)serialization.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confope/common.hpp"

namespace confope {

// How the confounder evolves over an episode.
struct ConfounderProcess {
  enum class Kind {
    Memoryless,            // u_h ~ P_h(u | s_h), fresh each step
    Global,                // u ~ P(u) drawn once per episode
    HistoryDeterministic,  // u_1 = u0, u_{h+1} = next_u[u_h][a_h]
  };
  Kind kind = Kind::Memoryless;

  // Memoryless: p_u_s[t][s][u]; one entry if the law is the same at every step.
  std::vector<Mat> p_u_s;
  // Global: p_u[u].
  Vec p_u;
  // HistoryDeterministic:
  int u0 = 0;
  std::vector<std::vector<int>> next_u;  // [u][a]
};

// Policy over actions. Confounded tables condition on u; observed tables and
// softmax parameters do not (softmax is stationary by construction).
struct Policy {
  enum class Kind { Confounded, Observed, Softmax };
  Kind kind = Kind::Observed;
  int S = 0, U = 0, A = 0;

  // Confounded: tab[t][(s*U + u)*A + a]; Observed: tab[t][s*A + a].
  // One entry means the same table at every step.
  std::vector<Vec> tab;
  // Softmax: logits theta[s][a]; tab caches the resulting probabilities.
  Mat theta;

  bool confounded() const { return kind == Kind::Confounded; }
  int steps() const { return static_cast<int>(tab.size()); }

  // Probability of action a at step t (0-based) in state s with confounder u.
  // Observed/softmax policies ignore u.
  double p(int t, int s, int u, int a) const {
    const Vec& T = tab[tab.size() == 1 ? 0 : static_cast<size_t>(t)];
    if (kind == Kind::Confounded) return T[(static_cast<size_t>(s) * U + u) * A + a];
    return T[static_cast<size_t>(s) * A + a];
  }

  static Policy observed(int S, int A, std::vector<Vec> tables);
  static Policy observed_uniform(int S, int A);
  static Policy confounded(int S, int U, int A, std::vector<Vec> tables);
  static Policy softmax(const Mat& theta);
  void validate() const;
};

struct ConfoundedMdp {
  int S = 0, U = 0, A = 0, H = 0;
  bool stationary = true;
  // kernel[t][((s*U + u)*A + a)*S + s2]; one entry when stationary.
  std::vector<Vec> kernel;
  Mat reward;  // reward[s][a]; depends on the observed state and action only
  Vec d0;      // initial observed-state distribution
  ConfounderProcess proc;

  const double* row(int t, int s, int u, int a) const {
    const Vec& K = kernel[kernel.size() == 1 ? 0 : static_cast<size_t>(t)];
    return K.data() + (static_cast<size_t>((static_cast<size_t>(s) * U + u) * A + a)) * S;
  }
  double& at(int t, int s, int u, int a, int s2) {
    Vec& K = kernel[kernel.size() == 1 ? 0 : static_cast<size_t>(t)];
    return K[(static_cast<size_t>((static_cast<size_t>(s) * U + u) * A + a)) * S + s2];
  }
  // Law of u_1 given the initial state.
  Vec initial_u(int s) const;
  void validate() const;
};

// ---- Exact evaluation ----------------------------------------------------

struct ExactValue {
  double v = 0.0;    // E over d0 (and the confounder draw) of the episode return
  Vec v1;            // v1[s]: value from initial state s (u averaged per the process)
  std::vector<Mat> w;  // w[h][s][u]: joint value-to-go tables, h = 0..H-1
};

// Backward induction on the joint (s, u) chain. Works for all process kinds
// and for confounded or observed policies.
ExactValue exact_value(const ConfoundedMdp& mdp, const Policy& pi);

// Value from state s when the confounder is pinned to u for the whole episode.
// Requires a Global process (where pinning corresponds to conditioning).
double exact_value_given_u(const ConfoundedMdp& mdp, const Policy& pi, int s, int u);

// ---- Marginalization -----------------------------------------------------

// Posterior P_h(u | s_h = s) under pi_b, by forward filtering of the joint
// occupancy. States unvisited at step h get a uniform posterior over the
// confounder values reachable at that step.
std::vector<Mat> behavior_state_posterior(const ConfoundedMdp& mdp, const Policy& pi_b);

// Observed (u-averaged) behavior policy: pi_b(a | s) at each step, weighting
// u by the forward-filtered posterior.
Policy marginalize_policy(const ConfoundedMdp& mdp, const Policy& pi_b);

// Causal marginal kernel P_h(s' | s, a) = sum_u P_h(u | s) P_h(s'|s,u,a),
// using the pi_b forward-filtered posterior for the u weights.
std::vector<Vec> marginal_kernel(const ConfoundedMdp& mdp, const Policy& pi_b);

// Confounded data-limit kernel P^{pi_b}_h(s'|s,a): u weighted by its posterior
// given (s_h = s, a_h = a) under pi_b. This is what infinite data estimates.
std::vector<Vec> behavior_kernel(const ConfoundedMdp& mdp, const Policy& pi_b);

// ---- Occupancies and diagnostics ----------------------------------------

struct Occupancy {
  std::vector<Mat> mu;  // mu[h][s][u]: joint state/confounder occupancy
  Mat d_s;              // d_s[h][s]
  Mat d_sa;             // d_sa[h][s*A + a]
};
Occupancy occupancy(const ConfoundedMdp& mdp, const Policy& pi);

struct Concentrability {
  double tau_s = 0.0;  // max_h,s d^e_h(s) / d^b_h(s)
  double tau_a = 0.0;  // max over reachable (h,s,a) of pi_e(a|s) / pi_b(a|s)
  double d_m = 0.0;    // max_h,s,a d^e_h(s,a) / d^b_h(s,a)
};
// Ratios are infinity when the evaluation policy reaches mass the behavior
// policy does not. pi_e must be an observed policy.
Concentrability concentrability(const ConfoundedMdp& mdp, const Policy& pi_b, const Policy& pi_e);

struct MixingReport {
  int t_mix = -1;          // smallest t with max-over-starts TV distance <= 1/4
  bool converged = false;  // false if the cap was hit
  bool irreducible = true;
  bool aperiodic = true;
};
// Mixing time of the (s, a) chain induced by pi_b with the confounder pinned
// to u: (s,a) -> (s',a') with probability P(s'|s,a,u) pi_b(a'|s',u). Uses the
// stationary kernel; iteration capped at `cap`.
MixingReport mixing_time(const ConfoundedMdp& mdp, const Policy& pi_b, int u, int cap = 10000);
// Max over confounder values.
MixingReport mixing_time_overall(const ConfoundedMdp& mdp, const Policy& pi_b, int cap = 10000);

// ---- Trajectory-level laws ----------------------------------------------

// Log-likelihood of an observed (s, a) sequence under (mdp, pi_b) with the
// confounder pinned to u (Global process only).
double loglik_given_u(const ConfoundedMdp& mdp, const Policy& pi_b, const std::vector<int>& s,
                      const std::vector<int>& a, int u);

// Exact observed trajectory law under pi_b: probability of each (s, a)
// sequence, obtained by depth-first enumeration of the joint (s, u) chain.
// Throws ConfigError if more than `max_leaves` distinct observed sequences
// would be produced.
std::map<std::string, double> observed_law(const ConfoundedMdp& mdp, const Policy& pi_b,
                                           size_t max_leaves = 2000000);

// ---- Serialization -------------------------------------------------------

std::string mdp_to_json(const ConfoundedMdp& mdp);
ConfoundedMdp mdp_from_json(const std::string& text);
std::string policy_to_json(const Policy& pi);
Policy policy_from_json(const std::string& text);

}  // namespace confope
