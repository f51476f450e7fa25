#pragma once
// Trajectory data: simulation under a behavior policy, count summaries,
// empirical and infinite-data ("analytic") model estimates, Hoeffding-style
// concentration widths, and JSONL (de)serialization.

#include <cstdint>
#include <string>
#include <vector>

#include "confope/mdp.hpp"

namespace confope {

struct Trajectory {
  std::vector<int> s, a;
  Vec r;
  std::vector<int> u;  // hidden confounder labels; carried for harness checks only
};

struct Dataset {
  int S = 0, A = 0, H = 0;
  std::string env_id;
  uint64_t seed = 0;
  std::vector<Trajectory> trajs;
};

// Simulate n episodes of length H (H <= mdp.H) under pi_b. Each trajectory
// draws from its own RNG substream keyed by (seed, index), so output is
// independent of thread count. `simulate` runs the loop with OpenMP;
// `simulate_reference` is the plain serial loop kept for testing.
Dataset simulate(const ConfoundedMdp& mdp, const Policy& pi_b, int n, int H, uint64_t seed);
Dataset simulate_reference(const ConfoundedMdp& mdp, const Policy& pi_b, int n, int H,
                           uint64_t seed);

// Per-step visit counts. Transition counts exist for h = 0..H-2.
struct Counts {
  int S = 0, A = 0, H = 0;
  Mat n_s;    // [h][s],        h = 0..H-1
  Mat n_sa;   // [h][s*A+a],    h = 0..H-1
  Mat n_sas;  // [h][(s*A+a)*S+s2], h = 0..H-2
  Mat r_sum;  // [h][s*A+a],    h = 0..H-1
};
Counts counts(const Dataset& ds);

// Estimator input: transition kernel, behavior policy, and reward table,
// either per step or pooled across steps. Produced from data or analytically.
struct Model {
  int S = 0, A = 0, H = 0;
  bool pooled = true;
  std::vector<Vec> P;     // kernel tables [(s*A+a)*S+s2]; 1 table if pooled, else H-1
  std::vector<Vec> pi_b;  // behavior estimate [s*A+a]; 1 table if pooled, else H
  std::vector<Vec> r;     // reward estimate [s*A+a]; 1 table if pooled, else H
  std::vector<std::vector<char>> visited;  // per kernel table: cell has transition data
  std::vector<Vec> n_sa;                   // transition counts per kernel table

  int kernel_steps() const { return static_cast<int>(P.size()); }
  const Vec& Pt(int h) const { return P[pooled ? 0 : static_cast<size_t>(h)]; }
  const Vec& pi_t(int h) const { return pi_b[pooled ? 0 : static_cast<size_t>(h)]; }
  const Vec& r_t(int h) const { return r[pooled ? 0 : static_cast<size_t>(h)]; }
  bool cell_visited(int h, int s, int a) const {
    return visited[pooled ? 0 : static_cast<size_t>(h)][static_cast<size_t>(s) * A + a] != 0;
  }
  double reward_range() const;
};

Model empirical_model(const Dataset& ds, bool pooled);

// Infinite-data limit of `empirical_model` under pi_b: the kernel each cell
// converges to is the confounder-posterior-weighted row given (s_h, a_h),
// the behavior estimate is the marginalized policy, and rewards are exact.
Model analytic_model(const ConfoundedMdp& mdp, const Policy& pi_b, bool pooled);

// Effective per-cell sample sizes (a soft minimum over steps) and the
// resulting simultaneous-confidence half-widths.
struct Widths {
  Vec n_star_s;   // [s]
  Vec n_star_sa;  // [s*A+a]
  Vec delta_pi;   // [s]: bound on |pi_hat(.|s) - pi_b(.|s)| entries, level 1-delta1
  Vec delta_P;    // [s*A+a]: bound on kernel entries, level 1-delta2
};
Widths hoeffding_widths(const Dataset& ds, double delta1, double delta2);

// Monte-Carlo mean return of pi over n fresh episodes (diagnostic cross-check).
double mc_return(const ConfoundedMdp& mdp, const Policy& pi, int n, uint64_t seed);

// JSONL dataset files plus a small sidecar with {env_id, seed, n, H}.
void write_dataset(const Dataset& ds, const std::string& jsonl_path, const std::string& meta_path);
Dataset read_dataset(const std::string& jsonl_path, const std::string& meta_path);

}  // namespace confope
