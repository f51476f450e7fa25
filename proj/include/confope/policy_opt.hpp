#pragma once
// Policy improvement on top of the estimators: gradient ascent on the robust
// lower bound (alternating with the inner kernel minimization), a
// clustering-based policy gradient for episode-level confounders, and a
// harness that checks the suboptimality of maximizing an estimated value over
// a finite candidate set.

#include <cstdint>
#include <vector>

#include "confope/cluster.hpp"
#include "confope/common.hpp"
#include "confope/data.hpp"
#include "confope/mdp.hpp"
#include "confope/model_based.hpp"

namespace confope {

// Chain rule through the row-wise softmax: given dV/dpi, returns dV/dtheta
// with dtheta[s][a] = pi(a|s) * (dpi[s][a] - sum_b pi(b|s) dpi[s][b]).
Mat softmax_grad(const Mat& theta, const Mat& dpi);

// One iterate per entry; all vectors share the same length.
struct ImprovementTrace {
  std::vector<Mat> thetas;
  Vec objective;   // lower bound (max-min) or value estimate (clustering PG)
  Vec grad_norm;   // l2 norm of the theta gradient at the iterate
  Vec lr;          // step used to leave the iterate (0 for the final one)
};

struct MaxminOptions {
  int outer_iters = 60;
  double eta0 = 0.1;       // ascent step eta0 / sqrt(t)
  int inner_iters = 300;   // projected-gradient steps of the kernel player
  double inner_eta0 = 0.5;
  int inner_restarts = 0;
  std::uint64_t seed = 0;
};
struct MaxminResult {
  Mat theta;
  Policy pi;            // softmax(theta) at the final iterate
  double lower_bound = 0.0;  // robust lower bound of the final policy
  ImprovementTrace trace;
};

// Alternating ascent on the robust lower bound: per outer round, minimize the
// plug-in value over kernels in the envelope (warm-started from the previous
// round's minimizer), then take one ascent step on theta using the exact
// policy gradient at that minimizer. The trace holds outer_iters + 1 entries,
// one per theta iterate including the last. Expects a pooled model and a
// feasible envelope at the given gamma.
MaxminResult maxmin_improve(const Model& m, double gamma, const Mat& theta0, int s0,
                            const MaxminOptions& opt = {});

enum class GradEstimator {
  IsReinforce,  // per-decision importance-sampled REINFORCE from the raw trajectories
  Approximate,  // exact gradient of the cluster's plug-in value (off-policy surrogate)
};

// Gradient estimate of the softmax policy's value for one cluster.
// IsReinforce averages, over the cluster's trajectories,
//   sum_h (prod_{k<=h} rho_k) r_h sum_{k<=h} dlog pi(a_k|s_k),
// with rho = pi_theta / pi_b_hat taken from the cluster model; it estimates
// the start-law-averaged gradient and throws ConfigError when the behavior
// estimate is zero at a taken action. Approximate differentiates the pooled
// plug-in value exactly, started from s0 (or the cluster's empirical start
// law when s0 < 0).
Mat per_cluster_pg(const Dataset& cluster_ds, const Model& cluster_model, const Mat& theta,
                   GradEstimator est, int s0 = -1);

struct ClusterPgOptions {
  int iters = 150;
  double eta = 0.05;  // constant step
  GradEstimator estimator = GradEstimator::Approximate;
  ClusterOptions cluster;    // used unless force_single
  bool force_single = false; // confounder-oblivious baseline: one cluster
  int s0 = -1;               // start state; -1 = empirical start law
  // Harness mode: when set, the trace objective is the exact mixture value of
  // the current policy on this ground-truth model instead of the plug-in one.
  const ConfoundedMdp* truth = nullptr;
};
struct ClusterPgResult {
  Mat theta;
  ImprovementTrace trace;  // iters + 1 entries
  Clustering clustering;
  Vec weights;             // cluster weights used in the mixture gradient
};

// Cluster the dataset once, fit one pooled model per cluster, then ascend
// theta with the cluster-weighted gradient sum_c w_c Z_c(theta) at a constant
// step. With one cluster this is ordinary off-policy policy gradient.
ClusterPgResult cluster_policy_gradient(const Dataset& ds, const Mat& theta0,
                                        const ClusterPgOptions& opt = {});

struct SuboptReport {
  double gap = 0.0;    // V(best by true value) - V(best by estimate)
  double bound = 0.0;  // 2 * max_i |v_hat[i] - v_true[i]|
  bool ok = false;     // 0 <= gap <= bound
  int argmax_true = -1;
  int argmax_hat = -1;
};

// Over a finite candidate set with true values v_true and estimates v_hat,
// checks 0 <= V(pi*) - V(pi_hat*) <= 2 max |v_hat - v_true|.
SuboptReport suboptimality_check(const Vec& v_true, const Vec& v_hat);

}  // namespace confope
