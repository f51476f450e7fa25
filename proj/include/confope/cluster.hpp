// Trajectory clustering for globally confounded data: every trajectory is
// generated under one latent type, so per-trajectory empirical transition
// rows can be compared cell-wise, clustered, and each cluster evaluated as
// its own (unconfounded) dataset.
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "confope/data.hpp"
#include "confope/mdp.hpp"

namespace confope {

// Sparse per-trajectory sufficient statistics of the observed chain.
struct TrajStats {
  std::map<int, Vec> trans;      // (s*A+a) -> transition counts over s'
  std::map<int, double> visits;  // (s*A+a) -> action count, all steps
};
std::vector<TrajStats> trajectory_stats(const Dataset& ds);

// Relabel states through proj (full state -> observed state). The hidden
// labels are carried along unchanged.
Dataset project_dataset(const Dataset& ds, const std::vector<int>& proj);

// True latent labels carried by a simulated dataset (first-step confounder).
std::vector<int> true_labels(const Dataset& ds);

// Symmetric n x n matrix (flat, row-major) of corrected distances:
// for each (s,a) cell holding at least min_count transitions in both
// trajectories, an unbiased estimate of ||p_i - p_j||_2^2 for the two row
// distributions; the pair distance is the max over such cells. NaN marks
// pairs sharing no sufficiently visited cell.
Vec pairwise_distances(const std::vector<TrajStats>& st, int S, int A, int min_count,
                       bool parallel = true);
Vec pairwise_distances_reference(const std::vector<TrajStats>& st, int S, int A, int min_count);

struct ClusterOptions {
  int K = 2;
  int min_count = 5;     // per-cell transition floor for distances
  int refine_rounds = 10;
  int em_iters = 50;
  std::uint64_t seed = 0;
};

struct Clustering {
  std::vector<int> assign;    // trajectory -> cluster in [0, K)
  int K = 0;
  Vec weights;                // cluster weights
  double objective = 0.0;     // smoothed mixture log-likelihood of the final fit
  std::vector<double> trace;  // EM: objective per iteration (non-decreasing)
};

// Single-linkage on the known distances down to K components, then hard
// likelihood refinement rounds with add-one smoothed per-cluster models.
Clustering cluster_single_linkage(const Dataset& ds, const ClusterOptions& opt);

// Soft EM over a K-component mixture of Markov chains (add-one smoothing,
// i.e. MAP with a flat Dirichlet prior; the traced objective includes the
// prior term and is non-decreasing).
Clustering cluster_soft_em(const Dataset& ds, const ClusterOptions& opt);

// Best label-permutation agreement between assignment and truth (K and the
// number of distinct truth labels must both be <= 5).
double permutation_accuracy(const std::vector<int>& assign, const std::vector<int>& truth, int K);

// Max abs gap between cluster shares and truth-label shares under the
// accuracy-maximizing permutation.
double weight_error(const std::vector<int>& assign, const std::vector<int>& truth, int K);

struct ClusterOpeReport {
  Clustering clustering;
  Vec v_c;  // plugin estimate per cluster
  Vec w_c;
  double v_hat = 0.0;  // weighted mixture estimate
  std::vector<int> sizes;
};

// Cluster the dataset, fit one pooled empirical model per cluster, run the
// plain plugin estimator on each, and mix by cluster weight. Coverage
// failures inside a cluster propagate as CoverageError.
ClusterOpeReport clustering_ope(const Dataset& ds, const Policy& pi_e, const ClusterOptions& opt,
                                bool use_em = false, int s0 = -1);

}  // namespace confope
