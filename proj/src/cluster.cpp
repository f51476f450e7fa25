#include "confope/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <tuple>

#include "confope/ope.hpp"
#include "confope/rng.hpp"

namespace confope {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<TrajStats> trajectory_stats(const Dataset& ds) {
  std::vector<TrajStats> out(ds.trajs.size());
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    const Trajectory& tr = ds.trajs[i];
    TrajStats& st = out[i];
    int len = static_cast<int>(tr.s.size());
    for (int h = 0; h < len; ++h) {
      int cell = tr.s[h] * ds.A + tr.a[h];
      st.visits[cell] += 1.0;
      if (h + 1 < len) {
        auto [it, fresh] = st.trans.try_emplace(cell, Vec(ds.S, 0.0));
        it->second[tr.s[h + 1]] += 1.0;
        (void)fresh;
      }
    }
  }
  return out;
}

Dataset project_dataset(const Dataset& ds, const std::vector<int>& proj) {
  if (static_cast<int>(proj.size()) != ds.S)
    throw ConfigError("project_dataset: projection size does not match state count");
  int S_obs = *std::max_element(proj.begin(), proj.end()) + 1;
  Dataset out = ds;
  out.S = S_obs;
  for (Trajectory& tr : out.trajs)
    for (int& s : tr.s) s = proj[s];
  return out;
}

std::vector<int> true_labels(const Dataset& ds) {
  std::vector<int> lab(ds.trajs.size());
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    if (ds.trajs[i].u.empty())
      throw ConfigError("true_labels: dataset carries no hidden labels");
    lab[i] = ds.trajs[i].u[0];
  }
  return lab;
}

// ---- Pairwise corrected distances ----------------------------------------

namespace {

struct CellStat {
  int cell;
  double n;      // transitions recorded in the cell
  double unb;    // unbiased estimate of ||p||^2: (n*||p_hat||^2 - 1)/(n - 1)
  Vec p;         // normalized row
};

std::vector<std::vector<CellStat>> cell_stats(const std::vector<TrajStats>& st, int min_count) {
  std::vector<std::vector<CellStat>> cs(st.size());
  for (size_t i = 0; i < st.size(); ++i)
    for (const auto& [cell, row] : st[i].trans) {
      double n = std::accumulate(row.begin(), row.end(), 0.0);
      if (n < min_count) continue;
      CellStat c;
      c.cell = cell;
      c.n = n;
      c.p = row;
      double norm2 = 0.0;
      for (double& v : c.p) {
        v /= n;
        norm2 += v * v;
      }
      c.unb = (n * norm2 - 1.0) / (n - 1.0);
      cs[i].push_back(std::move(c));
    }
  return cs;
}

// Max over shared cells of the unbiased ||p_i - p_j||^2 estimate; NaN if the
// trajectories share no sufficiently visited cell.
double pair_distance(const std::vector<CellStat>& a, const std::vector<CellStat>& b) {
  double best = kNaN;
  size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia].cell < b[ib].cell) {
      ++ia;
    } else if (a[ia].cell > b[ib].cell) {
      ++ib;
    } else {
      double dot = 0.0;
      for (size_t k = 0; k < a[ia].p.size(); ++k) dot += a[ia].p[k] * b[ib].p[k];
      double d = a[ia].unb + b[ib].unb - 2.0 * dot;
      if (std::isnan(best) || d > best) best = d;
      ++ia;
      ++ib;
    }
  }
  return best;
}

Vec pairwise_impl(const std::vector<TrajStats>& st, int min_count, bool parallel) {
  int n = static_cast<int>(st.size());
  std::vector<std::vector<CellStat>> cs = cell_stats(st, min_count);
  Vec dist(static_cast<size_t>(n) * n, kNaN);
  for (int i = 0; i < n; ++i) dist[static_cast<size_t>(i) * n + i] = 0.0;
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double d = pair_distance(cs[i], cs[j]);
        dist[static_cast<size_t>(i) * n + j] = d;
        dist[static_cast<size_t>(j) * n + i] = d;
      }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double d = pair_distance(cs[i], cs[j]);
        dist[static_cast<size_t>(i) * n + j] = d;
        dist[static_cast<size_t>(j) * n + i] = d;
      }
  }
  return dist;
}

}  // namespace

Vec pairwise_distances(const std::vector<TrajStats>& st, int S, int A, int min_count,
                       bool parallel) {
  (void)S;
  (void)A;
  return pairwise_impl(st, min_count, parallel);
}

Vec pairwise_distances_reference(const std::vector<TrajStats>& st, int S, int A, int min_count) {
  (void)S;
  (void)A;
  return pairwise_impl(st, min_count, false);
}

// ---- Smoothed mixture machinery ------------------------------------------

namespace {

struct MixFit {
  std::vector<Vec> logP;   // per cluster, (s*A+a)*S+s2
  std::vector<Vec> logpi;  // per cluster, s*A+a
  Vec w;
  double log_prior = 0.0;  // flat-Dirichlet (add-one) prior mass of the fit
};

// Maximum-a-posteriori refit from soft responsibilities (rows of resp sum
// to 1; hard assignments are one-hot rows).
MixFit fit_mixture(const std::vector<TrajStats>& st, const Mat& resp, int S, int A, int K) {
  size_t cells = static_cast<size_t>(S) * A;
  MixFit f;
  f.logP.assign(K, Vec(cells * S, 0.0));
  f.logpi.assign(K, Vec(cells, 0.0));
  f.w.assign(K, 0.0);

  std::vector<Vec> tcnt(K, Vec(cells * S, 0.0)), acnt(K, Vec(cells, 0.0));
  for (size_t i = 0; i < st.size(); ++i)
    for (int c = 0; c < K; ++c) {
      double r = resp[i][c];
      f.w[c] += r;
      if (r == 0.0) continue;
      for (const auto& [cell, row] : st[i].trans)
        for (int s2 = 0; s2 < S; ++s2) tcnt[c][static_cast<size_t>(cell) * S + s2] += r * row[s2];
      for (const auto& [cell, v] : st[i].visits) acnt[c][cell] += r * v;
    }

  double n = static_cast<double>(st.size());
  f.log_prior = 0.0;
  for (int c = 0; c < K; ++c) {
    f.w[c] /= n;
    for (size_t k = 0; k < cells; ++k) {
      double tot = 0.0;
      for (int s2 = 0; s2 < S; ++s2) tot += tcnt[c][k * S + s2];
      for (int s2 = 0; s2 < S; ++s2) {
        double p = (tcnt[c][k * S + s2] + 1.0) / (tot + S);
        f.logP[c][k * S + s2] = std::log(p);
        f.log_prior += std::log(p);
      }
    }
    for (int s = 0; s < S; ++s) {
      double tot = 0.0;
      for (int a = 0; a < A; ++a) tot += acnt[c][static_cast<size_t>(s) * A + a];
      for (int a = 0; a < A; ++a) {
        double p = (acnt[c][static_cast<size_t>(s) * A + a] + 1.0) / (tot + A);
        f.logpi[c][static_cast<size_t>(s) * A + a] = std::log(p);
        f.log_prior += std::log(p);
      }
    }
  }
  return f;
}

double traj_loglik(const TrajStats& t, const Vec& logP, const Vec& logpi, int S) {
  double ll = 0.0;
  for (const auto& [cell, v] : t.visits) ll += v * logpi[cell];
  for (const auto& [cell, row] : t.trans)
    for (int s2 = 0; s2 < S; ++s2)
      if (row[s2] != 0.0) ll += row[s2] * logP[static_cast<size_t>(cell) * S + s2];
  return ll;
}

double log_w_safe(double w) { return std::log(std::max(w, 1e-300)); }

// Soft mixture objective (marginal log-likelihood plus the prior term).
double mixture_objective(const std::vector<TrajStats>& st, const MixFit& f, int S, int K,
                         Mat* resp_out) {
  double obj = f.log_prior;
  for (size_t i = 0; i < st.size(); ++i) {
    Vec term(K);
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < K; ++c) {
      term[c] = log_w_safe(f.w[c]) + traj_loglik(st[i], f.logP[c], f.logpi[c], S);
      mx = std::max(mx, term[c]);
    }
    double lse = 0.0;
    for (int c = 0; c < K; ++c) lse += std::exp(term[c] - mx);
    lse = mx + std::log(lse);
    obj += lse;
    if (resp_out)
      for (int c = 0; c < K; ++c) (*resp_out)[i][c] = std::exp(term[c] - lse);
  }
  return obj;
}

Mat one_hot(const std::vector<int>& assign, int K) {
  Mat r(assign.size(), Vec(K, 0.0));
  for (size_t i = 0; i < assign.size(); ++i) r[i][assign[i]] = 1.0;
  return r;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

}  // namespace

Clustering cluster_single_linkage(const Dataset& ds, const ClusterOptions& opt) {
  int n = static_cast<int>(ds.trajs.size());
  if (opt.K < 1) throw ConfigError("cluster: K must be >= 1");
  if (n < opt.K) throw ConfigError("cluster: fewer trajectories than clusters");
  const int K = opt.K;
  std::vector<TrajStats> st = trajectory_stats(ds);
  Vec dist = pairwise_distances(st, ds.S, ds.A, opt.min_count, true);

  // Merge the closest known pairs until K components remain.
  std::vector<std::tuple<double, int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = dist[static_cast<size_t>(i) * n + j];
      if (!std::isnan(d)) edges.emplace_back(d, i, j);
    }
  std::sort(edges.begin(), edges.end());
  UnionFind uf(n);
  int comps = n;
  for (const auto& [d, i, j] : edges) {
    if (comps == K) break;
    if (uf.unite(i, j)) --comps;
  }

  std::map<int, std::vector<int>> by_root;
  for (int i = 0; i < n; ++i) by_root[uf.find(i)].push_back(i);
  std::vector<std::vector<int>> groups;
  for (auto& [root, members] : by_root) groups.push_back(std::move(members));
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });

  std::vector<int> assign(n, -1);
  for (int c = 0; c < K && c < static_cast<int>(groups.size()); ++c)
    for (int i : groups[c]) assign[i] = c;
  // Leftover components: nearest seed by the best known member distance.
  for (size_t g = K; g < groups.size(); ++g)
    for (int i : groups[g]) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      bool found = false;
      for (int c = 0; c < K && c < static_cast<int>(groups.size()); ++c)
        for (int j : groups[c]) {
          double d = dist[static_cast<size_t>(i) * n + j];
          if (!std::isnan(d) && (!found || d < best_d)) {
            best_d = d;
            best_c = c;
            found = true;
          }
        }
      assign[i] = best_c;
    }

  // Hard likelihood refinement with smoothed per-cluster models.
  MixFit fit = fit_mixture(st, one_hot(assign, K), ds.S, ds.A, K);
  for (int round = 0; round < opt.refine_rounds; ++round) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best_c = assign[i];
      double best_v = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < K; ++c) {
        double v = log_w_safe(fit.w[c]) + traj_loglik(st[i], fit.logP[c], fit.logpi[c], ds.S);
        if (v > best_v) {
          best_v = v;
          best_c = c;
        }
      }
      if (best_c != assign[i]) {
        assign[i] = best_c;
        changed = true;
      }
    }
    if (!changed) break;
    fit = fit_mixture(st, one_hot(assign, K), ds.S, ds.A, K);
  }

  Clustering out;
  out.assign = std::move(assign);
  out.K = K;
  out.weights = fit.w;
  out.objective = mixture_objective(st, fit, ds.S, K, nullptr);
  return out;
}

Clustering cluster_soft_em(const Dataset& ds, const ClusterOptions& opt) {
  int n = static_cast<int>(ds.trajs.size());
  if (opt.K < 1) throw ConfigError("cluster: K must be >= 1");
  if (n < opt.K) throw ConfigError("cluster: fewer trajectories than clusters");
  const int K = opt.K;
  std::vector<TrajStats> st = trajectory_stats(ds);

  Mat resp(n, Vec(K, 0.0));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(opt.seed ^ 0xC105E7E0ULL, i);
    double tot = 0.0;
    for (int c = 0; c < K; ++c) {
      resp[i][c] = 0.1 + rng.uniform();
      tot += resp[i][c];
    }
    for (int c = 0; c < K; ++c) resp[i][c] /= tot;
  }

  Clustering out;
  out.K = K;
  double prev = -std::numeric_limits<double>::infinity();
  MixFit fit;
  for (int it = 0; it < opt.em_iters; ++it) {
    fit = fit_mixture(st, resp, ds.S, ds.A, K);
    double obj = mixture_objective(st, fit, ds.S, K, &resp);
    out.trace.push_back(obj);
    if (it > 0 && obj - prev < 1e-10) break;
    prev = obj;
  }

  out.assign.resize(n);
  for (int i = 0; i < n; ++i)
    out.assign[i] =
        static_cast<int>(std::max_element(resp[i].begin(), resp[i].end()) - resp[i].begin());
  out.weights = fit.w;
  out.objective = out.trace.back();
  return out;
}

// ---- Label metrics --------------------------------------------------------

namespace {
std::vector<int> best_permutation(const std::vector<int>& assign, const std::vector<int>& truth,
                                  int K, double* best_acc) {
  if (assign.size() != truth.size() || assign.empty())
    throw ConfigError("label metrics: size mismatch or empty input");
  int T = *std::max_element(truth.begin(), truth.end()) + 1;
  if (K > 5 || T > 5) throw ConfigError("label metrics: supports at most 5 labels");
  int m = std::max(K, T);
  std::vector<int> perm(m), best;
  std::iota(perm.begin(), perm.end(), 0);
  *best_acc = -1.0;
  do {
    int hits = 0;
    for (size_t i = 0; i < assign.size(); ++i)
      if (perm[assign[i]] == truth[i]) ++hits;
    double acc = static_cast<double>(hits) / assign.size();
    if (acc > *best_acc) {
      *best_acc = acc;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}
}  // namespace

double permutation_accuracy(const std::vector<int>& assign, const std::vector<int>& truth, int K) {
  double acc = 0.0;
  best_permutation(assign, truth, K, &acc);
  return acc;
}

double weight_error(const std::vector<int>& assign, const std::vector<int>& truth, int K) {
  double acc = 0.0;
  std::vector<int> perm = best_permutation(assign, truth, K, &acc);
  int m = static_cast<int>(perm.size());
  Vec share(m, 0.0), tshare(m, 0.0);
  for (int c : assign) share[c] += 1.0 / assign.size();
  for (int l : truth) tshare[l] += 1.0 / truth.size();
  double err = 0.0;
  for (int c = 0; c < K; ++c) err = std::max(err, std::abs(share[c] - tshare[perm[c]]));
  return err;
}

// ---- Per-cluster plugin evaluation ---------------------------------------

ClusterOpeReport clustering_ope(const Dataset& ds, const Policy& pi_e, const ClusterOptions& opt,
                                bool use_em, int s0) {
  ClusterOpeReport rep;
  rep.clustering = use_em ? cluster_soft_em(ds, opt) : cluster_single_linkage(ds, opt);
  const int K = rep.clustering.K;
  rep.v_c.assign(K, 0.0);
  rep.w_c.assign(K, 0.0);
  rep.sizes.assign(K, 0);

  for (int c = 0; c < K; ++c) {
    Dataset sub;
    sub.S = ds.S;
    sub.A = ds.A;
    sub.H = ds.H;
    sub.env_id = ds.env_id;
    sub.seed = ds.seed;
    for (size_t i = 0; i < ds.trajs.size(); ++i)
      if (rep.clustering.assign[i] == c) sub.trajs.push_back(ds.trajs[i]);
    rep.sizes[c] = static_cast<int>(sub.trajs.size());
    rep.w_c[c] = static_cast<double>(sub.trajs.size()) / ds.trajs.size();
    if (sub.trajs.empty()) continue;

    Model m = empirical_model(sub, /*pooled=*/true);
    check_coverage(m, pi_e, s0);
    ValueReport vr = fqe(m, pi_e, s0);
    if (s0 >= 0) {
      rep.v_c[c] = vr.v1[s0];
    } else {
      // Weight initial states by the cluster's own empirical start law.
      Vec d0(ds.S, 0.0);
      for (const Trajectory& tr : sub.trajs) d0[tr.s[0]] += 1.0 / sub.trajs.size();
      for (int s = 0; s < ds.S; ++s) rep.v_c[c] += d0[s] * vr.v1[s];
    }
    rep.v_hat += rep.w_c[c] * rep.v_c[c];
  }
  return rep;
}

}  // namespace confope
