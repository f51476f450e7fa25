#include "confope/policy_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "confope/ope.hpp"

namespace confope {

namespace {

double mat_norm(const Mat& g) {
  double s = 0.0;
  for (const Vec& row : g)
    for (double x : row) s += x * x;
  return std::sqrt(s);
}

void axpy(Mat* y, double a, const Mat& x) {
  for (size_t i = 0; i < y->size(); ++i)
    for (size_t j = 0; j < (*y)[i].size(); ++j) (*y)[i][j] += a * x[i][j];
}

void check_theta(const Mat& theta, int S, int A, const char* who) {
  if (static_cast<int>(theta.size()) != S) throw ConfigError(std::string(who) + ": theta has wrong row count");
  for (const Vec& row : theta)
    if (static_cast<int>(row.size()) != A) throw ConfigError(std::string(who) + ": theta has wrong column count");
}

// Empirical start-state law of a trajectory set.
Vec start_law(const Dataset& ds, int S) {
  Vec d(S, 0.0);
  size_t n = 0;
  for (const Trajectory& tr : ds.trajs) {
    if (tr.s.empty()) continue;
    d[tr.s[0]] += 1.0;
    ++n;
  }
  if (n == 0) throw ConfigError("start_law: no nonempty trajectories");
  for (double& x : d) x /= static_cast<double>(n);
  return d;
}

// Plug-in value of pi on a pooled model, start-law weighted.
double plugin_value(const Model& m, const Policy& pi, const Vec& d0) {
  double v = 0.0;
  for (int s = 0; s < m.S; ++s)
    if (d0[s] > 0.0) v += d0[s] * mb_value(m.P[0], m.r[0], pi, m.S, m.A, m.H, s);
  return v;
}

}  // namespace

Mat softmax_grad(const Mat& theta, const Mat& dpi) {
  if (theta.size() != dpi.size()) throw ConfigError("softmax_grad: shape mismatch");
  Mat out(theta.size());
  for (size_t s = 0; s < theta.size(); ++s) {
    const Vec& th = theta[s];
    const Vec& g = dpi[s];
    if (th.size() != g.size()) throw ConfigError("softmax_grad: shape mismatch");
    size_t A = th.size();
    Vec pi(A);
    double mx = *std::max_element(th.begin(), th.end());
    double z = 0.0;
    for (size_t a = 0; a < A; ++a) z += (pi[a] = std::exp(th[a] - mx));
    for (size_t a = 0; a < A; ++a) pi[a] /= z;
    double dot = 0.0;
    for (size_t a = 0; a < A; ++a) dot += pi[a] * g[a];
    out[s].resize(A);
    for (size_t a = 0; a < A; ++a) out[s][a] = pi[a] * (g[a] - dot);
  }
  return out;
}

// ---- Max-min ascent ------------------------------------------------------

MaxminResult maxmin_improve(const Model& m, double gamma, const Mat& theta0, int s0,
                            const MaxminOptions& opt) {
  if (!m.pooled) throw ConfigError("maxmin_improve: expects a pooled model");
  if (s0 < 0 || s0 >= m.S) throw ConfigError("maxmin_improve: start state out of range");
  check_theta(theta0, m.S, m.A, "maxmin_improve");
  Uncertainty tu = build_uncertainty(m, gamma);
  check_feasible(tu);

  MaxminResult res;
  res.theta = theta0;
  Vec warm;  // previous round's minimizer
  for (int t = 1; t <= opt.outer_iters + 1; ++t) {
    Policy pi = Policy::softmax(res.theta);
    PgdOptions po;
    po.iters = opt.inner_iters;
    po.eta0 = opt.inner_eta0;
    po.restarts = opt.inner_restarts;
    po.seed = opt.seed + static_cast<std::uint64_t>(t);
    if (!warm.empty()) po.init = &warm;
    PgdResult inner = mb_pgd(m, pi, tu, s0, po);
    warm = inner.P_best;

    PolicyEval pe = value_policy_grad(inner.P_best, m.r[0], pi, m.S, m.A, m.H, s0);
    bool last = t == opt.outer_iters + 1;
    double eta = last ? 0.0 : opt.eta0 / std::sqrt(static_cast<double>(t));
    res.trace.thetas.push_back(res.theta);
    res.trace.objective.push_back(inner.v_min);
    res.trace.grad_norm.push_back(mat_norm(pe.dtheta));
    res.trace.lr.push_back(eta);
    if (last) {
      res.lower_bound = inner.v_min;
      res.pi = pi;
      break;
    }
    axpy(&res.theta, eta, pe.dtheta);
  }
  return res;
}

// ---- Cluster policy gradient ---------------------------------------------

Mat per_cluster_pg(const Dataset& cluster_ds, const Model& cluster_model, const Mat& theta,
                   GradEstimator est, int s0) {
  const int S = cluster_model.S, A = cluster_model.A;
  check_theta(theta, S, A, "per_cluster_pg");
  Policy pi = Policy::softmax(theta);

  if (est == GradEstimator::Approximate) {
    if (!cluster_model.pooled) throw ConfigError("per_cluster_pg: expects a pooled model");
    Vec d0;
    if (s0 >= 0) {
      if (s0 >= S) throw ConfigError("per_cluster_pg: start state out of range");
      d0.assign(S, 0.0);
      d0[s0] = 1.0;
    } else {
      d0 = start_law(cluster_ds, S);
    }
    Mat z(S, Vec(A, 0.0));
    for (int s = 0; s < S; ++s) {
      if (d0[s] <= 0.0) continue;
      PolicyEval pe =
          value_policy_grad(cluster_model.P[0], cluster_model.r[0], pi, S, A, cluster_model.H, s);
      axpy(&z, d0[s], pe.dtheta);
    }
    return z;
  }

  // Per-decision importance-sampled REINFORCE. For each trajectory keep the
  // running weight W_h = prod_{k<=h} pi_theta/pi_b and the running score
  // G_h = sum_{k<=h} dlog pi(a_k|s_k); the contribution is sum_h W_h r_h G_h.
  size_t n = 0;
  for (const Trajectory& tr : cluster_ds.trajs)
    if (!tr.s.empty()) ++n;
  if (n == 0) throw ConfigError("per_cluster_pg: no nonempty trajectories");
  Mat z(S, Vec(A, 0.0));
  Mat score(S, Vec(A, 0.0));
  for (const Trajectory& tr : cluster_ds.trajs) {
    if (tr.s.empty()) continue;
    for (Vec& row : score) std::fill(row.begin(), row.end(), 0.0);
    double W = 1.0;
    for (size_t h = 0; h < tr.s.size(); ++h) {
      int s = tr.s[h], a = tr.a[h];
      double pb = cluster_model.pi_t(static_cast<int>(h))[static_cast<size_t>(s) * A + a];
      if (pb <= 0.0)
        throw ConfigError("per_cluster_pg: behavior estimate is zero at a taken action");
      double pe = pi.p(static_cast<int>(h), s, 0, a);
      W *= pe / pb;
      for (int b = 0; b < A; ++b) score[s][b] += ((b == a) ? 1.0 : 0.0) - pi.p(0, s, 0, b);
      double coef = W * tr.r[h] / static_cast<double>(n);
      if (coef != 0.0) axpy(&z, coef, score);
    }
  }
  return z;
}

ClusterPgResult cluster_policy_gradient(const Dataset& ds, const Mat& theta0,
                                        const ClusterPgOptions& opt) {
  const size_t n = ds.trajs.size();
  if (n == 0) throw ConfigError("cluster_policy_gradient: empty dataset");
  check_theta(theta0, ds.S, ds.A, "cluster_policy_gradient");

  ClusterPgResult res;
  if (opt.force_single || opt.cluster.K <= 1) {
    res.clustering.K = 1;
    res.clustering.assign.assign(n, 0);
    res.clustering.weights = {1.0};
  } else {
    res.clustering = cluster_single_linkage(ds, opt.cluster);
  }

  // Split the data, dropping empty clusters from the mixture.
  std::vector<Dataset> part;
  std::vector<Model> mods;
  {
    std::vector<Dataset> raw(res.clustering.K);
    for (auto& d : raw) {
      d.S = ds.S;
      d.A = ds.A;
      d.H = ds.H;
      d.env_id = ds.env_id;
      d.seed = ds.seed;
    }
    for (size_t i = 0; i < n; ++i) raw[res.clustering.assign[i]].trajs.push_back(ds.trajs[i]);
    for (auto& d : raw) {
      if (d.trajs.empty()) continue;
      res.weights.push_back(static_cast<double>(d.trajs.size()) / static_cast<double>(n));
      mods.push_back(empirical_model(d, /*pooled=*/true));
      part.push_back(std::move(d));
    }
  }

  auto objective = [&](const Policy& pi) {
    if (opt.truth) {
      if (opt.s0 >= 0 && opt.truth->proc.kind == ConfounderProcess::Kind::Global) {
        double v = 0.0;
        for (int u = 0; u < opt.truth->U; ++u)
          v += opt.truth->proc.p_u[u] * exact_value_given_u(*opt.truth, pi, opt.s0, u);
        return v;
      }
      return exact_value(*opt.truth, pi).v;
    }
    double v = 0.0;
    for (size_t c = 0; c < part.size(); ++c) {
      Vec d0;
      if (opt.s0 >= 0) {
        d0.assign(ds.S, 0.0);
        d0[opt.s0] = 1.0;
      } else {
        d0 = start_law(part[c], ds.S);
      }
      v += res.weights[c] * plugin_value(mods[c], pi, d0);
    }
    return v;
  };

  res.theta = theta0;
  for (int t = 0; t <= opt.iters; ++t) {
    Policy pi = Policy::softmax(res.theta);
    Mat z(ds.S, Vec(ds.A, 0.0));
    for (size_t c = 0; c < part.size(); ++c) {
      Mat zc = per_cluster_pg(part[c], mods[c], res.theta, opt.estimator, opt.s0);
      axpy(&z, res.weights[c], zc);
    }
    bool last = t == opt.iters;
    res.trace.thetas.push_back(res.theta);
    res.trace.objective.push_back(objective(pi));
    res.trace.grad_norm.push_back(mat_norm(z));
    res.trace.lr.push_back(last ? 0.0 : opt.eta);
    if (!last) axpy(&res.theta, opt.eta, z);
  }
  return res;
}

// ---- Suboptimality harness -----------------------------------------------

SuboptReport suboptimality_check(const Vec& v_true, const Vec& v_hat) {
  if (v_true.empty() || v_true.size() != v_hat.size())
    throw ConfigError("suboptimality_check: candidate sets mismatch");
  SuboptReport rep;
  rep.argmax_true = static_cast<int>(std::max_element(v_true.begin(), v_true.end()) - v_true.begin());
  rep.argmax_hat = static_cast<int>(std::max_element(v_hat.begin(), v_hat.end()) - v_hat.begin());
  rep.gap = v_true[rep.argmax_true] - v_true[rep.argmax_hat];
  for (size_t i = 0; i < v_true.size(); ++i)
    rep.bound = std::max(rep.bound, 2.0 * std::abs(v_hat[i] - v_true[i]));
  rep.ok = rep.gap >= 0.0 && rep.gap <= rep.bound + 1e-12;
  return rep;
}

}  // namespace confope
