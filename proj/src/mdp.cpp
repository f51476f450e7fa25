// Core confounded-MDP types: exact evaluation, marginalization, occupancies,
// chain diagnostics, and JSON (de)serialization.

#include "confope/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace confope {

using nlohmann::json;

static void check_dist(const Vec& p, const std::string& what, double tol = 1e-9) {
  double s = 0.0;
  for (double x : p) {
    if (x < -1e-12 || !std::isfinite(x)) throw ConfigError(what + ": entry out of range");
    s += x;
  }
  if (std::fabs(s - 1.0) > tol) throw ConfigError(what + ": row does not sum to 1");
}

// ---- Policy --------------------------------------------------------------

Policy Policy::observed(int S, int A, std::vector<Vec> tables) {
  Policy pi;
  pi.kind = Kind::Observed;
  pi.S = S;
  pi.U = 0;
  pi.A = A;
  pi.tab = std::move(tables);
  pi.validate();
  return pi;
}

Policy Policy::observed_uniform(int S, int A) {
  return observed(S, A, {Vec(static_cast<size_t>(S) * A, 1.0 / A)});
}

Policy Policy::confounded(int S, int U, int A, std::vector<Vec> tables) {
  Policy pi;
  pi.kind = Kind::Confounded;
  pi.S = S;
  pi.U = U;
  pi.A = A;
  pi.tab = std::move(tables);
  pi.validate();
  return pi;
}

Policy Policy::softmax(const Mat& theta) {
  Policy pi;
  pi.kind = Kind::Softmax;
  pi.S = static_cast<int>(theta.size());
  pi.U = 0;
  pi.A = theta.empty() ? 0 : static_cast<int>(theta[0].size());
  pi.theta = theta;
  Vec t(static_cast<size_t>(pi.S) * pi.A);
  for (int s = 0; s < pi.S; ++s) {
    double m = theta[s][0];
    for (double v : theta[s]) m = std::max(m, v);
    double z = 0.0;
    for (int a = 0; a < pi.A; ++a) z += std::exp(theta[s][a] - m);
    for (int a = 0; a < pi.A; ++a) t[static_cast<size_t>(s) * pi.A + a] = std::exp(theta[s][a] - m) / z;
  }
  pi.tab = {std::move(t)};
  return pi;
}

void Policy::validate() const {
  if (tab.empty()) throw ConfigError("policy: no tables");
  size_t rows = kind == Kind::Confounded ? static_cast<size_t>(S) * U : static_cast<size_t>(S);
  for (const Vec& T : tab) {
    if (T.size() != rows * A) throw ConfigError("policy: table size mismatch");
    for (size_t rstart = 0; rstart < T.size(); rstart += A)
      check_dist(Vec(T.begin() + rstart, T.begin() + rstart + A), "policy row");
  }
}

// ---- ConfoundedMdp -------------------------------------------------------

Vec ConfoundedMdp::initial_u(int s) const {
  switch (proc.kind) {
    case ConfounderProcess::Kind::Memoryless:
      return proc.p_u_s[0][s];
    case ConfounderProcess::Kind::Global:
      return proc.p_u;
    case ConfounderProcess::Kind::HistoryDeterministic: {
      Vec p(U, 0.0);
      p[proc.u0] = 1.0;
      return p;
    }
  }
  throw ConfigError("initial_u: bad process kind");
}

void ConfoundedMdp::validate() const {
  if (S <= 0 || U <= 0 || A <= 0 || H <= 0) throw ConfigError("mdp: non-positive dimensions");
  size_t want = stationary ? 1 : static_cast<size_t>(H);
  if (kernel.size() != want) throw ConfigError("mdp: kernel step count mismatch");
  for (const Vec& K : kernel) {
    if (K.size() != static_cast<size_t>(S) * U * A * S) throw ConfigError("mdp: kernel size mismatch");
    for (size_t r = 0; r < K.size(); r += S)
      check_dist(Vec(K.begin() + r, K.begin() + r + S), "kernel row");
  }
  if (reward.size() != static_cast<size_t>(S)) throw ConfigError("mdp: reward rows");
  for (const Vec& r : reward)
    if (r.size() != static_cast<size_t>(A)) throw ConfigError("mdp: reward cols");
  if (d0.size() != static_cast<size_t>(S)) throw ConfigError("mdp: d0 size");
  check_dist(d0, "d0");
  switch (proc.kind) {
    case ConfounderProcess::Kind::Memoryless: {
      if (proc.p_u_s.empty()) throw ConfigError("mdp: memoryless process missing tables");
      for (const Mat& M : proc.p_u_s) {
        if (M.size() != static_cast<size_t>(S)) throw ConfigError("mdp: p_u_s rows");
        for (const Vec& p : M) {
          if (p.size() != static_cast<size_t>(U)) throw ConfigError("mdp: p_u_s cols");
          check_dist(p, "p(u|s)");
        }
      }
      break;
    }
    case ConfounderProcess::Kind::Global:
      if (proc.p_u.size() != static_cast<size_t>(U)) throw ConfigError("mdp: p_u size");
      check_dist(proc.p_u, "p(u)");
      break;
    case ConfounderProcess::Kind::HistoryDeterministic: {
      if (proc.u0 < 0 || proc.u0 >= U) throw ConfigError("mdp: u0 out of range");
      if (proc.next_u.size() != static_cast<size_t>(U)) throw ConfigError("mdp: next_u rows");
      for (const auto& row : proc.next_u) {
        if (row.size() != static_cast<size_t>(A)) throw ConfigError("mdp: next_u cols");
        for (int v : row)
          if (v < 0 || v >= U) throw ConfigError("mdp: next_u entry out of range");
      }
      break;
    }
  }
}

// ---- Exact evaluation ----------------------------------------------------

// Law of u at the next step, as a weight on (s2, u2) continuations. Returns
// the contribution sum_{u2} P(u2 | ...) * Wnext[s2][u2].
static double continue_value(const ConfoundedMdp& mdp, int h, int s2, int u, int a, const Mat& Wnext) {
  switch (mdp.proc.kind) {
    case ConfounderProcess::Kind::Memoryless: {
      const Mat& tab = mdp.proc.p_u_s[mdp.proc.p_u_s.size() == 1 ? 0 : static_cast<size_t>(h + 1)];
      double acc = 0.0;
      for (int u2 = 0; u2 < mdp.U; ++u2) acc += tab[s2][u2] * Wnext[s2][u2];
      return acc;
    }
    case ConfounderProcess::Kind::Global:
      return Wnext[s2][u];
    case ConfounderProcess::Kind::HistoryDeterministic:
      return Wnext[s2][mdp.proc.next_u[u][a]];
  }
  throw ConfigError("continue_value: bad process kind");
}

ExactValue exact_value(const ConfoundedMdp& mdp, const Policy& pi) {
  ExactValue out;
  out.w.assign(mdp.H, Mat(mdp.S, Vec(mdp.U, 0.0)));
  Mat Wnext(mdp.S, Vec(mdp.U, 0.0));
  for (int h = mdp.H - 1; h >= 0; --h) {
    Mat& W = out.w[h];
    for (int s = 0; s < mdp.S; ++s) {
      for (int u = 0; u < mdp.U; ++u) {
        double acc = 0.0;
        for (int a = 0; a < mdp.A; ++a) {
          double pa = pi.p(h, s, u, a);
          if (pa == 0.0) continue;
          double q = mdp.reward[s][a];
          if (h + 1 < mdp.H) {
            const double* row = mdp.row(h, s, u, a);
            for (int s2 = 0; s2 < mdp.S; ++s2) {
              if (row[s2] == 0.0) continue;
              q += row[s2] * continue_value(mdp, h, s2, u, a, Wnext);
            }
          }
          acc += pa * q;
        }
        W[s][u] = acc;
      }
    }
    Wnext = W;
  }
  out.v1.assign(mdp.S, 0.0);
  for (int s = 0; s < mdp.S; ++s) {
    Vec pu = mdp.initial_u(s);
    for (int u = 0; u < mdp.U; ++u) out.v1[s] += pu[u] * out.w[0][s][u];
    out.v += mdp.d0[s] * out.v1[s];
  }
  return out;
}

double exact_value_given_u(const ConfoundedMdp& mdp, const Policy& pi, int s, int u) {
  if (mdp.proc.kind != ConfounderProcess::Kind::Global)
    throw ConfigError("exact_value_given_u: requires a global confounder");
  Vec Wnext(mdp.S, 0.0), W(mdp.S, 0.0);
  for (int h = mdp.H - 1; h >= 0; --h) {
    for (int x = 0; x < mdp.S; ++x) {
      double acc = 0.0;
      for (int a = 0; a < mdp.A; ++a) {
        double pa = pi.p(h, x, u, a);
        if (pa == 0.0) continue;
        double q = mdp.reward[x][a];
        if (h + 1 < mdp.H) {
          const double* row = mdp.row(h, x, u, a);
          for (int s2 = 0; s2 < mdp.S; ++s2) q += row[s2] * Wnext[s2];
        }
        acc += pa * q;
      }
      W[x] = acc;
    }
    Wnext = W;
  }
  return Wnext[s];
}

// ---- Occupancies ---------------------------------------------------------

Occupancy occupancy(const ConfoundedMdp& mdp, const Policy& pi) {
  Occupancy out;
  out.mu.assign(mdp.H, Mat(mdp.S, Vec(mdp.U, 0.0)));
  out.d_s.assign(mdp.H, Vec(mdp.S, 0.0));
  out.d_sa.assign(mdp.H, Vec(static_cast<size_t>(mdp.S) * mdp.A, 0.0));
  for (int s = 0; s < mdp.S; ++s) {
    if (mdp.d0[s] == 0.0) continue;
    Vec pu = mdp.initial_u(s);
    for (int u = 0; u < mdp.U; ++u) out.mu[0][s][u] = mdp.d0[s] * pu[u];
  }
  for (int h = 0; h < mdp.H; ++h) {
    Mat& mu = out.mu[h];
    for (int s = 0; s < mdp.S; ++s) {
      for (int u = 0; u < mdp.U; ++u) {
        double m = mu[s][u];
        if (m == 0.0) continue;
        out.d_s[h][s] += m;
        for (int a = 0; a < mdp.A; ++a) {
          double w = m * pi.p(h, s, u, a);
          if (w == 0.0) continue;
          out.d_sa[h][static_cast<size_t>(s) * mdp.A + a] += w;
          if (h + 1 == mdp.H) continue;
          const double* row = mdp.row(h, s, u, a);
          for (int s2 = 0; s2 < mdp.S; ++s2) {
            double f = w * row[s2];
            if (f == 0.0) continue;
            switch (mdp.proc.kind) {
              case ConfounderProcess::Kind::Memoryless: {
                const Mat& tab =
                    mdp.proc.p_u_s[mdp.proc.p_u_s.size() == 1 ? 0 : static_cast<size_t>(h + 1)];
                for (int u2 = 0; u2 < mdp.U; ++u2) out.mu[h + 1][s2][u2] += f * tab[s2][u2];
                break;
              }
              case ConfounderProcess::Kind::Global:
                out.mu[h + 1][s2][u] += f;
                break;
              case ConfounderProcess::Kind::HistoryDeterministic:
                out.mu[h + 1][s2][mdp.proc.next_u[u][a]] += f;
                break;
            }
          }
        }
      }
    }
  }
  return out;
}

// ---- Marginalization -----------------------------------------------------

std::vector<Mat> behavior_state_posterior(const ConfoundedMdp& mdp, const Policy& pi_b) {
  Occupancy occ = occupancy(mdp, pi_b);
  std::vector<Mat> post(mdp.H, Mat(mdp.S, Vec(mdp.U, 0.0)));
  for (int h = 0; h < mdp.H; ++h) {
    // Confounder values carrying mass anywhere at this step; unvisited states
    // fall back to a uniform posterior over these.
    Vec reach(mdp.U, 0.0);
    double reach_total = 0.0;
    for (int s = 0; s < mdp.S; ++s)
      for (int u = 0; u < mdp.U; ++u) reach[u] += occ.mu[h][s][u];
    int n_reach = 0;
    for (int u = 0; u < mdp.U; ++u) {
      reach_total += reach[u];
      if (reach[u] > 0.0) ++n_reach;
    }
    for (int s = 0; s < mdp.S; ++s) {
      double tot = 0.0;
      for (int u = 0; u < mdp.U; ++u) tot += occ.mu[h][s][u];
      if (tot > 0.0) {
        for (int u = 0; u < mdp.U; ++u) post[h][s][u] = occ.mu[h][s][u] / tot;
      } else if (n_reach > 0) {
        for (int u = 0; u < mdp.U; ++u) post[h][s][u] = reach[u] > 0.0 ? 1.0 / n_reach : 0.0;
      } else {
        for (int u = 0; u < mdp.U; ++u) post[h][s][u] = 1.0 / mdp.U;
      }
    }
  }
  return post;
}

Policy marginalize_policy(const ConfoundedMdp& mdp, const Policy& pi_b) {
  std::vector<Mat> post = behavior_state_posterior(mdp, pi_b);
  std::vector<Vec> tabs(mdp.H, Vec(static_cast<size_t>(mdp.S) * mdp.A, 0.0));
  for (int h = 0; h < mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double p = 0.0;
        for (int u = 0; u < mdp.U; ++u) p += post[h][s][u] * pi_b.p(h, s, u, a);
        tabs[h][static_cast<size_t>(s) * mdp.A + a] = p;
      }
  return Policy::observed(mdp.S, mdp.A, std::move(tabs));
}

std::vector<Vec> marginal_kernel(const ConfoundedMdp& mdp, const Policy& pi_b) {
  std::vector<Mat> post = behavior_state_posterior(mdp, pi_b);
  std::vector<Vec> out(mdp.H, Vec(static_cast<size_t>(mdp.S) * mdp.A * mdp.S, 0.0));
  for (int h = 0; h < mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double* dst = out[h].data() + (static_cast<size_t>(s) * mdp.A + a) * mdp.S;
        for (int u = 0; u < mdp.U; ++u) {
          double w = post[h][s][u];
          if (w == 0.0) continue;
          const double* row = mdp.row(h, s, u, a);
          for (int s2 = 0; s2 < mdp.S; ++s2) dst[s2] += w * row[s2];
        }
      }
  return out;
}

std::vector<Vec> behavior_kernel(const ConfoundedMdp& mdp, const Policy& pi_b) {
  Occupancy occ = occupancy(mdp, pi_b);
  std::vector<Vec> out(mdp.H, Vec(static_cast<size_t>(mdp.S) * mdp.A * mdp.S, 0.0));
  for (int h = 0; h < mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double denom = 0.0;
        for (int u = 0; u < mdp.U; ++u) denom += occ.mu[h][s][u] * pi_b.p(h, s, u, a);
        if (denom == 0.0) continue;  // cell never produced by pi_b: left as zeros
        double* dst = out[h].data() + (static_cast<size_t>(s) * mdp.A + a) * mdp.S;
        for (int u = 0; u < mdp.U; ++u) {
          double w = occ.mu[h][s][u] * pi_b.p(h, s, u, a) / denom;
          if (w == 0.0) continue;
          const double* row = mdp.row(h, s, u, a);
          for (int s2 = 0; s2 < mdp.S; ++s2) dst[s2] += w * row[s2];
        }
      }
  return out;
}

// ---- Concentrability -----------------------------------------------------

Concentrability concentrability(const ConfoundedMdp& mdp, const Policy& pi_b, const Policy& pi_e) {
  if (pi_e.confounded()) throw ConfigError("concentrability: pi_e must be observed");
  Occupancy ob = occupancy(mdp, pi_b);
  Occupancy oe = occupancy(mdp, pi_e);
  Policy marg = marginalize_policy(mdp, pi_b);
  Concentrability out;
  auto ratio = [](double num, double den) {
    if (num <= 0.0) return 0.0;
    if (den <= 0.0) return std::numeric_limits<double>::infinity();
    return num / den;
  };
  for (int h = 0; h < mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s) {
      out.tau_s = std::max(out.tau_s, ratio(oe.d_s[h][s], ob.d_s[h][s]));
      for (int a = 0; a < mdp.A; ++a) {
        size_t i = static_cast<size_t>(s) * mdp.A + a;
        out.d_m = std::max(out.d_m, ratio(oe.d_sa[h][i], ob.d_sa[h][i]));
        if (oe.d_s[h][s] > 0.0)
          out.tau_a = std::max(out.tau_a, ratio(pi_e.p(h, s, 0, a), marg.p(h, s, 0, a)));
      }
    }
  return out;
}

// ---- Mixing --------------------------------------------------------------

static void check_strongly_connected_and_aperiodic(const std::vector<Vec>& T, MixingReport* rep) {
  int n = static_cast<int>(T.size());
  std::vector<std::vector<int>> fwd(n), bwd(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (T[i][j] > 0.0) {
        fwd[i].push_back(j);
        bwd[j].push_back(i);
      }
  auto reach = [n](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int y : adj[x])
        if (!seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
    }
    return seen;
  };
  std::vector<char> f = reach(fwd), b = reach(bwd);
  for (int i = 0; i < n; ++i)
    if (!f[i] || !b[i]) {
      rep->irreducible = false;
      rep->aperiodic = false;
      return;
    }
  // Period = gcd over edges of (depth[u] + 1 - depth[v]) in a BFS from node 0.
  std::vector<int> depth(n, -1);
  depth[0] = 0;
  std::vector<int> order{0};
  for (size_t q = 0; q < order.size(); ++q) {
    int x = order[q];
    for (int y : fwd[x])
      if (depth[y] < 0) {
        depth[y] = depth[x] + 1;
        order.push_back(y);
      }
  }
  long long g = 0;
  for (int i = 0; i < n; ++i)
    for (int j : fwd[i]) g = std::gcd(g, static_cast<long long>(depth[i] + 1 - depth[j]));
  rep->aperiodic = (g == 1);
}

MixingReport mixing_time(const ConfoundedMdp& mdp, const Policy& pi_b, int u, int cap) {
  if (!mdp.stationary) throw ConfigError("mixing_time: requires a stationary kernel");
  int n = mdp.S * mdp.A;
  std::vector<Vec> T(n, Vec(n, 0.0));
  for (int s = 0; s < mdp.S; ++s)
    for (int a = 0; a < mdp.A; ++a) {
      const double* row = mdp.row(0, s, u, a);
      Vec& dst = T[static_cast<size_t>(s) * mdp.A + a];
      for (int s2 = 0; s2 < mdp.S; ++s2) {
        if (row[s2] == 0.0) continue;
        for (int a2 = 0; a2 < mdp.A; ++a2)
          dst[static_cast<size_t>(s2) * mdp.A + a2] += row[s2] * pi_b.p(0, s2, u, a2);
      }
    }
  MixingReport rep;
  check_strongly_connected_and_aperiodic(T, &rep);
  // Stationary distribution by averaged power iteration (the running average
  // also converges for periodic irreducible chains).
  Vec v(n, 1.0 / n), avg(n, 0.0);
  Vec nxt(n, 0.0);
  int stat_iters = std::min(cap, 100000);
  for (int t = 1; t <= stat_iters; ++t) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      if (v[i] == 0.0) continue;
      const Vec& row = T[i];
      for (int j = 0; j < n; ++j) nxt[j] += v[i] * row[j];
    }
    double delta = 0.0;
    for (int j = 0; j < n; ++j) delta += std::fabs(nxt[j] - v[j]);
    for (int j = 0; j < n; ++j) avg[j] += (nxt[j] - avg[j]) / t;
    v = nxt;
    if (delta < 1e-13) break;
  }
  double drift = 0.0;
  {
    Vec chk(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) chk[j] += v[i] * T[i][j];
    for (int j = 0; j < n; ++j) drift += std::fabs(chk[j] - v[j]);
  }
  const Vec& pi_stat = drift < 1e-9 ? v : avg;
  // Iterate P^t rows for all starts; stop at max-TV <= 1/4.
  std::vector<Vec> Pt(n, Vec(n, 0.0));
  for (int i = 0; i < n; ++i) Pt[i][i] = 1.0;
  std::vector<Vec> scratch(n, Vec(n, 0.0));
  for (int t = 1; t <= cap; ++t) {
    for (int i = 0; i < n; ++i) {
      Vec& dst = scratch[i];
      std::fill(dst.begin(), dst.end(), 0.0);
      const Vec& src = Pt[i];
      for (int k = 0; k < n; ++k) {
        double w = src[k];
        if (w == 0.0) continue;
        const Vec& row = T[k];
        for (int j = 0; j < n; ++j) dst[j] += w * row[j];
      }
    }
    Pt.swap(scratch);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double tv = 0.0;
      for (int j = 0; j < n; ++j) tv += std::fabs(Pt[i][j] - pi_stat[j]);
      worst = std::max(worst, 0.5 * tv);
    }
    if (worst <= 0.25) {
      rep.t_mix = t;
      rep.converged = true;
      return rep;
    }
  }
  rep.t_mix = cap;
  rep.converged = false;
  return rep;
}

MixingReport mixing_time_overall(const ConfoundedMdp& mdp, const Policy& pi_b, int cap) {
  MixingReport best;
  for (int u = 0; u < mdp.U; ++u) {
    MixingReport r = mixing_time(mdp, pi_b, u, cap);
    if (u == 0) {
      best = r;
    } else {
      best.t_mix = std::max(best.t_mix, r.t_mix);
      best.converged = best.converged && r.converged;
      best.irreducible = best.irreducible && r.irreducible;
      best.aperiodic = best.aperiodic && r.aperiodic;
    }
  }
  return best;
}

// ---- Trajectory-level laws ----------------------------------------------

double loglik_given_u(const ConfoundedMdp& mdp, const Policy& pi_b, const std::vector<int>& s,
                      const std::vector<int>& a, int u) {
  if (mdp.proc.kind != ConfounderProcess::Kind::Global)
    throw ConfigError("loglik_given_u: requires a global confounder");
  if (s.size() != a.size() || s.empty()) throw ConfigError("loglik_given_u: bad trajectory");
  double ll = std::log(mdp.d0[s[0]]);
  for (size_t h = 0; h < s.size(); ++h) {
    ll += std::log(pi_b.p(static_cast<int>(h), s[h], u, a[h]));
    if (h + 1 < s.size()) ll += std::log(mdp.row(static_cast<int>(h), s[h], u, a[h])[s[h + 1]]);
  }
  return ll;
}

namespace {
struct LawNode {
  int h, s, u;
  double p;
  std::string key;
};
}  // namespace

std::map<std::string, double> observed_law(const ConfoundedMdp& mdp, const Policy& pi_b,
                                           size_t max_leaves) {
  std::map<std::string, double> law;
  std::vector<LawNode> stack;
  size_t expansions = 0;
  for (int s = 0; s < mdp.S; ++s) {
    if (mdp.d0[s] == 0.0) continue;
    Vec pu = mdp.initial_u(s);
    for (int u = 0; u < mdp.U; ++u)
      if (pu[u] > 0.0) stack.push_back({0, s, u, mdp.d0[s] * pu[u], ""});
  }
  while (!stack.empty()) {
    LawNode nd = stack.back();
    stack.pop_back();
    if (++expansions > 50000000) throw ConfigError("observed_law: trajectory space too large");
    for (int a = 0; a < mdp.A; ++a) {
      double pa = pi_b.p(nd.h, nd.s, nd.u, a);
      if (pa == 0.0) continue;
      std::string key = nd.key + std::to_string(nd.s) + ":" + std::to_string(a) + ";";
      double p = nd.p * pa;
      if (nd.h + 1 == mdp.H) {
        law[key] += p;
        if (law.size() > max_leaves) throw ConfigError("observed_law: too many sequences");
        continue;
      }
      const double* row = mdp.row(nd.h, nd.s, nd.u, a);
      for (int s2 = 0; s2 < mdp.S; ++s2) {
        if (row[s2] == 0.0) continue;
        double p2 = p * row[s2];
        switch (mdp.proc.kind) {
          case ConfounderProcess::Kind::Memoryless: {
            const Mat& tab =
                mdp.proc.p_u_s[mdp.proc.p_u_s.size() == 1 ? 0 : static_cast<size_t>(nd.h + 1)];
            for (int u2 = 0; u2 < mdp.U; ++u2)
              if (tab[s2][u2] > 0.0) stack.push_back({nd.h + 1, s2, u2, p2 * tab[s2][u2], key});
            break;
          }
          case ConfounderProcess::Kind::Global:
            stack.push_back({nd.h + 1, s2, nd.u, p2, key});
            break;
          case ConfounderProcess::Kind::HistoryDeterministic:
            stack.push_back({nd.h + 1, s2, mdp.proc.next_u[nd.u][a], p2, key});
            break;
        }
      }
    }
  }
  return law;
}

// ---- Serialization -------------------------------------------------------

static json kernel_to_json(const ConfoundedMdp& m) {
  json steps = json::array();
  for (const Vec& K : m.kernel) {
    json Sarr = json::array();
    for (int s = 0; s < m.S; ++s) {
      json Uarr = json::array();
      for (int u = 0; u < m.U; ++u) {
        json Aarr = json::array();
        for (int a = 0; a < m.A; ++a) {
          const double* row = K.data() + (static_cast<size_t>((static_cast<size_t>(s) * m.U + u) * m.A + a)) * m.S;
          Aarr.push_back(Vec(row, row + m.S));
        }
        Uarr.push_back(Aarr);
      }
      Sarr.push_back(Uarr);
    }
    steps.push_back(Sarr);
  }
  return steps;
}

std::string mdp_to_json(const ConfoundedMdp& m) {
  json j;
  j["S"] = m.S;
  j["U"] = m.U;
  j["A"] = m.A;
  j["H"] = m.H;
  j["stationary"] = m.stationary;
  j["kernel"] = kernel_to_json(m);
  j["reward"] = m.reward;
  j["d0"] = m.d0;
  json p;
  switch (m.proc.kind) {
    case ConfounderProcess::Kind::Memoryless:
      p["type"] = "memoryless";
      p["p_u_s"] = m.proc.p_u_s;
      break;
    case ConfounderProcess::Kind::Global:
      p["type"] = "global";
      p["p_u"] = m.proc.p_u;
      break;
    case ConfounderProcess::Kind::HistoryDeterministic:
      p["type"] = "history_deterministic";
      p["u0"] = m.proc.u0;
      p["next_u"] = m.proc.next_u;
      break;
  }
  j["process"] = p;
  return j.dump(2);
}

ConfoundedMdp mdp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("mdp json: ") + e.what());
  }
  ConfoundedMdp m;
  try {
    m.S = j.at("S").get<int>();
    m.U = j.at("U").get<int>();
    m.A = j.at("A").get<int>();
    m.H = j.at("H").get<int>();
    m.stationary = j.at("stationary").get<bool>();
    for (const auto& step : j.at("kernel")) {
      Vec K;
      K.reserve(static_cast<size_t>(m.S) * m.U * m.A * m.S);
      for (const auto& su : step)
        for (const auto& uu : su)
          for (const auto& aa : uu)
            for (const auto& v : aa) K.push_back(v.get<double>());
      m.kernel.push_back(std::move(K));
    }
    m.reward = j.at("reward").get<Mat>();
    m.d0 = j.at("d0").get<Vec>();
    const json& p = j.at("process");
    std::string type = p.at("type").get<std::string>();
    if (type == "memoryless") {
      m.proc.kind = ConfounderProcess::Kind::Memoryless;
      m.proc.p_u_s = p.at("p_u_s").get<std::vector<Mat>>();
    } else if (type == "global") {
      m.proc.kind = ConfounderProcess::Kind::Global;
      m.proc.p_u = p.at("p_u").get<Vec>();
    } else if (type == "history_deterministic") {
      m.proc.kind = ConfounderProcess::Kind::HistoryDeterministic;
      m.proc.u0 = p.at("u0").get<int>();
      m.proc.next_u = p.at("next_u").get<std::vector<std::vector<int>>>();
    } else {
      throw ConfigError("mdp json: unknown process type " + type);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mdp json: ") + e.what());
  }
  m.validate();
  return m;
}

std::string policy_to_json(const Policy& pi) {
  json j;
  j["S"] = pi.S;
  j["U"] = pi.U;
  j["A"] = pi.A;
  switch (pi.kind) {
    case Policy::Kind::Observed:
      j["kind"] = "observed";
      j["tab"] = pi.tab;
      break;
    case Policy::Kind::Confounded:
      j["kind"] = "confounded";
      j["tab"] = pi.tab;
      break;
    case Policy::Kind::Softmax:
      j["kind"] = "softmax";
      j["theta"] = pi.theta;
      break;
  }
  return j.dump(2);
}

Policy policy_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("policy json: ") + e.what());
  }
  try {
    std::string kind = j.at("kind").get<std::string>();
    int S = j.at("S").get<int>();
    int A = j.at("A").get<int>();
    if (kind == "softmax") return Policy::softmax(j.at("theta").get<Mat>());
    auto tab = j.at("tab").get<std::vector<Vec>>();
    if (kind == "observed") return Policy::observed(S, A, std::move(tab));
    if (kind == "confounded") return Policy::confounded(S, j.at("U").get<int>(), A, std::move(tab));
    throw ConfigError("policy json: unknown kind " + kind);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("policy json: ") + e.what());
  }
}

}  // namespace confope
