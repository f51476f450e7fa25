#include "confope/model_based.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "confope/ope.hpp"
#include "confope/rng.hpp"

namespace confope {

double mb_value(const Vec& P, const Vec& r, const Policy& pi, int S, int A, int H, int s0) {
  Vec Vnext(S, 0.0), V(S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        double pa = pi.p(h, s, 0, a);
        if (pa == 0.0) continue;
        double q = r[static_cast<size_t>(s) * A + a];
        if (h + 1 < H) {
          const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
          for (int s2 = 0; s2 < S; ++s2) q += row[s2] * Vnext[s2];
        }
        acc += pa * q;
      }
      V[s] = acc;
    }
    Vnext = V;
  }
  return Vnext[s0];
}

MbEval mb_value_grad(const Vec& P, const Vec& r, const Policy& pi, int S, int A, int H, int s0) {
  // Forward (backward-in-h) pass storing per-step state values.
  Mat Vh(H + 1, Vec(S, 0.0));  // Vh[h][s], Vh[H] = 0
  for (int h = H - 1; h >= 0; --h)
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        double pa = pi.p(h, s, 0, a);
        if (pa == 0.0) continue;
        double q = r[static_cast<size_t>(s) * A + a];
        if (h + 1 < H) {
          const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
          for (int s2 = 0; s2 < S; ++s2) q += row[s2] * Vh[h + 1][s2];
        }
        acc += pa * q;
      }
      Vh[h][s] = acc;
    }
  // Adjoint pass: vbar_h(s) = dV(s0)/dV_h(s).
  MbEval out;
  out.v = Vh[0][s0];
  out.dP.assign(P.size(), 0.0);
  Vec vbar(S, 0.0), vnext(S, 0.0);
  vbar[s0] = 1.0;
  for (int h = 0; h + 1 < H; ++h) {
    std::fill(vnext.begin(), vnext.end(), 0.0);
    for (int s = 0; s < S; ++s) {
      double w = vbar[s];
      if (w == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        double pa = pi.p(h, s, 0, a);
        if (pa == 0.0) continue;
        double* g = out.dP.data() + (static_cast<size_t>(s) * A + a) * S;
        const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2) {
          g[s2] += w * pa * Vh[h + 1][s2];
          vnext[s2] += w * pa * row[s2];
        }
      }
    }
    vbar.swap(vnext);
  }
  return out;
}

PolicyEval value_policy_grad(const Vec& P, const Vec& r, const Policy& pi, int S, int A, int H,
                             int s0) {
  if (pi.kind != Policy::Kind::Softmax)
    throw ConfigError("value_policy_grad: policy must be softmax");
  Mat Vh(H + 1, Vec(S, 0.0));
  Mat Qh(H, Vec(static_cast<size_t>(S) * A, 0.0));
  for (int h = H - 1; h >= 0; --h)
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        double q = r[static_cast<size_t>(s) * A + a];
        if (h + 1 < H) {
          const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
          for (int s2 = 0; s2 < S; ++s2) q += row[s2] * Vh[h + 1][s2];
        }
        Qh[h][static_cast<size_t>(s) * A + a] = q;
        acc += pi.p(h, s, 0, a) * q;
      }
      Vh[h][s] = acc;
    }
  // dV/dpi accumulated over steps, then the softmax chain per state row.
  Vec gpi(static_cast<size_t>(S) * A, 0.0);
  Vec vbar(S, 0.0), vnext(S, 0.0);
  vbar[s0] = 1.0;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      double w = vbar[s];
      if (w == 0.0) continue;
      for (int a = 0; a < A; ++a) gpi[static_cast<size_t>(s) * A + a] += w * Qh[h][static_cast<size_t>(s) * A + a];
    }
    if (h + 1 == H) break;
    std::fill(vnext.begin(), vnext.end(), 0.0);
    for (int s = 0; s < S; ++s) {
      double w = vbar[s];
      if (w == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        double pa = pi.p(h, s, 0, a);
        if (pa == 0.0) continue;
        const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2) vnext[s2] += w * pa * row[s2];
      }
    }
    vbar.swap(vnext);
  }
  PolicyEval out;
  out.v = Vh[0][s0];
  out.dtheta.assign(S, Vec(A, 0.0));
  for (int s = 0; s < S; ++s) {
    double inner = 0.0;
    for (int a = 0; a < A; ++a) inner += pi.p(0, s, 0, a) * gpi[static_cast<size_t>(s) * A + a];
    for (int a = 0; a < A; ++a)
      out.dtheta[s][a] = pi.p(0, s, 0, a) * (gpi[static_cast<size_t>(s) * A + a] - inner);
  }
  return out;
}

// ---- Projected gradient search ------------------------------------------

// Rows reachable from s0 under pi: these are the coordinates the search moves.
static std::vector<char> active_rows(const Model& m, const Policy& pi_e, const Uncertainty& tu,
                                     int s0) {
  std::vector<char> row_active(static_cast<size_t>(m.S) * m.A, 0);
  std::vector<char> seen(m.S, 0);
  std::vector<int> stack{s0};
  seen[s0] = 1;
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int a = 0; a < m.A; ++a) {
      bool pos = false;
      for (int h = 0; h < m.H; ++h)
        if (pi_e.p(h, s, 0, a) > 1e-12) {
          pos = true;
          break;
        }
      if (!pos) continue;
      size_t i = static_cast<size_t>(s) * m.A + a;
      if (!tu.defined[0][i]) continue;
      row_active[i] = 1;
      for (int s2 = 0; s2 < m.S; ++s2)
        if (tu.hi[0][i * m.S + s2] > 0.0 && !seen[s2]) {
          seen[s2] = 1;
          stack.push_back(s2);
        }
    }
  }
  return row_active;
}

static void project_rows(Vec* P, const Uncertainty& tu, const std::vector<char>& act, int S, int A) {
  for (size_t i = 0; i < static_cast<size_t>(S) * A; ++i) {
    if (!act[i]) continue;
    Vec y(P->begin() + i * S, P->begin() + (i + 1) * S);
    Vec lo(tu.lo[0].begin() + i * S, tu.lo[0].begin() + (i + 1) * S);
    Vec hi(tu.hi[0].begin() + i * S, tu.hi[0].begin() + (i + 1) * S);
    Vec x = project_box_simplex(y, lo, hi);
    std::copy(x.begin(), x.end(), P->begin() + i * S);
  }
}

PgdResult mb_pgd(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0,
                 const PgdOptions& opt) {
  if (!tu.pooled) throw ConfigError("mb_pgd: expects a stationary envelope");
  if (!m.pooled) throw ConfigError("mb_pgd: expects a pooled model");
  check_coverage(m, pi_e, s0);
  check_feasible(tu);
  std::vector<char> act = active_rows(m, pi_e, tu, s0);
  const Vec& r = m.r[0];

  auto run_from = [&](Vec P) {
    project_rows(&P, tu, act, m.S, m.A);
    PgdResult res;
    res.v_min = mb_value(P, r, pi_e, m.S, m.A, m.H, s0);
    res.P_best = P;
    if (opt.record_trace) {
      res.trace_v.push_back(res.v_min);
      res.trace_gnorm.push_back(0.0);
    }
    for (int t = 1; t <= opt.iters; ++t) {
      MbEval e = mb_value_grad(P, r, pi_e, m.S, m.A, m.H, s0);
      if (e.v < res.v_min) {
        res.v_min = e.v;
        res.P_best = P;
      }
      double eta = opt.eta0 / std::sqrt(static_cast<double>(t));
      double gn = 0.0;
      for (size_t i = 0; i < static_cast<size_t>(m.S) * m.A; ++i) {
        if (!act[i]) continue;
        for (int s2 = 0; s2 < m.S; ++s2) {
          double g = e.dP[i * m.S + s2];
          gn += g * g;
          P[i * m.S + s2] -= eta * g;
        }
      }
      project_rows(&P, tu, act, m.S, m.A);
      if (opt.record_trace) {
        res.trace_v.push_back(e.v);
        res.trace_gnorm.push_back(std::sqrt(gn));
      }
    }
    double v = mb_value(P, r, pi_e, m.S, m.A, m.H, s0);
    if (v < res.v_min) {
      res.v_min = v;
      res.P_best = P;
    }
    return res;
  };

  PgdResult best = run_from(opt.init ? *opt.init : m.P[0]);
  if (opt.restarts > 0) {
    Rng rng(opt.seed ^ 0xC001D00DULL);
    for (int rtry = 0; rtry < opt.restarts; ++rtry) {
      Vec P = m.P[0];
      for (size_t i = 0; i < static_cast<size_t>(m.S) * m.A; ++i) {
        if (!act[i]) continue;
        for (int s2 = 0; s2 < m.S; ++s2)
          P[i * m.S + s2] = rng.uniform(tu.lo[0][i * m.S + s2], tu.hi[0][i * m.S + s2]);
      }
      PgdResult res = run_from(std::move(P));
      if (res.v_min < best.v_min) best = res;
    }
  }
  return best;
}

// ---- Grid oracle ---------------------------------------------------------

double mb_bruteforce(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0,
                     double resolution) {
  if (!tu.pooled) throw ConfigError("mb_bruteforce: expects a stationary envelope");
  check_coverage(m, pi_e, s0);
  check_feasible(tu);
  std::vector<char> act = active_rows(m, pi_e, tu, s0);
  std::vector<size_t> rows;
  for (size_t i = 0; i < act.size(); ++i)
    if (act[i]) rows.push_back(i);
  const Vec& r = m.r[0];

  // Candidate grid per row: all coordinates but one walk {lo, lo+step, ..., hi};
  // the coordinate with the widest box absorbs the remainder, so a box
  // narrower than the step never has to land exactly on a grid point.
  auto row_candidates = [&](size_t i, const Vec& lo, const Vec& hi, double step,
                            std::vector<Vec>* out) {
    out->clear();
    int S = m.S;
    int absorber = 0;
    for (int s2 = 1; s2 < S; ++s2)
      if (hi[s2] - lo[s2] > hi[absorber] - lo[absorber]) absorber = s2;
    std::vector<int> order;
    for (int s2 = 0; s2 < S; ++s2)
      if (s2 != absorber) order.push_back(s2);
    Vec cur(S, 0.0);
    std::function<void(size_t, double)> rec = [&](size_t k, double used) {
      if (used > 1.0 + 1e-9) return;
      if (k == order.size()) {
        double last = 1.0 - used;
        if (last < lo[absorber] - 1e-9 || last > hi[absorber] + 1e-9) return;
        cur[absorber] = std::clamp(last, lo[absorber], hi[absorber]);
        out->push_back(cur);
        return;
      }
      int c = order[k];
      for (double v = lo[c];; v += step) {
        bool at_end = v >= hi[c] - 1e-12;
        cur[c] = at_end ? hi[c] : v;
        rec(k + 1, used + cur[c]);
        if (at_end) break;
      }
    };
    rec(0, 0.0);
    (void)i;
  };

  auto search = [&](const std::vector<std::vector<Vec>>& cands) {
    size_t total = 1;
    for (const auto& c : cands) {
      if (c.empty()) throw InfeasibleError("mb_bruteforce: a row grid is empty");
      total *= c.size();
      if (total > 60000000ULL) throw ConfigError("mb_bruteforce: grid too large");
    }
    Vec P = m.P[0];
    double best = std::numeric_limits<double>::infinity();
    std::vector<size_t> pick(rows.size(), 0);
    std::vector<size_t> best_pick(rows.size(), 0);
    for (size_t flat = 0; flat < total; ++flat) {
      size_t x = flat;
      for (size_t k = 0; k < rows.size(); ++k) {
        pick[k] = x % cands[k].size();
        x /= cands[k].size();
        const Vec& row = cands[k][pick[k]];
        std::copy(row.begin(), row.end(), P.begin() + rows[k] * m.S);
      }
      double v = mb_value(P, r, pi_e, m.S, m.A, m.H, s0);
      if (v < best) {
        best = v;
        best_pick = pick;
      }
    }
    return std::pair<double, std::vector<size_t>>(best, best_pick);
  };

  std::vector<std::vector<Vec>> cands(rows.size());
  for (size_t k = 0; k < rows.size(); ++k) {
    size_t i = rows[k];
    Vec lo(tu.lo[0].begin() + i * m.S, tu.lo[0].begin() + (i + 1) * m.S);
    Vec hi(tu.hi[0].begin() + i * m.S, tu.hi[0].begin() + (i + 1) * m.S);
    row_candidates(i, lo, hi, resolution, &cands[k]);
  }
  auto [coarse, coarse_pick] = search(cands);

  // Refinement: shrink each row's box to +-2*resolution around the coarse
  // winner (intersected with the envelope) and rescan at a tenth of the step.
  std::vector<std::vector<Vec>> fine(rows.size());
  for (size_t k = 0; k < rows.size(); ++k) {
    size_t i = rows[k];
    const Vec& center = cands[k][coarse_pick[k]];
    Vec lo(m.S), hi(m.S);
    for (int s2 = 0; s2 < m.S; ++s2) {
      lo[s2] = std::max(tu.lo[0][i * m.S + s2], center[s2] - 2.0 * resolution);
      hi[s2] = std::min(tu.hi[0][i * m.S + s2], center[s2] + 2.0 * resolution);
    }
    row_candidates(i, lo, hi, resolution / 10.0, &fine[k]);
  }
  auto [refined, refined_pick] = search(fine);
  (void)refined_pick;
  return std::min(coarse, refined);
}

}  // namespace confope
