#include "confope/ope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace confope {

Vec knapsack_min_row(const Vec& cost, const Vec& lo, const Vec& hi) {
  size_t n = cost.size();
  if (lo.size() != n || hi.size() != n || n == 0)
    throw ConfigError("knapsack_min_row: size mismatch");
  double slo = 0.0, shi = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (lo[i] > hi[i] + 1e-12) throw InfeasibleError("knapsack_min_row: lo > hi");
    slo += lo[i];
    shi += hi[i];
  }
  if (slo > 1.0 + 1e-9 || shi < 1.0 - 1e-9)
    throw InfeasibleError("knapsack_min_row: simplex slice is empty");
  Vec m = lo;
  double rem = 1.0 - slo;
  if (rem <= 0.0) return m;
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return cost[a] < cost[b]; });
  for (size_t k : idx) {
    double take = std::min(rem, hi[k] - lo[k]);
    if (take > 0.0) {
      m[k] += take;
      rem -= take;
    }
    if (rem <= 1e-15) break;
  }
  return m;
}

Vec project_box_simplex(const Vec& y, const Vec& lo, const Vec& hi, double tol) {
  size_t n = y.size();
  if (lo.size() != n || hi.size() != n || n == 0)
    throw ConfigError("project_box_simplex: size mismatch");
  double slo = 0.0, shi = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (lo[i] > hi[i] + 1e-12) throw InfeasibleError("project_box_simplex: lo > hi");
    slo += lo[i];
    shi += hi[i];
  }
  if (slo > 1.0 + 1e-9 || shi < 1.0 - 1e-9)
    throw InfeasibleError("project_box_simplex: simplex slice is empty");
  auto mass = [&](double lam) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::clamp(y[i] + lam, lo[i], hi[i]);
    return s - 1.0;
  };
  double a = lo[0] - y[0], b = hi[0] - y[0];
  for (size_t i = 1; i < n; ++i) {
    a = std::min(a, lo[i] - y[i]);
    b = std::max(b, hi[i] - y[i]);
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (a + b);
    double g = mass(mid);
    if (std::fabs(g) <= tol) {
      a = b = mid;
      break;
    }
    if (g < 0.0)
      a = mid;
    else
      b = mid;
  }
  double lam = 0.5 * (a + b);
  Vec x(n);
  for (size_t i = 0; i < n; ++i) x[i] = std::clamp(y[i] + lam, lo[i], hi[i]);
  return x;
}

// ---- Coverage ------------------------------------------------------------

static bool policy_positive(const Policy& pi_e, int h, int s, int a) {
  return pi_e.p(h, s, 0, a) > 1e-12;
}

void check_coverage(const Model& m, const Policy& pi_e, int s0) {
  if (pi_e.confounded()) throw ConfigError("check_coverage: pi_e must be observed");
  std::vector<std::string> missing;
  auto note = [&](int h, int s, int a) {
    if (missing.size() < 5)
      missing.push_back("(h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                        ",a=" + std::to_string(a) + ")");
  };
  auto have_action = [&](int h, int s, int a) {
    return m.pi_t(h)[static_cast<size_t>(s) * m.A + a] > 0.0;
  };
  auto kernel_ok = [&](int h, int s, int a) {
    int t = m.pooled ? 0 : std::min(h, m.kernel_steps() - 1);
    return m.visited[t][static_cast<size_t>(s) * m.A + a] != 0;
  };
  if (s0 < 0) {
    // Every state with data at a step must have data for each action the
    // evaluation policy can take there.
    for (int h = 0; h < m.H; ++h)
      for (int s = 0; s < m.S; ++s) {
        bool seen = false;
        for (int a = 0; a < m.A; ++a) seen = seen || have_action(h, s, a);
        if (!seen) continue;
        for (int a = 0; a < m.A; ++a) {
          if (!policy_positive(pi_e, h, s, a)) continue;
          if (!have_action(h, s, a) || (h + 1 < m.H && !kernel_ok(h, s, a))) note(h, s, a);
        }
      }
  } else {
    if (s0 >= m.S) throw ConfigError("check_coverage: s0 out of range");
    std::vector<char> cur(m.S, 0), nxt(m.S, 0);
    cur[s0] = 1;
    for (int h = 0; h < m.H; ++h) {
      std::fill(nxt.begin(), nxt.end(), 0);
      for (int s = 0; s < m.S; ++s) {
        if (!cur[s]) continue;
        for (int a = 0; a < m.A; ++a) {
          if (!policy_positive(pi_e, h, s, a)) continue;
          if (!have_action(h, s, a)) note(h, s, a);
          if (h + 1 == m.H) continue;  // final step needs no transition
          size_t i = static_cast<size_t>(s) * m.A + a;
          if (!kernel_ok(h, s, a)) {
            note(h, s, a);
            continue;
          }
          const Vec& P = m.Pt(h);
          for (int s2 = 0; s2 < m.S; ++s2)
            if (P[i * m.S + s2] > 0.0) nxt[s2] = 1;
        }
      }
      cur.swap(nxt);
    }
  }
  if (!missing.empty()) {
    std::string msg = "evaluation policy needs unvisited cells:";
    for (const std::string& c : missing) msg += " " + c;
    throw CoverageError(msg);
  }
}

// ---- Backups -------------------------------------------------------------

// Shared backward recursion. With tu == nullptr each backup uses the kernel
// point estimate; otherwise each row minimizes the continuation over the
// envelope at that step.
static ValueReport backup(const Model& m, const Policy& pi_e, const Uncertainty* tu,
                          const std::string& name, int s0) {
  if (pi_e.confounded()) throw ConfigError(name + ": pi_e must be observed");
  check_coverage(m, pi_e, s0);
  ValueReport out;
  out.method = name;
  out.is_lower_bound = tu != nullptr;
  size_t SA = static_cast<size_t>(m.S) * m.A;
  out.f.assign(m.H, Vec(SA, 0.0));
  Vec cont(m.S, 0.0);  // pi_e-averaged continuation value per next state
  long undefined_rows = 0;
  for (int h = m.H - 1; h >= 0; --h) {
    Vec& f = out.f[h];
    const Vec& r = m.r_t(h);
    if (h + 1 < m.H) {
      for (int s2 = 0; s2 < m.S; ++s2) {
        double acc = 0.0;
        for (int a2 = 0; a2 < m.A; ++a2)
          acc += pi_e.p(h + 1, s2, 0, a2) * out.f[h + 1][static_cast<size_t>(s2) * m.A + a2];
        cont[s2] = acc;
      }
    }
    int t = std::min(h, m.kernel_steps() - 1);
    for (size_t i = 0; i < SA; ++i) {
      f[i] = r[i];
      if (h + 1 == m.H) continue;
      bool have = tu != nullptr ? tu->row_defined(h, static_cast<int>(i) / m.A,
                                                  static_cast<int>(i) % m.A)
                                : m.visited[m.pooled ? 0 : t][i] != 0;
      if (!have) {
        ++undefined_rows;
        continue;  // row retains the immediate reward only
      }
      if (tu == nullptr) {
        const Vec& P = m.Pt(h);
        double acc = 0.0;
        for (int s2 = 0; s2 < m.S; ++s2) acc += P[i * m.S + s2] * cont[s2];
        f[i] += acc;
      } else {
        const Vec& lo = tu->lo_t(h);
        const Vec& hi = tu->hi_t(h);
        Vec row = knapsack_min_row(Vec(cont),
                                   Vec(lo.begin() + i * m.S, lo.begin() + (i + 1) * m.S),
                                   Vec(hi.begin() + i * m.S, hi.begin() + (i + 1) * m.S));
        double acc = 0.0;
        for (int s2 = 0; s2 < m.S; ++s2) acc += row[s2] * cont[s2];
        f[i] += acc;
      }
    }
  }
  out.v1.assign(m.S, 0.0);
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a)
      out.v1[s] += pi_e.p(0, s, 0, a) * out.f[0][static_cast<size_t>(s) * m.A + a];
  out.diagnostics["rows_without_data"] = static_cast<double>(undefined_rows);
  return out;
}

ValueReport fqe(const Model& m, const Policy& pi_e, int s0) {
  return backup(m, pi_e, nullptr, "fqe", s0);
}

ValueReport cfqe(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0) {
  return backup(m, pi_e, &tu, "cfqe", s0);
}

ValueReport mb_relaxation(const Model& m, const Policy& pi_e, const Uncertainty& tu, int s0) {
  if (!tu.pooled) throw ConfigError("mb_relaxation: expects a stationary envelope");
  ValueReport out = backup(m, pi_e, &tu, "mb-relax", s0);
  return out;
}

// ---- Worst-case envelopes ------------------------------------------------

TheoryEnvelopes theory_envelopes(double eps, int H, double reward_range) {
  if (eps < 0.0) throw ConfigError("theory_envelopes: eps must be >= 0");
  if (H <= 0) throw ConfigError("theory_envelopes: H must be positive");
  TheoryEnvelopes e;
  if (eps == 0.0) return e;
  double Hd = H;
  if (eps < 1e-8) {
    // Leading terms of the closed forms, stable for tiny eps.
    e.fqe_lo = -eps * Hd * (Hd - 1.0) / 2.0 * reward_range;
    e.fqe_hi = eps * Hd * (Hd + 1.0) / 2.0 * reward_range;
  } else {
    e.fqe_lo = (1.0 + eps * Hd - std::pow(1.0 + eps, Hd)) / eps * reward_range;
    e.fqe_hi = (std::pow(1.0 + eps, -Hd) - 1.0 + eps * Hd) / eps * reward_range;
  }
  e.cfqe_cap = 2.0 * eps * Hd * Hd * reward_range;
  e.mb_cap = e.cfqe_cap;
  return e;
}

ValueReport naive_lb(const Model& m, const Policy& pi_e, double eps, int s0) {
  ValueReport out = backup(m, pi_e, nullptr, "naive-lb", s0);
  double range = m.reward_range();
  TheoryEnvelopes env = theory_envelopes(eps, m.H, range);
  for (double& v : out.v1) v += env.fqe_lo;
  out.is_lower_bound = true;
  out.diagnostics["reward_range"] = range;
  out.diagnostics["correction"] = env.fqe_lo;
  return out;
}

double envelope_l1_radius(const Model& m, const Uncertainty& tu) {
  double eps = 0.0;
  for (int h = 0; h < tu.steps(); ++h) {
    for (int s = 0; s < tu.S; ++s)
      for (int a = 0; a < tu.A; ++a) {
        if (!tu.row_defined(h, s, a)) continue;
        const Vec& P = m.Pt(tu.pooled ? 0 : h);
        double e = 0.0;
        for (int s2 = 0; s2 < tu.S; ++s2) {
          size_t i = (static_cast<size_t>(s) * tu.A + a) * tu.S + s2;
          e += std::max(P[i] - tu.lo_t(h)[i], tu.hi_t(h)[i] - P[i]);
        }
        eps = std::max(eps, e);
      }
  }
  return eps;
}

}  // namespace confope
