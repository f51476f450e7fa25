#include "confope/envs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "confope/rng.hpp"
#include "confope/sensitivity.hpp"

namespace confope {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// Allocate a single stationary kernel table and return a writable row view.
Vec make_table(int S, int U, int A) { return Vec(static_cast<size_t>(S) * U * A * S, 0.0); }

double* row_of(Vec& table, int S, int U, int A, int s, int u, int a) {
  return table.data() + (static_cast<size_t>((static_cast<size_t>(s) * U + u) * A + a)) * S;
}

Policy deterministic_observed(int S, int A, const std::vector<int>& act) {
  Vec t(static_cast<size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s) t[static_cast<size_t>(s) * A + act[s]] = 1.0;
  return Policy::observed(S, A, {t});
}

double odds_ratio_budget(double p_conf, double p_marg) {
  // max(OR, 1/OR) with the conventions used by true_gamma().
  if (p_conf <= 0.0 || p_conf >= 1.0) {
    if (p_marg <= 0.0 || p_marg >= 1.0) return 1.0;
    return std::numeric_limits<double>::infinity();
  }
  if (p_marg <= 0.0 || p_marg >= 1.0) return std::numeric_limits<double>::infinity();
  double oc = p_conf / (1.0 - p_conf), om = p_marg / (1.0 - p_marg);
  double r = oc / om;
  return std::max(r, 1.0 / r);
}

double l2_joint_product_gap(const Vec& w0, const Vec& w1) {
  // || w0 (x) w0 - w1 (x) w1 ||_2 for two per-vital distributions.
  double acc = 0.0;
  for (size_t i = 0; i < w0.size(); ++i)
    for (size_t j = 0; j < w0.size(); ++j) acc += sqr(w0[i] * w0[j] - w1[i] * w1[j]);
  return std::sqrt(acc);
}

}  // namespace

// ---------------------------------------------------------------------------

Fixture memoryless_pair(double eps, double z, double z1, double z2, int H) {
  require(eps >= 0.0 && eps < 0.5, "memoryless_pair: eps must lie in [0, 0.5)");
  for (double v : {z, z1, z2})
    require(v >= 0.0 && v <= 1.0, "memoryless_pair: z, z1, z2 must lie in [0, 1]");
  require(H >= 1, "memoryless_pair: H must be >= 1");

  const int S = 2, U = 2, A = 2;  // state 0 pays reward, state 1 is the start
  Fixture fx;
  fx.id = "memoryless_pair";

  for (int i = 0; i < 2; ++i) {
    ConfoundedMdp m;
    m.S = S;
    m.U = U;
    m.A = A;
    m.H = H + 1;  // one lead-in step before the H reward-bearing steps
    m.stationary = true;
    m.d0 = {0.0, 1.0};
    m.reward = {{1.0, 1.0}, {0.0, 0.0}};
    m.proc.kind = ConfounderProcess::Kind::Memoryless;
    double pu0 = (i == 0) ? 0.5 - eps : 0.5 + eps;  // P_i(u = 0), state-independent
    m.proc.p_u_s = {Mat(S, Vec{pu0, 1.0 - pu0})};

    Vec K = make_table(S, U, A);
    for (int s = 0; s < S; ++s) {
      // Action 0: the same two rows in both models.
      for (int u = 0; u < U; ++u) {
        double q = (u == 0) ? z : 1.0 - z;  // P(next = reward state)
        double* r = row_of(K, S, U, A, s, u, 0);
        r[0] = q;
        r[1] = 1.0 - q;
      }
      // Action 1: model 1 swaps the confounder roles.
      for (int u = 0; u < U; ++u) {
        double q = ((u == 0) == (i == 0)) ? z1 : z2;
        double* r = row_of(K, S, U, A, s, u, 1);
        r[0] = q;
        r[1] = 1.0 - q;
      }
    }
    m.kernel = {std::move(K)};
    m.validate();
    fx.mdps.push_back(std::move(m));

    double pa0_u0 = (i == 0) ? 0.5 + eps : 0.5 - eps;  // pi_b(action 0 | u = 0)
    Vec tab(static_cast<size_t>(S) * U * A, 0.0);
    for (int s = 0; s < S; ++s)
      for (int u = 0; u < U; ++u) {
        double p = (u == 0) ? pa0_u0 : 1.0 - pa0_u0;
        tab[(static_cast<size_t>(s) * U + u) * A + 0] = p;
        tab[(static_cast<size_t>(s) * U + u) * A + 1] = 1.0 - p;
      }
    Policy pb = Policy::confounded(S, U, A, {tab});
    pb.validate();
    fx.pi_b.push_back(std::move(pb));
  }

  fx.pi_e = deterministic_observed(S, A, {0, 0});

  double p1 = (0.5 - eps) * z + (0.5 + eps) * (1.0 - z);
  double p2 = (0.5 + eps) * z + (0.5 - eps) * (1.0 - z);
  fx.known["v_m1"] = H * p1;
  fx.known["v_m2"] = H * p2;
  fx.known["value_gap"] = 2.0 * eps * H * std::abs(1.0 - 2.0 * z);
  fx.known["marginal_a0"] = 0.5 - 2.0 * eps * eps;
  fx.known["gamma_star"] =
      eps == 0.0 ? 1.0
                 : ((0.5 + eps) / (0.5 - eps)) * ((0.5 + 2.0 * eps * eps) / (0.5 - 2.0 * eps * eps));
  fx.known["joint_diff"] = 0.0;
  fx.notes =
      "Two models, identical observed one-step tables at every state and step, "
      "target values differing by 2*eps*H*|1-2z|.";
  return fx;
}

// ---------------------------------------------------------------------------

Fixture memory_chain(int H) {
  require(H >= 2, "memory_chain: H must be >= 2");
  const int S = 2, U = 2, A = 2;  // state 0 pays reward; u=1 means "only action 0 so far"
  Fixture fx;
  fx.id = "memory_chain";

  ConfoundedMdp m;
  m.S = S;
  m.U = U;
  m.A = A;
  m.H = H;
  m.stationary = true;
  m.d0 = {1.0, 0.0};
  m.reward = {{1.0, 0.0}, {0.0, 0.0}};
  m.proc.kind = ConfounderProcess::Kind::HistoryDeterministic;
  m.proc.u0 = 1;
  m.proc.next_u = {{0, 0}, {1, 0}};

  Vec K = make_table(S, U, A);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < A; ++a) {
        double* r = row_of(K, S, U, A, s, u, a);
        if (u == 1 && a == 0) {
          r[0] = 1.0;  // an unbroken action-0 streak keeps the reward state
        } else {
          r[0] = 1.0 / H;
          r[1] = 1.0 - 1.0 / H;
        }
      }
  m.kernel = {std::move(K)};
  m.validate();
  fx.mdps.push_back(std::move(m));

  fx.pi_b.push_back(Policy::observed_uniform(S, A));
  fx.pi_e = deterministic_observed(S, A, {0, 0});

  fx.known["v_true"] = static_cast<double>(H);
  fx.known["fqe_cap"] = 2.0 * std::log2(static_cast<double>(H)) + 9.0;
  fx.known["tau_a"] = 2.0;
  fx.notes =
      "History-dependent confounder remembering whether action 0 was ever "
      "abandoned; one-step tables look mildly confounded but the true value is H.";
  return fx;
}

// ---------------------------------------------------------------------------

Fixture alternating_pair(int H) {
  require(H >= 3, "alternating_pair: H must be >= 3");
  const int S = 2, U = 4, A = 2;
  // Confounder classes: 0 = empty history, 1 = alternating ending in action 0,
  // 2 = alternating ending in action 1, 3 = alternation broken.
  Fixture fx;
  fx.id = "alternating_pair";

  double scale = (1.0 - std::pow(2.0, 1.0 - H)) * (H - 1.0) /
                 (H - 3.0 + std::pow(2.0, 2.0 - H));

  for (int i = 0; i < 2; ++i) {
    ConfoundedMdp m;
    m.S = S;
    m.U = U;
    m.A = A;
    m.H = H;
    m.stationary = true;
    m.d0 = {0.0, 1.0};  // start in the non-rewarding state
    m.reward = {{scale, scale}, {0.0, 0.0}};
    m.proc.kind = ConfounderProcess::Kind::HistoryDeterministic;
    m.proc.u0 = 0;
    m.proc.next_u = {{1, 2}, {3, 2}, {1, 3}, {3, 3}};

    Vec K = make_table(S, U, A);
    for (int s = 0; s < S; ++s)
      for (int u = 0; u < U; ++u)
        for (int a = 0; a < A; ++a) {
          double* r = row_of(K, S, U, A, s, u, a);
          bool breaks = (u == 3) || (u == 1 && a == 0) || (u == 2 && a == 1);
          int target = (i == 0 && breaks) ? 0 : 1;
          r[target] = 1.0;
        }
    m.kernel = {std::move(K)};
    m.validate();
    fx.mdps.push_back(std::move(m));

    // First action uniform, then deterministically the opposite of the last.
    Vec tab(static_cast<size_t>(S) * U * A, 0.0);
    for (int s = 0; s < S; ++s)
      for (int u = 0; u < U; ++u) {
        double p0 = (u == 1) ? 0.0 : (u == 2) ? 1.0 : 0.5;
        tab[(static_cast<size_t>(s) * U + u) * A + 0] = p0;
        tab[(static_cast<size_t>(s) * U + u) * A + 1] = 1.0 - p0;
      }
    Policy pb = Policy::confounded(S, U, A, {tab});
    pb.validate();
    fx.pi_b.push_back(std::move(pb));
  }

  fx.pi_e = Policy::observed_uniform(S, A);

  fx.known["v_m1"] = (1.0 - std::pow(2.0, 1.0 - H)) * (H - 1.0);
  fx.known["v_m2"] = 0.0;
  fx.known["reward_scale"] = scale;
  fx.known["law_max_diff"] = 0.0;
  fx.known["gamma_unbounded"] = 1.0;
  fx.notes =
      "Behavior alternates forever, so both models emit the same observed "
      "trajectories; the uniform target policy breaks the alternation and is "
      "worth (1-2^(1-H))*(H-1) in model 1 and 0 in model 2.";
  return fx;
}

// ---------------------------------------------------------------------------

Fixture hypercube_pair(int n, const Mat& p, int H) {
  require(n >= 2 && n <= 10, "hypercube_pair: n must lie in [2, 10]");
  require(H >= 1, "hypercube_pair: H must be >= 1");
  require(p.size() == 2 && p[0].size() == 2 && p[1].size() == 2,
          "hypercube_pair: p must be 2x2");
  for (const Vec& r : p)
    for (double v : r)
      require(v >= 0.0 && v <= 1.0, "hypercube_pair: entries of p must lie in [0, 1]");

  const int hub = 1 << n, S = hub + 1, U = 2, A = 2, ones = hub - 1;
  Fixture fx;
  fx.id = "hypercube_pair";

  for (int i = 0; i < 2; ++i) {
    ConfoundedMdp m;
    m.S = S;
    m.U = U;
    m.A = A;
    m.H = H;
    m.stationary = true;
    m.d0 = Vec(S, 0.0);
    m.d0[0] = 1.0;
    m.reward = Mat(S, Vec(A, 0.0));
    m.reward[hub] = {1.0, 1.0};
    m.proc.kind = ConfounderProcess::Kind::Global;
    m.proc.p_u = {0.5, 0.5};

    Vec K = make_table(S, U, A);
    for (int u = 0; u < U; ++u) {
      double pe = p[i][u];  // hub-entry probability for this model/confounder
      for (int s = 0; s < S; ++s) {
        double* r0 = row_of(K, S, U, A, s, u, 0);
        double* r1 = row_of(K, S, U, A, s, u, 1);
        if (s == hub) {
          r0[hub] = pe;
          r0[ones] = 1.0 - pe;
          for (int b = 0; b < n; ++b) r1[ones & ~(1 << b)] += 1.0 / n;
        } else {
          int zeros = n - std::popcount(static_cast<unsigned>(s));
          if (zeros == 0) {  // the all-ones corner
            r0[hub] = pe;
            r0[s] = 1.0 - pe;
          } else if (zeros == 1) {
            r0[hub] = pe / n;
            r0[ones] = (1.0 - pe) / n;
            r0[s] = 1.0 - 1.0 / n;
          } else {
            for (int b = 0; b < n; ++b)
              if (!(s & (1 << b))) r0[s | (1 << b)] += 1.0 / n;
            r0[s] += 1.0 - static_cast<double>(zeros) / n;
          }
          for (int b = 0; b < n; ++b)
            if (s & (1 << b)) r1[s & ~(1 << b)] += 1.0 / n;
          r1[s] += static_cast<double>(zeros) / n;
        }
      }
    }
    m.kernel = {std::move(K)};
    m.validate();
    fx.mdps.push_back(std::move(m));
    fx.pi_b.push_back(Policy::observed_uniform(S, A));
  }

  fx.pi_e = deterministic_observed(S, A, std::vector<int>(S, 0));

  fx.known["v_ones_m1"] = (H - 1.0) * (p[0][0] + p[0][1]) / 2.0;
  fx.known["v_ones_m2"] = (H - 1.0) * (p[1][0] + p[1][1]) / 2.0;
  fx.known["gap_ones"] =
      std::abs((p[0][0] + p[0][1]) - (p[1][0] + p[1][1])) / 2.0 * (H - 1.0);
  fx.notes =
      "Lazy walk on the n-cube plus a rewarding hub; a global binary confounder "
      "picks the hub-entry probability. Observed laws agree for horizons up to "
      "n/4 while values from the all-ones corner differ.";
  return fx;
}

// ---------------------------------------------------------------------------

namespace {
int grid_greedy(int s) {
  if (s == 15) return 1;
  return (s % 4 < 3) ? 1 : 3;  // East until the last column, then South
}
}  // namespace

Fixture gridworld_iid(double slip_high, double slip_low, double p_high, int H) {
  require(slip_high >= 0.0 && slip_high < 1.0 && slip_low >= 0.0 && slip_low < 1.0,
          "gridworld_iid: slip probabilities must lie in [0, 1)");
  require(p_high >= 0.0 && p_high <= 1.0, "gridworld_iid: p_high must lie in [0, 1]");
  require(H >= 1, "gridworld_iid: H must be >= 1");

  const int S = 16, U = 2, A = 4, goal = 15;
  const double eps_u[2] = {0.3, 0.5};  // epsilon-greedy level per slip regime
  Fixture fx;
  fx.id = "gridworld_iid";

  ConfoundedMdp m;
  m.S = S;
  m.U = U;
  m.A = A;
  m.H = H;
  m.stationary = true;
  m.d0 = Vec(S, 0.0);
  m.d0[0] = 1.0;
  m.reward = Mat(S, Vec(A, -0.1));
  m.reward[goal] = Vec(A, 1.0);
  // Hazards just south of the direct route: slips into them are what a
  // pessimistic evaluation has to price in.
  m.reward[5] = Vec(A, -1.0);
  m.reward[6] = Vec(A, -1.0);
  m.proc.kind = ConfounderProcess::Kind::Memoryless;
  m.proc.p_u_s = {Mat(S, Vec{p_high, 1.0 - p_high})};

  auto move = [](int s, int dir) {
    int row = s / 4, col = s % 4;
    switch (dir) {
      case 0: col -= 1; break;  // West
      case 1: col += 1; break;  // East
      case 2: row -= 1; break;  // North
      default: row += 1; break; // South
    }
    if (row < 0 || row > 3 || col < 0 || col > 3) return s;
    return row * 4 + col;
  };

  Vec K = make_table(S, U, A);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < A; ++a) {
        double* r = row_of(K, S, U, A, s, u, a);
        if (s == goal) {
          r[goal] = 1.0;
          continue;
        }
        double slip = (u == 0) ? slip_high : slip_low;
        for (int d = 0; d < A; ++d)
          r[move(s, d)] += (d == a) ? 1.0 - slip : slip / 3.0;
      }
  m.kernel = {std::move(K)};
  m.validate();
  fx.mdps.push_back(std::move(m));

  Vec tab(static_cast<size_t>(S) * U * A, 0.0);
  std::vector<int> greedy(S);
  for (int s = 0; s < S; ++s) {
    greedy[s] = grid_greedy(s);
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < A; ++a)
        tab[(static_cast<size_t>(s) * U + u) * A + a] =
            (a == greedy[s]) ? 1.0 - eps_u[u] + eps_u[u] / A : eps_u[u] / A;
  }
  Policy pb = Policy::confounded(S, U, A, {tab});
  pb.validate();
  fx.pi_b.push_back(std::move(pb));
  fx.pi_e = deterministic_observed(S, A, greedy);

  // Odds-ratio budget from the two cell types (greedy and non-greedy action).
  double g0 = 1.0 - eps_u[0] + eps_u[0] / A, g1 = 1.0 - eps_u[1] + eps_u[1] / A;
  double mg = p_high * g0 + (1.0 - p_high) * g1;
  double n0 = eps_u[0] / A, n1 = eps_u[1] / A;
  double mn = p_high * n0 + (1.0 - p_high) * n1;
  double gstar = 1.0;
  for (double pr : {g0, g1}) gstar = std::max(gstar, odds_ratio_budget(pr, mg));
  for (double pr : {n0, n1}) gstar = std::max(gstar, odds_ratio_budget(pr, mn));
  fx.known["gamma_star"] = gstar;
  fx.notes =
      "4x4 gridworld; an i.i.d. binary confounder toggles the slip level and "
      "the behavior policy's greediness, worth an odds-ratio budget of 31/21 "
      "at the defaults.  Two hazard cells south of the direct route separate "
      "risk-seeking from risk-averse routes under adversarial slips.";
  return fx;
}

// ---------------------------------------------------------------------------

namespace {
// Distribution of one vital after a step: support {0..L-1}, clamped drift.
Vec vital_step(int L, int v, int a, int u) {
  int mid = (L - 1) / 2;
  double up, down;
  if (a == 0) {  // wait: the latent type sets the drift
    up = (u == 0) ? 0.25 : 0.45;
    down = (u == 0) ? 0.25 : 0.15;
  } else {  // treat: pull toward mid, same for both types
    if (v > mid) {
      up = 0.1;
      down = 0.5;
    } else if (v < mid) {
      up = 0.5;
      down = 0.1;
    } else {
      up = 0.15;
      down = 0.15;
    }
  }
  Vec w(L, 0.0);
  w[std::min(v + 1, L - 1)] += up;
  w[std::max(v - 1, 0)] += down;
  w[v] += 1.0 - up - down;
  return w;
}
}  // namespace

Fixture sepsis_toy(int levels, int n_types, int H) {
  require(levels >= 2 && levels <= 8, "sepsis_toy: levels must lie in [2, 8]");
  require(n_types == 1 || n_types == 2, "sepsis_toy: n_types must be 1 or 2");
  require(H >= 1, "sepsis_toy: H must be >= 1");
  const int L = levels, S = 2 * L * L, U = n_types, A = 2, mid = (L - 1) / 2;
  const double q_u[2] = {0.2, 0.8};  // P(glucose flag = 1) per latent type
  Fixture fx;
  fx.id = "sepsis_toy";

  auto idx = [L](int hr, int bp, int g) { return (hr * L + bp) * 2 + g; };

  ConfoundedMdp m;
  m.S = S;
  m.U = U;
  m.A = A;
  m.H = H;
  m.stationary = true;
  m.d0 = Vec(S, 1.0 / S);
  m.reward = Mat(S, Vec(A, 0.0));
  for (int hr = 0; hr < L; ++hr)
    for (int bp = 0; bp < L; ++bp)
      for (int g = 0; g < 2; ++g)
        for (int a = 0; a < A; ++a)
          m.reward[idx(hr, bp, g)][a] =
              ((hr == mid && bp == mid) ? 1.0 : 0.0) - (a == 1 ? 0.02 : 0.0);
  m.proc.kind = ConfounderProcess::Kind::Global;
  m.proc.p_u = (U == 2) ? Vec{0.5, 0.5} : Vec{1.0};

  Vec K = make_table(S, U, A);
  for (int hr = 0; hr < L; ++hr)
    for (int bp = 0; bp < L; ++bp)
      for (int g = 0; g < 2; ++g)
        for (int u = 0; u < U; ++u)
          for (int a = 0; a < A; ++a) {
            double* r = row_of(K, S, U, A, idx(hr, bp, g), u, a);
            Vec wh = vital_step(L, hr, a, u), wb = vital_step(L, bp, a, u);
            for (int hr2 = 0; hr2 < L; ++hr2)
              for (int bp2 = 0; bp2 < L; ++bp2) {
                double core = wh[hr2] * wb[bp2];
                r[idx(hr2, bp2, 1)] += core * q_u[u];
                r[idx(hr2, bp2, 0)] += core * (1.0 - q_u[u]);
              }
          }
  m.kernel = {std::move(K)};
  m.validate();
  fx.mdps.push_back(std::move(m));

  Vec tab(static_cast<size_t>(S) * U * A, 0.0);
  for (int hr = 0; hr < L; ++hr)
    for (int bp = 0; bp < L; ++bp)
      for (int g = 0; g < 2; ++g)
        for (int u = 0; u < U; ++u) {
          int dev = std::abs(hr - mid) + std::abs(bp - mid);
          double base = (u == 0) ? 0.35 : 0.65;
          double pt = std::clamp(base + 0.15 * (dev - 1), 0.05, 0.95);
          int s = idx(hr, bp, g);
          tab[(static_cast<size_t>(s) * U + u) * A + 1] = pt;
          tab[(static_cast<size_t>(s) * U + u) * A + 0] = 1.0 - pt;
        }
  Policy pb = Policy::confounded(S, U, A, {tab});
  pb.validate();
  fx.pi_b.push_back(pb);

  Vec etab(static_cast<size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double p = 0.0;
      for (int u = 0; u < U; ++u) p += pb.p(0, s, u, a);
      etab[static_cast<size_t>(s) * A + a] = p / U;
    }
  fx.pi_e = Policy::observed(S, A, {etab});

  fx.obs_projection.resize(S);
  for (int hr = 0; hr < L; ++hr)
    for (int bp = 0; bp < L; ++bp)
      for (int g = 0; g < 2; ++g) fx.obs_projection[idx(hr, bp, g)] = hr * L + bp;

  // Separation of the projected "wait" rows at the midpoint state.
  if (U == 2)
    fx.known["delta_sep"] =
        l2_joint_product_gap(vital_step(L, mid, 0, 0), vital_step(L, mid, 0, 1));
  fx.notes =
      "Two vitals drift on an LxL grid; a global latent type sets the untreated "
      "drift and an i.i.d. glucose flag. The projection hides glucose; the "
      "projected kernels still separate the types.";
  return fx;
}

// ---------------------------------------------------------------------------

Fixture two_mixture() {
  const int S = 4, U = 2, A = 2;
  Fixture fx;
  fx.id = "two_mixture";

  ConfoundedMdp m;
  m.S = S;
  m.U = U;
  m.A = A;
  m.H = 20;
  m.stationary = true;
  m.d0 = {0.0, 1.0, 0.0, 0.0};
  m.reward = {{0.0, 0.0}, {0.1, 0.1}, {0.3, 0.3}, {1.0, 1.0}};
  m.proc.kind = ConfounderProcess::Kind::Global;
  m.proc.p_u = {0.5, 0.5};

  const double d = std::sqrt(2.0) / 4.0;  // l2 gap of exactly 0.5 at the marked cell
  Vec K = make_table(S, U, A);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < A; ++a) {
        double* r = row_of(K, S, U, A, s, u, a);
        if (s == 0 && a == 0) {
          r[0] = (u == 0) ? 0.55 : 0.55 - d;
          r[1] = (u == 0) ? 0.25 : 0.25 + d;
          r[2] = 0.1;
          r[3] = 0.1;
          continue;
        }
        // Type 0 climbs faster under a0 everywhere except at the junction
        // s=2, where a1 carries its stronger climb; type 1 sees every drift
        // mirrored. Because a0 is the action the climbing type plays more
        // often, occupancy-weighted pooling keeps crediting a0 at the
        // junction even though a1 is the better action there, for the
        // climbing type and for the mixture alike.
        bool strong = (a == 0) != (s == 2);
        double up = strong ? 0.6 : 0.5, down = strong ? 0.15 : 0.2;
        if (u == 1) std::swap(up, down);  // type 1 drifts toward state 0
        r[std::min(s + 1, S - 1)] += up;
        r[std::max(s - 1, 0)] += down;
        r[s] += 1.0 - up - down;
      }
  m.kernel = {std::move(K)};
  m.validate();
  fx.mdps.push_back(std::move(m));

  Vec tab(static_cast<size_t>(S) * U * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u) {
      double p0 = (u == 0) ? 0.7 : 0.3;
      tab[(static_cast<size_t>(s) * U + u) * A + 0] = p0;
      tab[(static_cast<size_t>(s) * U + u) * A + 1] = 1.0 - p0;
    }
  Policy pb = Policy::confounded(S, U, A, {tab});
  pb.validate();
  fx.pi_b.push_back(std::move(pb));
  fx.pi_e = Policy::observed_uniform(S, A);

  fx.known["delta_sep"] = 0.5;
  fx.known["p_u0"] = 0.5;
  fx.notes =
      "4-state chain whose global latent type flips the drift direction and the "
      "behavior policy; cell (s=0, a=0) separates the two types by 0.5 in l2, "
      "and the junction s=2 reverses the better action so that pooled models "
      "rank the actions there incorrectly.";
  return fx;
}

// ---------------------------------------------------------------------------

Fixture make_fixture(const std::string& id) {
  std::string key = id;
  for (char& c : key) c = (c == '-') ? '_' : c;
  Fixture fx;
  if (key == "memoryless_pair" || key == "memoryless")
    fx = memoryless_pair();
  else if (key == "memory_chain")
    fx = memory_chain();
  else if (key == "alternating_pair" || key == "alternating")
    fx = alternating_pair();
  else if (key == "hypercube_pair" || key == "hypercube")
    fx = hypercube_pair();
  else if (key == "gridworld_iid" || key == "gridworld")
    fx = gridworld_iid();
  else if (key == "sepsis_toy" || key == "sepsis")
    fx = sepsis_toy();
  else if (key == "two_mixture")
    fx = two_mixture();
  else {
    std::ostringstream os;
    os << "unknown environment id '" << id << "'; known ids:";
    for (const std::string& k : fixture_ids()) os << ' ' << k;
    throw ConfigError(os.str());
  }
  double err = validate_fixture(fx);
  if (!(err <= 1e-6))
    throw ConfigError("fixture self-check failed for '" + fx.id +
                      "': a documented quantity could not be reproduced");
  return fx;
}

std::vector<std::string> fixture_ids() {
  return {"memoryless_pair", "memory_chain",  "alternating_pair",
          "hypercube_pair",  "gridworld_iid", "sepsis_toy"};
}

ConfoundedMdp pin_global_u(const ConfoundedMdp& m, int u) {
  if (m.proc.kind != ConfounderProcess::Kind::Global)
    throw ConfigError("pin_global_u: requires a global confounder");
  if (u < 0 || u >= m.U) throw ConfigError("pin_global_u: u out of range");
  ConfoundedMdp out;
  out.S = m.S;
  out.U = 1;
  out.A = m.A;
  out.H = m.H;
  out.stationary = m.stationary;
  out.d0 = m.d0;
  out.reward = m.reward;
  out.proc.kind = ConfounderProcess::Kind::Global;
  out.proc.p_u = {1.0};
  out.kernel.reserve(m.kernel.size());
  for (size_t t = 0; t < m.kernel.size(); ++t) {
    Vec K(static_cast<size_t>(m.S) * m.A * m.S);
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) {
        const double* src = m.row(static_cast<int>(t), s, u, a);
        std::copy(src, src + m.S,
                  K.data() + (static_cast<size_t>(s) * m.A + a) * static_cast<size_t>(m.S));
      }
    out.kernel.push_back(std::move(K));
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------

ConfoundedMdp with_horizon(const ConfoundedMdp& m, int H) {
  require(H >= 1, "with_horizon: H must be >= 1");
  bool stationary_tables =
      m.stationary && m.kernel.size() == 1 &&
      (m.proc.kind != ConfounderProcess::Kind::Memoryless || m.proc.p_u_s.size() == 1);
  if (!stationary_tables && H != m.H)
    throw ConfigError("with_horizon: model has per-step tables; cannot change H");
  ConfoundedMdp out = m;
  out.H = H;
  out.validate();
  return out;
}

int start_state(const ConfoundedMdp& m) {
  int best = 0;
  for (int s = 1; s < m.S; ++s)
    if (m.d0[s] > m.d0[best]) best = s;
  return best;
}

// ---------------------------------------------------------------------------

namespace {
Vec dirichlet(Rng& rng, int k) {
  Vec g(k);
  double tot = 0.0;
  for (int i = 0; i < k; ++i) {
    g[i] = -std::log(1.0 - rng.uniform()) + 1e-12;
    tot += g[i];
  }
  for (double& v : g) v /= tot;
  return g;
}
}  // namespace

Fixture random_confounded(const RandomSpec& spec) {
  require(spec.S >= 2 && spec.U >= 2 && spec.A >= 2, "random_confounded: need S,U,A >= 2");
  require(spec.H >= 2, "random_confounded: H must be >= 2");
  require(spec.gamma_cap >= 1.0, "random_confounded: gamma_cap must be >= 1");
  const int S = spec.S, U = spec.U, A = spec.A;
  Rng rng(splitmix64(spec.seed + 0x517CC1B727220A95ULL));

  Fixture fx;
  fx.id = "random_confounded";

  ConfoundedMdp m;
  m.S = S;
  m.U = U;
  m.A = A;
  m.H = spec.H;
  m.stationary = true;
  m.d0 = dirichlet(rng, S);
  m.reward = Mat(S, Vec(A));
  double rmin = 1.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      m.reward[s][a] = rng.uniform();
      rmin = std::min(rmin, m.reward[s][a]);
    }
  if (spec.shift_rewards_to_zero)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) m.reward[s][a] -= rmin;
  m.proc.kind = ConfounderProcess::Kind::Memoryless;
  m.proc.p_u_s = {Mat()};
  for (int s = 0; s < S; ++s) m.proc.p_u_s[0].push_back(dirichlet(rng, U));

  Vec K = make_table(S, U, A);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < A; ++a) {
        Vec row = dirichlet(rng, S);
        std::copy(row.begin(), row.end(), row_of(K, S, U, A, s, u, a));
      }
  m.kernel = {std::move(K)};
  m.validate();

  Mat pe_rows;
  for (int s = 0; s < S; ++s) pe_rows.push_back(dirichlet(rng, A));
  Vec pe_tab(static_cast<size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) pe_tab[static_cast<size_t>(s) * A + a] = pe_rows[s][a];
  fx.pi_e = Policy::observed(S, A, {pe_tab});

  // Base observed policy plus a confounder tilt, shrunk until the implied
  // odds-ratio budget fits under gamma_cap.
  Mat base;
  for (int s = 0; s < S; ++s) base.push_back(dirichlet(rng, A));
  Vec tilt(static_cast<size_t>(S) * U * A);
  for (double& t : tilt) t = rng.uniform(-1.0, 1.0);

  auto build_pb = [&](double kappa) {
    Vec tab(static_cast<size_t>(S) * U * A, 0.0);
    for (int s = 0; s < S; ++s)
      for (int u = 0; u < U; ++u) {
        double tot = 0.0;
        for (int a = 0; a < A; ++a) {
          size_t k = (static_cast<size_t>(s) * U + u) * A + a;
          tab[k] = base[s][a] * std::exp(kappa * tilt[k]);
          tot += tab[k];
        }
        for (int a = 0; a < A; ++a) tab[(static_cast<size_t>(s) * U + u) * A + a] /= tot;
      }
    return Policy::confounded(S, U, A, {tab});
  };

  double kappa = 0.5, g = 0.0;
  Policy pb = build_pb(kappa);
  for (int it = 0; it < 80; ++it) {
    g = true_gamma(m, pb);
    if (g <= spec.gamma_cap) break;
    kappa *= 0.6;
    if (kappa < 1e-9) kappa = 0.0;
    pb = build_pb(kappa);
    if (kappa == 0.0) {
      g = true_gamma(m, pb);
      break;
    }
  }
  pb.validate();
  fx.known["gamma_star"] = g;
  fx.mdps.push_back(std::move(m));
  fx.pi_b.push_back(std::move(pb));
  fx.notes = "randomly generated instance with a capped odds-ratio budget";
  return fx;
}

// ---------------------------------------------------------------------------

double validate_fixture(const Fixture& fx) {
  double worst = 0.0;
  auto check = [&](const char* key, double recomputed) {
    auto it = fx.known.find(key);
    if (it == fx.known.end()) throw ConfigError(std::string("fixture missing key ") + key);
    worst = std::max(worst, std::abs(recomputed - it->second));
  };

  if (fx.id == "memoryless_pair") {
    ExactValue e1 = exact_value(fx.mdps[0], fx.pi_e), e2 = exact_value(fx.mdps[1], fx.pi_e);
    check("v_m1", e1.v);
    check("v_m2", e2.v);
    check("value_gap", std::abs(e1.v - e2.v));
    Policy m1 = marginalize_policy(fx.mdps[0], fx.pi_b[0]);
    Policy m2 = marginalize_policy(fx.mdps[1], fx.pi_b[1]);
    check("marginal_a0", m1.p(0, start_state(fx.mdps[0]), 0, 0));
    check("gamma_star", true_gamma(fx.mdps[0], fx.pi_b[0]));
    check("gamma_star", true_gamma(fx.mdps[1], fx.pi_b[1]));
    // Joint observed one-step tables must agree everywhere: the u-averaged
    // policy and the confounded data-limit kernel, at every step and state.
    std::vector<Vec> k1 = behavior_kernel(fx.mdps[0], fx.pi_b[0]);
    std::vector<Vec> k2 = behavior_kernel(fx.mdps[1], fx.pi_b[1]);
    double jd = 0.0;
    for (int t = 0; t < fx.mdps[0].H; ++t)
      for (int s = 0; s < fx.mdps[0].S; ++s)
        for (int a = 0; a < fx.mdps[0].A; ++a) {
          jd = std::max(jd, std::abs(m1.p(t, s, 0, a) - m2.p(t, s, 0, a)));
          if (t + 1 < fx.mdps[0].H)
            for (int s2 = 0; s2 < fx.mdps[0].S; ++s2) {
              size_t k = (static_cast<size_t>(s) * fx.mdps[0].A + a) * fx.mdps[0].S + s2;
              jd = std::max(jd, std::abs(k1[t][k] - k2[t][k]));
            }
        }
    check("joint_diff", jd);
  } else if (fx.id == "memory_chain") {
    check("v_true", exact_value(fx.mdps[0], fx.pi_e).v);
    check("tau_a", concentrability(fx.mdps[0], fx.pi_b[0], fx.pi_e).tau_a);
    check("fqe_cap", 2.0 * std::log2(static_cast<double>(fx.mdps[0].H)) + 9.0);
  } else if (fx.id == "alternating_pair") {
    check("v_m1", exact_value(fx.mdps[0], fx.pi_e).v);
    check("v_m2", exact_value(fx.mdps[1], fx.pi_e).v);
    int H = fx.mdps[0].H;
    check("reward_scale", (1.0 - std::pow(2.0, 1.0 - H)) * (H - 1.0) /
                              (H - 3.0 + std::pow(2.0, 2.0 - H)));
    std::map<std::string, double> l1 = observed_law(fx.mdps[0], fx.pi_b[0]);
    std::map<std::string, double> l2 = observed_law(fx.mdps[1], fx.pi_b[1]);
    double ld = 0.0;
    for (const auto& [k, v] : l1) {
      auto it = l2.find(k);
      ld = std::max(ld, std::abs(v - (it == l2.end() ? 0.0 : it->second)));
    }
    for (const auto& [k, v] : l2)
      if (!l1.count(k)) ld = std::max(ld, std::abs(v));
    check("law_max_diff", ld);
    check("gamma_unbounded", std::isinf(true_gamma(fx.mdps[0], fx.pi_b[0])) ? 1.0 : 0.0);
  } else if (fx.id == "hypercube_pair") {
    int ones = (fx.mdps[0].S - 1) - 1;
    check("v_ones_m1", exact_value(fx.mdps[0], fx.pi_e).v1[ones]);
    check("v_ones_m2", exact_value(fx.mdps[1], fx.pi_e).v1[ones]);
    check("gap_ones", std::abs(exact_value(fx.mdps[0], fx.pi_e).v1[ones] -
                               exact_value(fx.mdps[1], fx.pi_e).v1[ones]));
  } else if (fx.id == "gridworld_iid" || fx.id == "random_confounded") {
    check("gamma_star", true_gamma(fx.mdps[0], fx.pi_b[0]));
  } else if (fx.id == "sepsis_toy") {
    if (!fx.known.count("delta_sep")) return worst;  // single-type variant
    // Recompute the projected-kernel separation at the midpoint "wait" cell
    // from the assembled tables rather than the construction formula.
    const ConfoundedMdp& m = fx.mdps[0];
    int L = static_cast<int>(std::lround(std::sqrt(m.S / 2.0)));
    int mid = (L - 1) / 2, s_star = (mid * L + mid) * 2;
    int n_obs = *std::max_element(fx.obs_projection.begin(), fx.obs_projection.end()) + 1;
    Vec pr0(n_obs, 0.0), pr1(n_obs, 0.0);
    const double* r0 = m.row(0, s_star, 0, 0);
    const double* r1 = m.row(0, s_star, 1, 0);
    for (int s2 = 0; s2 < m.S; ++s2) {
      pr0[fx.obs_projection[s2]] += r0[s2];
      pr1[fx.obs_projection[s2]] += r1[s2];
    }
    double acc = 0.0;
    for (int o = 0; o < n_obs; ++o) acc += sqr(pr0[o] - pr1[o]);
    check("delta_sep", std::sqrt(acc));
  } else if (fx.id == "two_mixture") {
    const ConfoundedMdp& m = fx.mdps[0];
    double acc = 0.0;
    const double* r0 = m.row(0, 0, 0, 0);
    const double* r1 = m.row(0, 0, 1, 0);
    for (int s2 = 0; s2 < m.S; ++s2) acc += sqr(r0[s2] - r1[s2]);
    check("delta_sep", std::sqrt(acc));
    check("p_u0", m.proc.p_u[0]);
  } else {
    throw ConfigError("validate_fixture: unknown fixture id " + fx.id);
  }
  return worst;
}

// ---------------------------------------------------------------------------

double two_sample_chi2(const std::vector<long long>& a, const std::vector<long long>& b) {
  if (a.size() != b.size()) throw ConfigError("two_sample_chi2: size mismatch");
  double n1 = 0.0, n2 = 0.0;
  for (long long v : a) n1 += static_cast<double>(v);
  for (long long v : b) n2 += static_cast<double>(v);
  if (n1 <= 0.0 || n2 <= 0.0) throw ConfigError("two_sample_chi2: empty sample");
  double x2 = 0.0;
  int kept = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double tot = static_cast<double>(a[i] + b[i]);
    if (tot <= 0.0) continue;
    ++kept;
    double e1 = n1 * tot / (n1 + n2), e2 = n2 * tot / (n1 + n2);
    x2 += sqr(a[i] - e1) / e1 + sqr(b[i] - e2) / e2;
  }
  if (kept < 2) return 1.0;
  boost::math::chi_squared_distribution<double> dist(kept - 1);
  return boost::math::cdf(boost::math::complement(dist, x2));
}

}  // namespace confope
