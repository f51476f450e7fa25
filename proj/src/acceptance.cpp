// Acceptance battery: one end-to-end check per load-bearing guarantee of the
// library, each reported as a single PASS/FAIL line. Every expected value is
// either computed by an independent oracle inside the criterion or pinned as
// a literal with its tolerance next to it.

#include "confope/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "confope/cluster.hpp"
#include "confope/common.hpp"
#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"
#include "confope/model_based.hpp"
#include "confope/ope.hpp"
#include "confope/policy_opt.hpp"
#include "confope/rng.hpp"
#include "confope/sensitivity.hpp"

namespace confope {
namespace {

using Clock = std::chrono::steady_clock;

double secs(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = false;
  std::string detail;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

Vec dirichlet_vec(Rng& rng, int k) {
  Vec g(k);
  double tot = 0.0;
  for (int i = 0; i < k; ++i) {
    g[i] = -std::log(1.0 - rng.uniform()) + 1e-12;
    tot += g[i];
  }
  for (double& v : g) v /= tot;
  return g;
}

double median10(Vec v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[4] + v[5]);
}

double logsumexp2(double a, double b) {
  double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// ---- criterion 1 ---------------------------------------------------------
// The two-state pair: the per-step observed (s, a, s') tables of both
// (model, behavior) pairs agree to machine precision, while the target
// values differ by exactly 2*eps*H = 2. The oracle here is a forward pass
// over observed-state occupancies, independent of the library's own
// observed-law code.
Check crit1() {
  auto t0 = Clock::now();
  Fixture fx = memoryless_pair(0.1, 0.0, 0.25, 0.75, 10);

  auto step_tables = [](const ConfoundedMdp& m, const Policy& pb) {
    std::vector<Vec> out;  // per step: [(s*A+a)*S+s2], last step [s*A+a]
    Vec occ = m.d0;
    for (int h = 0; h < m.H; ++h) {
      const Mat& pu = m.proc.p_u_s[m.proc.p_u_s.size() == 1 ? 0 : static_cast<size_t>(h)];
      bool last = (h + 1 == m.H);
      Vec tab(last ? static_cast<size_t>(m.S) * m.A
                   : static_cast<size_t>(m.S) * m.A * m.S,
              0.0);
      Vec nxt(m.S, 0.0);
      for (int s = 0; s < m.S; ++s) {
        if (occ[s] <= 0.0) continue;
        for (int u = 0; u < m.U; ++u)
          for (int a = 0; a < m.A; ++a) {
            double w = occ[s] * pu[s][u] * pb.p(h, s, u, a);
            if (w <= 0.0) continue;
            if (last) {
              tab[static_cast<size_t>(s) * m.A + a] += w;
              continue;
            }
            const double* row = m.row(h, s, u, a);
            for (int s2 = 0; s2 < m.S; ++s2) {
              tab[(static_cast<size_t>(s) * m.A + a) * m.S + s2] += w * row[s2];
              nxt[s2] += w * row[s2];
            }
          }
      }
      out.push_back(std::move(tab));
      occ = nxt;
    }
    return out;
  };

  std::vector<Vec> t1 = step_tables(fx.mdps[0], fx.pi_b[0]);
  std::vector<Vec> t2 = step_tables(fx.mdps[1], fx.pi_b[1]);
  double law_diff = 0.0;
  for (size_t h = 0; h < t1.size(); ++h)
    for (size_t i = 0; i < t1[h].size(); ++i)
      law_diff = std::max(law_diff, std::abs(t1[h][i] - t2[h][i]));

  double v1 = exact_value(fx.mdps[0], fx.pi_e).v;
  double v2 = exact_value(fx.mdps[1], fx.pi_e).v;
  double gap = std::abs(v1 - v2);
  double el = secs(t0);

  bool ok = law_diff <= 1e-12 && std::abs(gap - 2.0) <= 1e-9 && el < 1.0;
  return {ok, "law diff " + num(law_diff) + ", value gap " + num(gap) + " (want 2), " +
                  num(el) + " s"};
}

// ---- criterion 2 ---------------------------------------------------------
// History-dependent confounding: the streak chain is worth H exactly, but
// the plug-in estimator fed the one-step observed tables is capped near
// 2*log2(H) + 9, so at H = 256 it misses at least 80% of the value.
Check crit2() {
  auto t0 = Clock::now();
  bool ok = true;
  std::string d;
  for (int H : {16, 64, 256}) {
    Fixture fx = memory_chain(H);
    double v_true = exact_value(fx.mdps[0], fx.pi_e).v;
    Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
    double v_fqe = fqe(m, fx.pi_e).v1[0];
    double cap = fx.known.at("fqe_cap");
    ok = ok && std::abs(v_true - H) <= 1e-9 && v_fqe <= cap + 1e-9;
    if (H == 256) {
      double missed = (v_true - v_fqe) / v_true;
      ok = ok && missed >= 0.8;
      d = "H=256: true 256, plug-in " + num(v_fqe) + " (cap " + num(cap) +
          "), missing " + num(100.0 * missed) + "%";
    }
  }
  double el = secs(t0);
  ok = ok && el < 5.0;
  return {ok, d + ", " + num(el) + " s"};
}

// ---- criterion 3 ---------------------------------------------------------
// On 100 random instances whose odds-ratio budget is capped at 1 + eps, the
// plug-in value error at every initial state stays inside the two-sided
// envelope implied by a per-row L1 model error of eps.
Check crit3() {
  const double eps_cycle[3] = {0.02, 0.05, 0.1};
  int pass = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    double eps = eps_cycle[i % 3];
    RandomSpec spec;
    spec.S = 2 + (i % 3);
    spec.U = 2 + ((i / 3) % 3);
    spec.A = 2 + ((i / 9) % 3);
    spec.H = 8;
    spec.gamma_cap = 1.0 + eps;
    spec.seed = 1000 + static_cast<uint64_t>(i);
    Fixture fx = random_confounded(spec);
    const ConfoundedMdp& mdp = fx.mdps[0];

    Model m = analytic_model(mdp, fx.pi_b[0], /*pooled=*/true);
    ValueReport rep = fqe(m, fx.pi_e);
    ExactValue ex = exact_value(mdp, fx.pi_e);
    TheoryEnvelopes env = theory_envelopes(eps, mdp.H, m.reward_range());

    bool inside = true;
    for (int s = 0; s < mdp.S; ++s) {
      double err = ex.v1[s] - rep.v1[s];
      inside = inside && err >= env.fqe_lo - 1e-9 && err <= env.fqe_hi + 1e-9;
      worst_slack = std::min({worst_slack, err - env.fqe_lo, env.fqe_hi - err});
    }
    pass += inside ? 1 : 0;
  }
  return {pass == 100,
          std::to_string(pass) + "/100 instances inside, min slack " + num(worst_slack)};
}

// ---- criterion 4 ---------------------------------------------------------
// Gridworld, analytic data limit: for every gamma the estimates are ordered
// naive <= cfqe = relaxation <= pgd <= true value; pgd strictly improves on
// cfqe somewhere; and wherever the envelope is wide enough to contain the
// causal kernel (gamma >= gamma*), the cfqe pessimism gap obeys the
// quadratic-in-horizon cap.
Check crit4() {
  Fixture fx = make_fixture("gridworld");
  const ConfoundedMdp& mdp = fx.mdps[0];
  const int s0 = 13;
  double v_true = exact_value(mdp, fx.pi_e).v1[s0];
  double gstar = fx.known.at("gamma_star");

  Model m = analytic_model(mdp, fx.pi_b[0], /*pooled=*/true);
  ValueReport rf = fqe(m, fx.pi_e);

  bool chain_ok = true, cap_ok = true, strict = false;
  double best_gain = 0.0, best_gamma = 0.0;
  const double gammas[6] = {1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
  for (int gi = 0; gi < 6; ++gi) {
    double g = gammas[gi];
    Uncertainty tu = build_uncertainty(m, g);
    check_feasible(tu);
    ValueReport rc = cfqe(m, fx.pi_e, tu);
    ValueReport rm = mb_relaxation(m, fx.pi_e, tu);
    double eps = envelope_l1_radius(m, tu);
    ValueReport rn = naive_lb(m, fx.pi_e, eps);
    PgdOptions po;
    po.iters = 400;
    po.restarts = 3;
    po.seed = 7 + static_cast<uint64_t>(gi);
    double pg = mb_pgd(m, fx.pi_e, tu, s0, po).v_min;

    chain_ok = chain_ok && rn.v1[s0] <= rc.v1[s0] + 1e-9 &&
               std::abs(rc.v1[s0] - rm.v1[s0]) <= 1e-9 && rm.v1[s0] <= pg + 1e-9 &&
               pg <= v_true + 1e-6;
    if (pg > rc.v1[s0] + 1e-6) {
      strict = true;
      if (pg - rc.v1[s0] > best_gain) {
        best_gain = pg - rc.v1[s0];
        best_gamma = g;
      }
    }
    if (g >= gstar) {
      TheoryEnvelopes env = theory_envelopes(eps, mdp.H, m.reward_range());
      double gap = v_true - rc.v1[s0];
      cap_ok = cap_ok && gap >= -1e-9 && gap <= env.cfqe_cap + 1e-9;
    }
    // At gamma = 1 every pessimistic estimate collapses onto the plug-in.
    if (g == 1.0) chain_ok = chain_ok && std::abs(rc.v1[s0] - rf.v1[s0]) <= 1e-9;
  }
  bool ok = chain_ok && cap_ok && strict;
  return {ok, std::string("ordering ") + (chain_ok ? "ok" : "BROKEN") + ", cap " +
                  (cap_ok ? "ok" : "BROKEN") + ", pgd beats cfqe by " + num(best_gain) +
                  " at gamma " + num(best_gamma)};
}

// ---- criterion 5 ---------------------------------------------------------
// With gamma = 1 the envelope is a single point, so cfqe, the relaxation,
// and the kernel search all reproduce the plug-in value exactly.
Check crit5() {
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    RandomSpec spec;
    spec.S = 2 + (i % 3);
    spec.U = 2;
    spec.A = 2;
    spec.H = 6;
    spec.gamma_cap = 1.3;
    spec.seed = 2000 + static_cast<uint64_t>(i);
    Fixture fx = random_confounded(spec);
    Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
    Uncertainty tu = build_uncertainty(m, 1.0);
    check_feasible(tu);
    ValueReport rf = fqe(m, fx.pi_e);
    ValueReport rc = cfqe(m, fx.pi_e, tu);
    ValueReport rm = mb_relaxation(m, fx.pi_e, tu);
    for (int s = 0; s < fx.mdps[0].S; ++s) {
      worst = std::max(worst, std::abs(rc.v1[s] - rf.v1[s]));
      worst = std::max(worst, std::abs(rm.v1[s] - rf.v1[s]));
    }
    int s0 = start_state(fx.mdps[0]);
    PgdOptions po;
    po.iters = 50;
    double pg = mb_pgd(m, fx.pi_e, tu, s0, po).v_min;
    worst = std::max(worst, std::abs(pg - rf.v1[s0]));
  }
  return {worst <= 1e-8, "max deviation from plug-in " + num(worst) + " over 20 instances"};
}

// ---- criterion 6 ---------------------------------------------------------
// The inner optimizers against independent oracles: the greedy row minimizer
// against vertex enumeration, the box-simplex projection against a grid, and
// the kernel search against exhaustive search on two-state instances.
Check crit6() {
  Rng rng(splitmix64(61));

  // (a) row LP: an optimal vertex has at most one coordinate strictly
  // between its bounds, so enumerate that coordinate and the lo/hi split of
  // the rest.
  double worst_a = 0.0;
  for (int it = 0; it < 1000; ++it) {
    int k = 2 + it % 5;
    Vec phat = dirichlet_vec(rng, k);
    double pi = rng.uniform(0.05, 0.95), g = rng.uniform(1.05, 3.0);
    double alpha = pi + (1.0 - pi) / g, beta = g + pi * (1.0 - g);
    Vec lo(k), hi(k), cost(k);
    for (int i = 0; i < k; ++i) {
      lo[i] = alpha * phat[i];
      hi[i] = std::min(beta * phat[i], 1.0);
      cost[i] = rng.uniform();
    }
    Vec x = knapsack_min_row(cost, lo, hi);
    double got = 0.0, sum = 0.0;
    bool feas = true;
    for (int i = 0; i < k; ++i) {
      got += cost[i] * x[i];
      sum += x[i];
      feas = feas && x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12;
    }
    feas = feas && std::abs(sum - 1.0) <= 1e-9;

    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j)
      for (int mask = 0; mask < (1 << (k - 1)); ++mask) {
        double mass = 0.0, val = 0.0;
        int b = 0;
        for (int i = 0; i < k; ++i) {
          if (i == j) continue;
          double xi = ((mask >> b) & 1) ? hi[i] : lo[i];
          mass += xi;
          val += cost[i] * xi;
          ++b;
        }
        double xj = 1.0 - mass;
        if (xj < lo[j] - 1e-12 || xj > hi[j] + 1e-12) continue;
        best = std::min(best, val + cost[j] * xj);
      }
    worst_a = std::max(worst_a, std::abs(got - best));
    if (!feas) worst_a = std::max(worst_a, 1.0);
  }

  // (b) projection vs. a 2-coordinate grid on 3-dimensional boxes.
  double worst_b = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vec phat = dirichlet_vec(rng, 3);
    double pi = rng.uniform(0.2, 0.8), g = rng.uniform(1.3, 2.5);
    double alpha = pi + (1.0 - pi) / g, beta = g + pi * (1.0 - g);
    Vec lo(3), hi(3), y(3);
    for (int i = 0; i < 3; ++i) {
      lo[i] = alpha * phat[i];
      hi[i] = std::min(beta * phat[i], 1.0);
      y[i] = rng.uniform(-0.5, 1.5);
    }
    Vec xp = project_box_simplex(y, lo, hi);
    double obj_p = 0.0, sum = 0.0;
    bool feas = true;
    for (int i = 0; i < 3; ++i) {
      obj_p += (xp[i] - y[i]) * (xp[i] - y[i]);
      sum += xp[i];
      feas = feas && xp[i] >= lo[i] - 1e-9 && xp[i] <= hi[i] + 1e-9;
    }
    feas = feas && std::abs(sum - 1.0) <= 1e-9;

    double obj_g = std::numeric_limits<double>::infinity();
    for (double x1 = lo[0]; x1 <= hi[0] + 1e-12; x1 += 1e-3)
      for (double x2 = lo[1]; x2 <= hi[1] + 1e-12; x2 += 1e-3) {
        double x3 = 1.0 - x1 - x2;
        if (x3 < lo[2] - 1e-9 || x3 > hi[2] + 1e-9) continue;
        double o = (x1 - y[0]) * (x1 - y[0]) + (x2 - y[1]) * (x2 - y[1]) +
                   (x3 - y[2]) * (x3 - y[2]);
        obj_g = std::min(obj_g, o);
      }
    worst_b = std::max(worst_b, obj_p - obj_g);
    if (!feas) worst_b = std::max(worst_b, 1.0);
  }

  // (c) kernel search vs. exhaustive grid on two-state instances.
  double worst_c = 0.0;
  for (int i = 0; i < 20; ++i) {
    RandomSpec spec;
    spec.S = 2;
    spec.U = 2;
    spec.A = 2;
    spec.H = 3;
    spec.gamma_cap = 1.6;
    spec.seed = 3000 + static_cast<uint64_t>(i);
    Fixture fx = random_confounded(spec);
    Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
    Uncertainty tu = build_uncertainty(m, 1.5);
    check_feasible(tu);
    int s0 = start_state(fx.mdps[0]);
    PgdOptions po;
    po.iters = 400;
    po.restarts = 4;
    po.seed = static_cast<uint64_t>(i);
    double pg = mb_pgd(m, fx.pi_e, tu, s0, po).v_min;
    double bf = mb_bruteforce(m, fx.pi_e, tu, s0, 0.025);
    worst_c = std::max(worst_c, std::abs(pg - bf));
  }

  bool ok = worst_a <= 1e-9 && worst_b <= 1e-9 && worst_c <= 1e-2;
  return {ok, "row-min gap " + num(worst_a) + ", projection gap " + num(worst_b) +
                  ", grid-search gap " + num(worst_c)};
}

// ---- criterion 7 ---------------------------------------------------------
// Reverse-accumulation kernel and policy gradients against central finite
// differences. The value is multilinear in the kernel entries, so the FD
// check perturbs raw entries without renormalizing.
Check crit7() {
  Rng rng(splitmix64(71));
  const int S = 3, A = 2, H = 4;
  const double h = 1e-5;
  double worst_p = 0.0, worst_t = 0.0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
  };

  for (int it = 0; it < 50; ++it) {
    Vec P(static_cast<size_t>(S) * A * S), r(static_cast<size_t>(S) * A);
    for (int sa = 0; sa < S * A; ++sa) {
      Vec row = dirichlet_vec(rng, S);
      for (int s2 = 0; s2 < S; ++s2) P[static_cast<size_t>(sa) * S + s2] = row[s2];
      r[sa] = rng.uniform();
    }
    int s0 = it % S;

    Vec tab(static_cast<size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
      Vec row = dirichlet_vec(rng, A);
      for (int a = 0; a < A; ++a) tab[static_cast<size_t>(s) * A + a] = row[a];
    }
    Policy pol = Policy::observed(S, A, {tab});
    MbEval ge = mb_value_grad(P, r, pol, S, A, H, s0);
    for (size_t i = 0; i < P.size(); ++i) {
      Vec Pp = P, Pm = P;
      Pp[i] += h;
      Pm[i] -= h;
      double fd = (mb_value(Pp, r, pol, S, A, H, s0) - mb_value(Pm, r, pol, S, A, H, s0)) /
                  (2.0 * h);
      worst_p = std::max(worst_p, rel(ge.dP[i], fd));
    }

    Mat theta(S, Vec(A));
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) theta[s][a] = rng.uniform(-1.0, 1.0);
    PolicyEval pe = value_policy_grad(P, r, Policy::softmax(theta), S, A, H, s0);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        Mat tp = theta, tm = theta;
        tp[s][a] += h;
        tm[s][a] -= h;
        double fd = (mb_value(P, r, Policy::softmax(tp), S, A, H, s0) -
                     mb_value(P, r, Policy::softmax(tm), S, A, H, s0)) /
                    (2.0 * h);
        worst_t = std::max(worst_t, rel(pe.dtheta[s][a], fd));
      }
  }
  bool ok = worst_p <= 1e-5 && worst_t <= 1e-5;
  return {ok, "kernel-grad rel err " + num(worst_p) + ", policy-grad rel err " + num(worst_t)};
}

// ---- criterion 8 ---------------------------------------------------------
// The worst-case bound computed from data approaches its infinite-data value
// as n grows: the median absolute gap over 10 seeds shrinks from n = 100 to
// n = 10000 and ends small relative to the value scale.
Check crit8() {
  bool ok = true;
  std::string d;
  for (int inst = 0; inst < 2; ++inst) {
    RandomSpec spec;
    spec.S = inst == 0 ? 3 : 4;
    spec.U = inst == 0 ? 2 : 3;
    spec.A = 2;
    spec.H = 8;
    spec.gamma_cap = 2.0;
    spec.seed = inst == 0 ? 11 : 22;
    Fixture fx = random_confounded(spec);
    const ConfoundedMdp& mdp = fx.mdps[0];
    int s0 = start_state(mdp);

    Model ma = analytic_model(mdp, fx.pi_b[0], /*pooled=*/true);
    Uncertainty tua = build_uncertainty(ma, 2.0);
    check_feasible(tua);
    PgdOptions strong;
    strong.iters = 500;
    strong.restarts = 4;
    strong.seed = 5;
    double ref = mb_pgd(ma, fx.pi_e, tua, s0, strong).v_min;

    const int ns[3] = {100, 1000, 10000};
    double med[3];
    for (int ni = 0; ni < 3; ++ni) {
      Vec errs;
      for (int rep = 0; rep < 10; ++rep) {
        Dataset ds = simulate(mdp, fx.pi_b[0], ns[ni], mdp.H,
                              8000 + 1000 * static_cast<uint64_t>(ni) + rep);
        Model me = empirical_model(ds, /*pooled=*/true);
        Uncertainty tue = build_uncertainty(me, 2.0);
        check_feasible(tue);
        PgdOptions po;
        po.iters = 300;
        po.restarts = 2;
        po.seed = 100 + static_cast<uint64_t>(rep);
        errs.push_back(std::abs(mb_pgd(me, fx.pi_e, tue, s0, po).v_min - ref));
      }
      med[ni] = median10(errs);
    }
    double scale = 0.05 * ma.reward_range() * mdp.H;
    bool inst_ok = med[1] <= med[0] * 1.10 + 1e-12 && med[2] <= med[1] * 1.10 + 1e-12 &&
                   med[2] <= med[0] + 1e-12 && med[2] <= scale;
    ok = ok && inst_ok;
    d += (inst ? "; " : "") + std::string("inst") + std::to_string(inst) + " medians " +
         num(med[0]) + "/" + num(med[1]) + "/" + num(med[2]);
  }
  return {ok, d};
}

// ---- criterion 9 ---------------------------------------------------------
// Episode-level two-component mixture, trajectories long relative to the
// mixing time: single-linkage recovers the components exactly in >= 29/30
// runs at n = 200; at n = 2000 the clustered estimate lands within 5% of the
// true mixture value in >= 27/30 runs while pooling everything misses by
// more than 20%.
Check crit9() {
  auto t0 = Clock::now();
  Fixture fx = make_fixture("two_mixture");
  const ConfoundedMdp& mdp = fx.mdps[0];
  MixingReport mix = mixing_time_overall(mdp, fx.pi_b[0]);
  int tmix = std::max(1, mix.t_mix);

  // Recovery phase: horizon scaled as 20 * t_mix * log n at n = 200. The
  // distance floor of 20 visits per cell keeps the unbiased inner-product
  // correction from dragging cross-component distances negative.
  int rec_ok = 0;
  const int Hrec = static_cast<int>(std::ceil(20.0 * tmix * std::log(200.0)));
  {
    ConfoundedMdp big = with_horizon(mdp, Hrec);
    for (int t = 0; t < 30; ++t) {
      Dataset ds = simulate(big, fx.pi_b[0], 200, Hrec, 9000 + static_cast<uint64_t>(t));
      ClusterOptions co;
      co.K = 2;
      co.min_count = 20;
      co.seed = static_cast<uint64_t>(t);
      Clustering cl = cluster_single_linkage(ds, co);
      if (permutation_accuracy(cl.assign, true_labels(ds), 2) == 1.0) ++rec_ok;
    }
  }

  // Evaluation contrast at n = 2000 on the deterministic second-action
  // target: per-component models price it correctly, while the pooled model
  // inherits the drifts of whichever component dominates each row's
  // occupancy and misses by a factor of two.
  int ope_ok = 0, obl_ok = 0;
  const int Hope = 100;
  {
    ConfoundedMdp big = with_horizon(mdp, Hope);
    Vec tab(static_cast<size_t>(big.S) * big.A, 0.0);
    for (int s = 0; s < big.S; ++s) tab[static_cast<size_t>(s) * big.A + 1] = 1.0;
    Policy target = Policy::observed(big.S, big.A, {tab});
    double v_true = exact_value(big, target).v1[1];
    for (int t = 0; t < 30; ++t) {
      Dataset ds = simulate(big, fx.pi_b[0], 2000, Hope, 9100 + static_cast<uint64_t>(t));
      ClusterOptions co;
      co.K = 2;
      // With two million pairs a single freak low edge chains the two
      // components together under single linkage; a floor of 25 shared
      // visits leaves every cross-component distance undefined.
      co.min_count = 25;
      co.seed = static_cast<uint64_t>(t);
      ClusterOpeReport rep = clustering_ope(ds, target, co, /*use_em=*/false, /*s0=*/1);
      if (std::abs(rep.v_hat - v_true) / std::abs(v_true) <= 0.05) ++ope_ok;
      Model pooled = empirical_model(ds, /*pooled=*/true);
      double v_obl = fqe(pooled, target, 1).v1[1];
      if (std::abs(v_obl - v_true) / std::abs(v_true) > 0.20) ++obl_ok;
    }
  }
  double el = secs(t0);
  bool ok = rec_ok >= 29 && ope_ok >= 27 && obl_ok >= 27 && el < 120.0;
  return {ok, "t_mix " + std::to_string(tmix) + ", exact recovery " + std::to_string(rec_ok) +
                  "/30 at H=" + std::to_string(Hrec) + ", clustered within 5%: " +
                  std::to_string(ope_ok) + "/30, pooled off by >20%: " + std::to_string(obl_ok) +
                  "/30 at H=" + std::to_string(Hope) + ", " + num(el) + " s"};
}

// ---- criterion 10 --------------------------------------------------------
// The hypercube pair at horizon 2: per-trajectory marginal likelihoods agree
// across the two models to machine precision (so no clustering procedure
// can beat chance), clustering indeed stays near chance, and yet the values
// from the all-ones corner differ by 0.97.
Check crit10() {
  Mat p = {{0.99, 0.98}, {0.01, 0.02}};
  Fixture fx = hypercube_pair(8, p, 2);
  const ConfoundedMdp& m1 = fx.mdps[0];
  const ConfoundedMdp& m2 = fx.mdps[1];

  double lik_diff = 0.0;
  {
    Dataset ds = simulate(m1, fx.pi_b[0], 200, 2, 777);
    for (const Trajectory& tr : ds.trajs) {
      double l1 = logsumexp2(std::log(0.5) + loglik_given_u(m1, fx.pi_b[0], tr.s, tr.a, 0),
                             std::log(0.5) + loglik_given_u(m1, fx.pi_b[0], tr.s, tr.a, 1));
      double l2 = logsumexp2(std::log(0.5) + loglik_given_u(m2, fx.pi_b[1], tr.s, tr.a, 0),
                             std::log(0.5) + loglik_given_u(m2, fx.pi_b[1], tr.s, tr.a, 1));
      lik_diff = std::max(lik_diff, std::abs(l1 - l2));
    }
  }

  double err_sum = 0.0;
  for (int t = 0; t < 30; ++t) {
    Dataset ds = simulate(m1, fx.pi_b[0], 200, 2, 10000 + static_cast<uint64_t>(t));
    ClusterOptions co;
    co.K = 2;
    co.min_count = 2;
    co.seed = static_cast<uint64_t>(t);
    Clustering cl = cluster_single_linkage(ds, co);
    err_sum += 1.0 - permutation_accuracy(cl.assign, true_labels(ds), 2);
  }
  double mean_err = err_sum / 30.0;

  int ones = (m1.S - 1) - 1;
  double gap = exact_value(m1, fx.pi_e).v1[ones] - exact_value(m2, fx.pi_e).v1[ones];
  bool gap_ok = std::abs(gap - fx.known.at("gap_ones")) <= 1e-9 &&
                std::abs(fx.known.at("gap_ones") - 0.97) <= 1e-12;

  bool ok = lik_diff <= 1e-12 && mean_err >= 0.4 && gap_ok;
  return {ok, "trajectory-likelihood diff " + num(lik_diff) + ", mean label error " +
                  num(mean_err) + " (chance 0.5), corner value gap " + num(gap)};
}

// ---- criterion 11 --------------------------------------------------------
// The alternation pair: exactly equal observed laws at every horizon, target
// value (1 - 2^(1-H)) * (H - 1) = 8.982421875 in one model and 0 in the
// other, and the plug-in estimator--fed data in which the behavior policy
// never breaks the alternation--reports 0.
Check crit11() {
  Fixture fx = make_fixture("alternating");
  const ConfoundedMdp& m1 = fx.mdps[0];

  std::map<std::string, double> l1 = observed_law(m1, fx.pi_b[0]);
  std::map<std::string, double> l2 = observed_law(fx.mdps[1], fx.pi_b[1]);
  double law_diff = 0.0;
  for (const auto& [k, v] : l1) {
    auto it = l2.find(k);
    law_diff = std::max(law_diff, std::abs(v - (it == l2.end() ? 0.0 : it->second)));
  }
  for (const auto& [k, v] : l2)
    if (!l1.count(k)) law_diff = std::max(law_diff, std::abs(v));

  double v1 = exact_value(m1, fx.pi_e).v;
  double v2 = exact_value(fx.mdps[1], fx.pi_e).v;

  Model m = analytic_model(m1, fx.pi_b[0], /*pooled=*/true);
  double v_fqe = fqe(m, fx.pi_e, start_state(m1)).v1[start_state(m1)];

  bool ok = law_diff <= 1e-12 && std::abs(v1 - 8.982421875) <= 1e-9 &&
            std::abs(v2) <= 1e-9 && std::abs(v_fqe) <= 1e-9;
  return {ok, "law diff " + num(law_diff) + ", values " + num(v1) + " vs " + num(v2) +
                  ", plug-in " + num(v_fqe)};
}

// ---- criterion 12 --------------------------------------------------------
// Improvement beats its baselines. (a) Max-min ascent on the gridworld at
// gamma = 10, started from a softened version of the greedy target policy,
// raises the robust lower bound above the starting policy's own bound on
// >= 28/30 seeds (both endpoints re-solved with the same strong inner
// optimizer). (b) Clustered policy gradient on the two-component mixture
// raises the true mixture value on >= 27/30 seeds and beats the pooled
// single-cluster run on the mean final value; the junction state, whose
// better action the pooled model mis-ranks, is what separates them.
Check crit12() {
  auto t0 = Clock::now();

  Fixture gw = make_fixture("gridworld");
  Model m = analytic_model(gw.mdps[0], gw.pi_b[0], /*pooled=*/true);
  Uncertainty tu = build_uncertainty(m, 10.0);
  check_feasible(tu);
  const int s0 = start_state(gw.mdps[0]);
  PgdOptions strong;
  strong.iters = 300;
  strong.restarts = 3;
  strong.seed = 99;

  int beat = 0;
  double best_final = -std::numeric_limits<double>::infinity();
  double mean_init = 0.0;
  for (int t = 0; t < 30; ++t) {
    Rng rng = Rng::substream(12, static_cast<uint64_t>(t));
    Mat theta0(m.S, Vec(m.A, 0.0));
    for (int s = 0; s < m.S; ++s) {
      for (int a = 0; a < m.A; ++a) {
        if (gw.pi_e.p(0, s, 0, a) > 0.5) theta0[s][a] = 1.5;
        theta0[s][a] += rng.uniform(-0.1, 0.1);
      }
    }
    PgdOptions chk0 = strong;
    chk0.seed = 500 + static_cast<uint64_t>(t);
    double lb0 = mb_pgd(m, Policy::softmax(theta0), tu, s0, chk0).v_min;
    mean_init += lb0 / 30.0;
    MaxminOptions mo;
    mo.outer_iters = 40;
    mo.eta0 = 0.5;
    mo.inner_iters = 120;
    mo.seed = static_cast<uint64_t>(t);
    MaxminResult res = maxmin_improve(m, 10.0, theta0, s0, mo);
    PgdOptions chk = strong;
    chk.seed = 777 + static_cast<uint64_t>(t);
    double lb = mb_pgd(m, res.pi, tu, s0, chk).v_min;
    best_final = std::max(best_final, lb);
    if (lb > lb0) ++beat;
  }

  Fixture tm = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(tm.mdps[0], 100);
  int up = 0;
  double mean_c = 0.0, mean_s = 0.0;
  for (int t = 0; t < 30; ++t) {
    Dataset ds = simulate(big, tm.pi_b[0], 1000, 100, 13000 + static_cast<uint64_t>(t));
    Rng rng = Rng::substream(13, static_cast<uint64_t>(t));
    Mat theta0(big.S, Vec(big.A));
    for (int s = 0; s < big.S; ++s)
      for (int a = 0; a < big.A; ++a) theta0[s][a] = rng.uniform(-1.0, 1.0);
    ClusterPgOptions oc;
    oc.iters = 120;
    oc.eta = 0.05;
    oc.cluster.K = 2;
    oc.cluster.min_count = 20;
    oc.cluster.seed = static_cast<uint64_t>(t);
    oc.s0 = 1;
    oc.truth = &big;
    ClusterPgResult rc = cluster_policy_gradient(ds, theta0, oc);
    ClusterPgOptions os = oc;
    os.force_single = true;
    ClusterPgResult rs = cluster_policy_gradient(ds, theta0, os);
    if (rc.trace.objective.back() > rc.trace.objective.front()) ++up;
    mean_c += rc.trace.objective.back() / 30.0;
    mean_s += rs.trace.objective.back() / 30.0;
  }
  double el = secs(t0);
  bool ok = beat >= 28 && up >= 27 && mean_c > mean_s;
  return {ok, "max-min raises the bound " + std::to_string(beat) + "/30 (mean start " +
                  num(mean_init) + ", best final " + num(best_final) + "); clustered PG up " +
                  std::to_string(up) + "/30, mean final " + num(mean_c) + " vs pooled " +
                  num(mean_s) + ", " + num(el) + " s"};
}

// ---- criterion 13 --------------------------------------------------------
// Picking the candidate with the best estimated value never loses more than
// twice the worst estimation error: checked across 100 random candidate
// sets.
Check crit13() {
  Rng rng(splitmix64(14));
  int pass = 0;
  for (int i = 0; i < 100; ++i) {
    Vec v_true(20), v_hat(20);
    for (int j = 0; j < 20; ++j) {
      v_true[j] = rng.uniform(0.0, 10.0);
      v_hat[j] = v_true[j] + rng.uniform(-2.0, 2.0);
    }
    if (suboptimality_check(v_true, v_hat).ok) ++pass;
  }
  return {pass == 100, std::to_string(pass) + "/100 candidate sets inside the 2x bound"};
}

// ---- criterion 14 --------------------------------------------------------
// The simultaneous concentration widths at delta1 = delta2 = 0.05 cover the
// true per-step behavior policy and kernel (on the visited cells) in at
// least 90% of 500 resamples, on two random instances.
Check crit14() {
  bool ok = true;
  std::string d;
  for (int inst = 0; inst < 2; ++inst) {
    RandomSpec spec;
    spec.S = inst == 0 ? 3 : 4;
    spec.U = 2;
    spec.A = inst == 0 ? 2 : 3;
    spec.H = 8;
    spec.gamma_cap = 1.5;
    spec.seed = inst == 0 ? 5 : 17;
    Fixture fx = random_confounded(spec);
    const ConfoundedMdp& mdp = fx.mdps[0];
    Model truth = analytic_model(mdp, fx.pi_b[0], /*pooled=*/false);

    int covered = 0;
    for (int t = 0; t < 500; ++t) {
      Dataset ds = simulate(mdp, fx.pi_b[0], 400, mdp.H, 20000 + static_cast<uint64_t>(t));
      Model me = empirical_model(ds, /*pooled=*/false);
      Widths w = hoeffding_widths(ds, 0.05, 0.05);
      Counts cn = counts(ds);
      bool cov = true;
      for (int h = 0; h < mdp.H && cov; ++h)
        for (int s = 0; s < mdp.S && cov; ++s) {
          if (cn.n_s[h][s] <= 0.0) continue;
          for (int a = 0; a < mdp.A; ++a) {
            size_t sa = static_cast<size_t>(s) * mdp.A + a;
            if (std::abs(me.pi_t(h)[sa] - truth.pi_t(h)[sa]) > w.delta_pi[s]) cov = false;
            if (h + 1 < mdp.H && me.cell_visited(h, s, a))
              for (int s2 = 0; s2 < mdp.S; ++s2)
                if (std::abs(me.Pt(h)[sa * mdp.S + s2] - truth.Pt(h)[sa * mdp.S + s2]) >
                    w.delta_P[sa])
                  cov = false;
          }
        }
      covered += cov ? 1 : 0;
    }
    double frac = covered / 500.0;
    ok = ok && frac >= 0.90;
    d += (inst ? ", " : "") + std::string("inst") + std::to_string(inst) + " coverage " +
         num(frac);
  }
  return {ok, d + " (need >= 0.9)"};
}

}  // namespace

int run_acceptance_battery(std::ostream& out) {
  struct Entry {
    const char* what;
    Check (*fn)();
  };
  const Entry entries[14] = {
      {"unidentifiable pair: identical observed laws, value gap 2", crit1},
      {"history confounding defeats one-step estimators", crit2},
      {"plug-in value error inside the odds-ratio envelope", crit3},
      {"pessimistic estimates are ordered and capped", crit4},
      {"all estimators collapse to the plug-in at gamma 1", crit5},
      {"row optimizers match independent oracles", crit6},
      {"exact gradients match finite differences", crit7},
      {"worst-case bound is consistent as data grows", crit8},
      {"mixture recovery and clustered evaluation", crit9},
      {"indistinguishable mixture stays unrecovered", crit10},
      {"alternating pair: same data, different values", crit11},
      {"policy improvement beats its baselines", crit12},
      {"estimate-then-argmax suboptimality bound", crit13},
      {"concentration widths cover the truth", crit14},
  };

  int failures = 0;
  for (int i = 0; i < 14; ++i) {
    Check c;
    try {
      c = entries[i].fn();
    } catch (const std::exception& e) {
      c = {false, std::string("exception: ") + e.what()};
    }
    if (!c.ok) ++failures;
    out << (c.ok ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << " ("
        << entries[i].what << "): " << c.detail << "\n";
  }
  out.flush();
  return failures;
}

}  // namespace confope
