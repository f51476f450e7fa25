#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"
#include "confope/model_based.hpp"
#include "confope/ope.hpp"
#include "confope/rng.hpp"
#include "confope/sensitivity.hpp"

using namespace confope;

namespace {

// Two states, one action, deterministic swap; rewards 1 at state 0, 0.25 at 1.
struct Hand {
  Vec P = {0.0, 1.0, 1.0, 0.0};
  Vec r = {1.0, 0.25};
  Policy pi = Policy::observed_uniform(2, 1);
};

Model grid_model(double gamma_unused = 0.0) {
  (void)gamma_unused;
  Fixture fx = make_fixture("gridworld");
  return analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
}

}  // namespace

TEST_CASE("stationary DP value on a hand chain") {
  Hand h;
  CHECK(mb_value(h.P, h.r, h.pi, 2, 1, 2, 0) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(mb_value(h.P, h.r, h.pi, 2, 1, 3, 0) == doctest::Approx(2.25).epsilon(1e-12));
  CHECK(mb_value(h.P, h.r, h.pi, 2, 1, 3, 1) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("kernel gradient matches finite differences (spot check)") {
  Rng rng(91);
  int S = 3, A = 2, H = 4;
  Vec P(static_cast<size_t>(S) * A * S);
  for (int sa = 0; sa < S * A; ++sa) {
    double tot = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      P[sa * S + s2] = -std::log(rng.uniform());
      tot += P[sa * S + s2];
    }
    for (int s2 = 0; s2 < S; ++s2) P[sa * S + s2] /= tot;
  }
  Vec r(static_cast<size_t>(S) * A);
  for (double& x : r) x = rng.uniform();
  Policy pi = Policy::observed_uniform(S, A);
  MbEval ev = mb_value_grad(P, r, pi, S, A, H, 0);
  CHECK(ev.v == doctest::Approx(mb_value(P, r, pi, S, A, H, 0)).epsilon(1e-12));
  double fd_h = 1e-6;
  for (size_t i = 0; i < P.size(); i += 5) {
    Vec Pp = P, Pm = P;
    Pp[i] += fd_h;
    Pm[i] -= fd_h;
    double fd = (mb_value(Pp, r, pi, S, A, H, 0) - mb_value(Pm, r, pi, S, A, H, 0)) / (2 * fd_h);
    CHECK(ev.dP[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("policy gradient matches finite differences (spot check)") {
  Rng rng(92);
  int S = 3, A = 2, H = 4;
  Vec P(static_cast<size_t>(S) * A * S);
  for (int sa = 0; sa < S * A; ++sa) {
    double tot = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      P[sa * S + s2] = -std::log(rng.uniform());
      tot += P[sa * S + s2];
    }
    for (int s2 = 0; s2 < S; ++s2) P[sa * S + s2] /= tot;
  }
  Vec r(static_cast<size_t>(S) * A);
  for (double& x : r) x = rng.uniform();
  Mat theta(S, Vec(A));
  for (auto& row : theta)
    for (double& x : row) x = rng.uniform(-1.0, 1.0);
  PolicyEval ev = value_policy_grad(P, r, Policy::softmax(theta), S, A, H, 1);
  double fd_h = 1e-5;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      Mat tp = theta, tm = theta;
      tp[s][a] += fd_h;
      tm[s][a] -= fd_h;
      double fd = (mb_value(P, r, Policy::softmax(tp), S, A, H, 1) -
                   mb_value(P, r, Policy::softmax(tm), S, A, H, 1)) /
                  (2 * fd_h);
      CHECK(ev.dtheta[s][a] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("pgd never exceeds the plug-in value") {
  Model m = grid_model();
  Fixture fx = make_fixture("gridworld");
  ValueReport rf = fqe(m, fx.pi_e);
  for (double g : {1.5, 5.0, 20.0}) {
    Uncertainty tu = build_uncertainty(m, g);
    PgdOptions opt;
    opt.iters = 150;
    PgdResult res = mb_pgd(m, fx.pi_e, tu, 13, opt);
    CHECK(res.v_min <= rf.v1[13] + 1e-9);
  }
}

TEST_CASE("pgd trace bookkeeping and best-iterate selection") {
  Model m = grid_model();
  Fixture fx = make_fixture("gridworld");
  Uncertainty tu = build_uncertainty(m, 5.0);
  PgdOptions opt;
  opt.iters = 40;
  opt.record_trace = true;
  PgdResult res = mb_pgd(m, fx.pi_e, tu, 13, opt);
  // One entry for the projected start plus one per descent step.
  CHECK(static_cast<int>(res.trace_v.size()) == opt.iters + 1);
  CHECK(static_cast<int>(res.trace_gnorm.size()) == opt.iters + 1);
  CHECK(res.trace_gnorm[0] == doctest::Approx(0.0));
  double best = *std::min_element(res.trace_v.begin(), res.trace_v.end());
  CHECK(res.v_min <= best + 1e-12);
}

TEST_CASE("warm start resumes from the previous best kernel") {
  Model m = grid_model();
  Fixture fx = make_fixture("gridworld");
  Uncertainty tu = build_uncertainty(m, 5.0);
  PgdOptions long_opt;
  long_opt.iters = 300;
  PgdResult ref = mb_pgd(m, fx.pi_e, tu, 13, long_opt);

  PgdOptions warm;
  warm.iters = 1;
  warm.init = &ref.P_best;
  PgdResult res = mb_pgd(m, fx.pi_e, tu, 13, warm);
  CHECK(res.v_min <= ref.v_min + 1e-9);
}

TEST_CASE("random restarts are reproducible") {
  Model m = grid_model();
  Fixture fx = make_fixture("gridworld");
  Uncertainty tu = build_uncertainty(m, 10.0);
  PgdOptions opt;
  opt.iters = 60;
  opt.restarts = 3;
  opt.seed = 5;
  PgdResult a = mb_pgd(m, fx.pi_e, tu, 13, opt);
  PgdResult b = mb_pgd(m, fx.pi_e, tu, 13, opt);
  CHECK(a.v_min == b.v_min);
  CHECK(a.P_best == b.P_best);
}

TEST_CASE("grid oracle degenerates to the plug-in at gamma 1") {
  RandomSpec spec;
  spec.S = 2;
  spec.U = 2;
  spec.A = 2;
  spec.H = 3;
  spec.gamma_cap = 2.0;
  spec.seed = 77;
  Fixture fx = random_confounded(spec);
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  Uncertainty tu = build_uncertainty(m, 1.0);
  ValueReport rf = fqe(m, fx.pi_e);
  double bf = mb_bruteforce(m, fx.pi_e, tu, 0, 0.05);
  CHECK(bf == doctest::Approx(rf.v1[0]).epsilon(1e-9));
}

TEST_CASE("grid oracle refuses infeasibly large grids") {
  Model m = grid_model();
  Uncertainty tu = build_uncertainty(m, 10.0);
  Fixture fx = make_fixture("gridworld");
  CHECK_THROWS_AS(mb_bruteforce(m, fx.pi_e, tu, 13, 0.01), ConfigError);
}
