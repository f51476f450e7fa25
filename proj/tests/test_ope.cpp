#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"
#include "confope/ope.hpp"
#include "confope/sensitivity.hpp"

using namespace confope;

TEST_CASE("row minimizer on a worked example") {
  // lo = 0.8 * (.5,.3,.2) = (.40,.24,.16), hi = 1.25 * (.5,.3,.2).
  // Cheapest coordinate absorbs the slack: m* = (.60,.24,.16), cost 0.56.
  Vec cost = {0.0, 1.0, 2.0};
  Vec lo = {0.40, 0.24, 0.16};
  Vec hi = {0.625, 0.375, 0.25};
  Vec x = knapsack_min_row(cost, lo, hi);
  CHECK(x[0] == doctest::Approx(0.60).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(0.24).epsilon(1e-12));
  CHECK(x[2] == doctest::Approx(0.16).epsilon(1e-12));
  double v = 0.0;
  for (int i = 0; i < 3; ++i) v += cost[i] * x[i];
  CHECK(v == doctest::Approx(0.56).epsilon(1e-12));
}

TEST_CASE("box-simplex projection on worked examples") {
  Vec lo = {0.0, 0.0, 0.0}, hi = {1.0, 1.0, 1.0};
  Vec a = project_box_simplex({2.0, 0.0, 0.0}, lo, hi);
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(a[1] == doctest::Approx(0.0).epsilon(1e-9));

  // Uniform shift: (.5,.5,.5) - 1/6 each -> (1/3,1/3,1/3).
  Vec b = project_box_simplex({0.5, 0.5, 0.5}, lo, hi);
  for (int i = 0; i < 3; ++i) CHECK(b[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("plug-in estimator on a deterministic hand model") {
  Model m;
  m.S = 2;
  m.A = 1;
  m.H = 2;
  m.pooled = true;
  m.P = {Vec{0.0, 1.0, 1.0, 0.0}};  // 0 -> 1, 1 -> 0
  m.pi_b = {Vec{1.0, 1.0}};
  m.r = {Vec{1.0, 0.25}};
  m.visited = {std::vector<char>{1, 1}};
  m.n_sa = {Vec{5.0, 5.0}};
  ValueReport rep = fqe(m, Policy::observed_uniform(2, 1));
  CHECK(rep.v1[0] == doctest::Approx(1.25).epsilon(1e-12));  // 1 then 0.25
  CHECK(rep.v1[1] == doctest::Approx(1.25).epsilon(1e-12));  // 0.25 then 1
  CHECK_FALSE(rep.is_lower_bound);
}

TEST_CASE("no confounding in the kernel means no plug-in bias") {
  // Equal slip levels: the behavior policy still depends on u, but the
  // kernel does not, so the data-limit model evaluates the target exactly.
  Fixture fx = gridworld_iid(0.2, 0.2);
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  ValueReport rep = fqe(m, fx.pi_e);
  ExactValue ex = exact_value(fx.mdps[0], fx.pi_e);
  for (int s = 0; s < fx.mdps[0].S; ++s)
    CHECK(rep.v1[s] == doctest::Approx(ex.v1[s]).epsilon(1e-9));
}

TEST_CASE("pessimistic value shrinks as gamma grows") {
  Fixture fx = make_fixture("gridworld");
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  ValueReport rf = fqe(m, fx.pi_e);
  double prev = rf.v1[13] + 1e-12;
  for (double g : {1.0, 1.5, 2.0, 5.0, 10.0}) {
    Uncertainty tu = build_uncertainty(m, g);
    ValueReport rc = cfqe(m, fx.pi_e, tu);
    CHECK(rc.is_lower_bound);
    CHECK(rc.v1[13] <= prev + 1e-12);
    prev = rc.v1[13];
  }
  Uncertainty tu1 = build_uncertainty(m, 1.0);
  ValueReport rc1 = cfqe(m, fx.pi_e, tu1);
  CHECK(rc1.v1[13] == doctest::Approx(rf.v1[13]).epsilon(1e-12));
}

TEST_CASE("theory envelopes: signs, caps, and the tiny-eps limit") {
  TheoryEnvelopes env = theory_envelopes(0.1, 8, 2.0);
  CHECK(env.fqe_lo < 0.0);
  CHECK(env.fqe_hi > 0.0);
  // cap = 2 * eps * H^2 * range = 2 * 0.1 * 64 * 2.
  CHECK(env.cfqe_cap == doctest::Approx(25.6).epsilon(1e-12));
  CHECK(env.mb_cap == doctest::Approx(25.6).epsilon(1e-12));

  // As eps -> 0 the window closes linearly in eps, with slopes
  // H(H+1)/2 above and H(H-1)/2 below.
  TheoryEnvelopes tiny = theory_envelopes(1e-10, 8, 2.0);
  CHECK(tiny.fqe_hi == doctest::Approx(1e-10 * 8 * 9 / 2.0 * 2.0).epsilon(1e-6));
  CHECK(-tiny.fqe_lo == doctest::Approx(1e-10 * 8 * 7 / 2.0 * 2.0).epsilon(1e-6));
}

TEST_CASE("worst-row l1 radius of an envelope") {
  Model m;
  m.S = 2;
  m.A = 2;
  m.H = 3;
  m.pooled = true;
  m.P = {Vec{0.5, 0.5, 0.9, 0.1, 0.5, 0.5, 0.5, 0.5}};
  m.pi_b = {Vec{0.5, 0.5, 0.5, 0.5}};
  m.r = {Vec(4, 0.0)};
  m.visited = {std::vector<char>{1, 1, 1, 1}};
  m.n_sa = {Vec(4, 10.0)};
  Uncertainty tu = build_uncertainty(m, 2.0);
  // Row (.5,.5): lo=(.375,.375), hi=(.75,.75): sum of max(.125,.25) = 0.5.
  // Row (.9,.1): lo=(.675,.075), hi=(1,.15): max(.225,.1)+max(.025,.05)=0.275.
  CHECK(envelope_l1_radius(m, tu) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("naive lower bound shifts the plug-in by the closed form") {
  Fixture fx = make_fixture("gridworld");
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  ValueReport rf = fqe(m, fx.pi_e);
  double eps = 0.05;
  ValueReport rn = naive_lb(m, fx.pi_e, eps);
  TheoryEnvelopes env = theory_envelopes(eps, m.H, m.reward_range());
  CHECK(rn.is_lower_bound);
  for (int s = 0; s < m.S; ++s)
    CHECK(rn.v1[s] == doctest::Approx(rf.v1[s] + env.fqe_lo).epsilon(1e-12));
  CHECK(rn.diagnostics.at("correction") == doctest::Approx(env.fqe_lo).epsilon(1e-12));
}

TEST_CASE("missing target-policy data is a coverage error") {
  // A single trajectory that only ever plays action 0 cannot support a
  // uniform target policy.
  Dataset ds;
  ds.S = 2;
  ds.A = 2;
  ds.H = 3;
  ds.env_id = "hand";
  Trajectory t;
  t.s = {0, 1, 0};
  t.a = {0, 0, 0};
  t.r = {0.0, 0.0, 0.0};
  t.u = {0, 0, 0};
  ds.trajs = {t};
  Model m = empirical_model(ds, /*pooled=*/true);
  CHECK_THROWS_AS(check_coverage(m, Policy::observed_uniform(2, 2), -1), CoverageError);
  CHECK_THROWS_AS(fqe(m, Policy::observed_uniform(2, 2)), CoverageError);
}

TEST_CASE("relaxation equals cfqe on pooled envelopes") {
  Fixture fx = make_fixture("gridworld");
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  Uncertainty tu = build_uncertainty(m, 5.0);
  ValueReport rc = cfqe(m, fx.pi_e, tu);
  ValueReport rm = mb_relaxation(m, fx.pi_e, tu);
  for (int s = 0; s < m.S; ++s) CHECK(rm.v1[s] == doctest::Approx(rc.v1[s]).epsilon(1e-12));
}
