#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/sensitivity.hpp"

using namespace confope;

namespace {

// Pooled model with one state pair and a hand-set behavior policy.
Model hand_model() {
  Model m;
  m.S = 2;
  m.A = 2;
  m.H = 4;
  m.pooled = true;
  m.P = {Vec(8, 0.0)};
  // rows (s*A+a): distributions over 2 states
  double rows[4][2] = {{0.5, 0.5}, {0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}};
  for (int i = 0; i < 4; ++i)
    for (int s2 = 0; s2 < 2; ++s2) m.P[0][static_cast<size_t>(i) * 2 + s2] = rows[i][s2];
  m.pi_b = {Vec{0.5, 0.5, 0.3, 0.7}};
  m.r = {Vec(4, 0.0)};
  m.visited = {std::vector<char>(4, 1)};
  m.n_sa = {Vec(4, 10.0)};
  return m;
}

}  // namespace

TEST_CASE("odds-ratio envelope multipliers") {
  Model m = hand_model();
  Uncertainty tu = build_uncertainty(m, 2.0);
  // alpha = pi + (1-pi)/Gamma, beta = Gamma + pi (1-Gamma); at pi=1/2, Gamma=2
  // these are 0.75 and 1.5.
  CHECK(alpha_bound(0.5, 2.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(beta_bound(0.5, 2.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(tu.alpha[0][0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(tu.beta[0][0] == doctest::Approx(1.5).epsilon(1e-12));
  // pi = 0.3: alpha = 0.3 + 0.7/2 = 0.65, beta = 2 - 0.3 = 1.7.
  CHECK(tu.alpha[0][2] == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(tu.beta[0][2] == doctest::Approx(1.7).epsilon(1e-12));
  // Bounds: lo = alpha * P, hi = min(beta * P, 1).
  CHECK(tu.lo[0][0] == doctest::Approx(0.75 * 0.5).epsilon(1e-12));
  CHECK(tu.hi[0][0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(tu.hi[0][2] == doctest::Approx(1.0).epsilon(1e-12));  // 1.5*0.9 clips
  CHECK_NOTHROW(check_feasible(tu));
}

TEST_CASE("envelopes from any gamma are feasible") {
  Model m = hand_model();
  for (double g : {1.0, 1.5, 3.0, 10.0, 100.0}) {
    Uncertainty tu = build_uncertainty(m, g);
    CHECK_NOTHROW(check_feasible(tu));
    for (size_t i = 0; i < 4; ++i) {
      double slo = 0.0, shi = 0.0;
      for (int s2 = 0; s2 < 2; ++s2) {
        slo += tu.lo[0][i * 2 + s2];
        shi += tu.hi[0][i * 2 + s2];
        CHECK(tu.lo[0][i * 2 + s2] <= tu.hi[0][i * 2 + s2] + 1e-12);
      }
      CHECK(slo <= 1.0 + 1e-12);
      CHECK(shi >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("hand-broken bounds are rejected") {
  Model m = hand_model();
  Uncertainty tu = build_uncertainty(m, 2.0);
  for (int s2 = 0; s2 < 2; ++s2) tu.lo[0][s2] = 0.7;  // row 0 now sums to 1.4
  CHECK_THROWS_AS(check_feasible(tu), InfeasibleError);
  Uncertainty tu2 = build_uncertainty(m, 2.0);
  for (int s2 = 0; s2 < 2; ++s2) tu2.hi[0][s2] = 0.3;  // row 0 caps at 0.6
  CHECK_THROWS_AS(check_feasible(tu2), InfeasibleError);
}

TEST_CASE("widening only widens") {
  Fixture fx = make_fixture("gridworld");
  Dataset ds = simulate(fx.mdps[0], fx.pi_b[0], 500, 8, 21);
  Model m = empirical_model(ds, /*pooled=*/true);
  Widths w = hoeffding_widths(ds, 0.05, 0.05);
  Uncertainty a = build_uncertainty(m, 2.0);
  Uncertainty b = build_uncertainty_widened(m, 2.0, w);
  for (size_t i = 0; i < a.lo[0].size(); ++i) {
    CHECK(b.lo[0][i] <= a.lo[0][i] + 1e-12);
    CHECK(b.hi[0][i] >= a.hi[0][i] - 1e-12);
    CHECK(b.lo[0][i] >= 0.0);
    CHECK(b.hi[0][i] <= 1.0 + 1e-12);
  }
  CHECK_NOTHROW(check_feasible(b));
}

TEST_CASE("per-step intersection tightens to the common core") {
  Model m = hand_model();
  m.pooled = false;
  m.P = {m.P[0], m.P[0], m.P[0]};  // H-1 = 3 kernel tables
  m.pi_b = {m.pi_b[0], m.pi_b[0], m.pi_b[0], m.pi_b[0]};
  m.r = {m.r[0], m.r[0], m.r[0], m.r[0]};
  m.visited = {m.visited[0], m.visited[0], m.visited[0]};
  m.n_sa = {m.n_sa[0], m.n_sa[0], m.n_sa[0]};
  Uncertainty tu = build_uncertainty(m, 2.0);
  // Tighten one step by hand; the intersection must adopt it everywhere.
  tu.lo[1][0] = 0.5;
  tu.hi[2][1] = 0.3;
  Uncertainty cap = intersect_steps(tu);
  CHECK(cap.steps() == 1);
  CHECK(cap.lo[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cap.hi[0][1] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("true odds-ratio budgets of the fixtures") {
  Fixture mp = memoryless_pair();
  // (0.6/0.4) * (0.52/0.48) = 1.5 * 13/12 = 13/8.
  CHECK(true_gamma(mp.mdps[0], mp.pi_b[0]) == doctest::Approx(1.625).epsilon(1e-12));
  CHECK(mp.known.at("gamma_star") == doctest::Approx(1.625).epsilon(1e-12));

  Fixture gw = make_fixture("gridworld");
  CHECK(gw.known.at("gamma_star") == doctest::Approx(31.0 / 21.0).epsilon(1e-12));
  CHECK(true_gamma(gw.mdps[0], gw.pi_b[0]) == doctest::Approx(31.0 / 21.0).epsilon(1e-12));

  Fixture alt = make_fixture("alternating");
  CHECK(std::isinf(true_gamma(alt.mdps[0], alt.pi_b[0])));

  // An observed (u-blind) behavior policy carries no confounding at all.
  Fixture mc = memory_chain(8);
  CHECK(true_gamma(mc.mdps[0], mc.pi_b[0]) == doctest::Approx(1.0).epsilon(1e-12));
}
