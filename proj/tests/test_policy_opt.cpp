#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"
#include "confope/model_based.hpp"
#include "confope/ope.hpp"
#include "confope/policy_opt.hpp"
#include "confope/rng.hpp"

using namespace confope;

TEST_CASE("softmax chain rule: finite differences and zero row sums") {
  Rng rng(101);
  int S = 3, A = 4;
  Mat theta(S, Vec(A)), w(S, Vec(A));
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      theta[s][a] = rng.uniform(-1.0, 1.0);
      w[s][a] = rng.uniform(-2.0, 2.0);
    }
  // f(theta) = sum_{s,a} w[s][a] * pi_theta(a|s), so dpi = w.
  auto f = [&](const Mat& th) {
    Policy p = Policy::softmax(th);
    double v = 0.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) v += w[s][a] * p.p(0, s, 0, a);
    return v;
  };
  Mat g = softmax_grad(theta, w);
  double h = 1e-5;
  for (int s = 0; s < S; ++s) {
    double row = 0.0;
    for (int a = 0; a < A; ++a) {
      Mat tp = theta, tm = theta;
      tp[s][a] += h;
      tm[s][a] -= h;
      double fd = (f(tp) - f(tm)) / (2 * h);
      CHECK(g[s][a] == doctest::Approx(fd).epsilon(1e-6));
      row += g[s][a];
    }
    CHECK(row == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("argmax suboptimality harness on hand cases") {
  SuboptReport a = suboptimality_check({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
  CHECK(a.ok);
  CHECK(a.gap == doctest::Approx(0.0));
  CHECK(a.argmax_true == 2);
  CHECK(a.argmax_hat == 2);

  // A constant shift never changes the argmax.
  SuboptReport b = suboptimality_check({1.0, 2.0, 3.0}, {11.0, 12.0, 13.0});
  CHECK(b.ok);
  CHECK(b.gap == doctest::Approx(0.0));

  // Worst case: the estimate flips the ranking; gap 1 against bound 2.
  SuboptReport c = suboptimality_check({1.0, 0.0}, {0.0, 0.5});
  CHECK(c.ok);
  CHECK(c.gap == doctest::Approx(1.0));
  CHECK(c.bound == doctest::Approx(2.0));
  CHECK(c.argmax_true == 0);
  CHECK(c.argmax_hat == 1);
}

TEST_CASE("importance-sampled gradient is unbiased under exact behavior probabilities") {
  // Unconfounded two-state instance; the cluster model is the analytic one,
  // so the behavior probabilities in the weights are exact and the
  // per-decision estimator's mean must match the exact gradient to
  // statistical precision.
  ConfoundedMdp m;
  m.S = 2;
  m.U = 1;
  m.A = 2;
  m.H = 3;
  m.stationary = true;
  m.kernel = {Vec{0.7, 0.3, 0.2, 0.8,    // s=0: a0, a1
                  0.5, 0.5, 0.6, 0.4}};  // s=1: a0, a1
  m.reward = {Vec{0.0, 1.0}, Vec{1.0, 0.0}};
  m.d0 = {0.5, 0.5};
  m.proc.kind = ConfounderProcess::Kind::Global;
  m.proc.p_u = {1.0};
  m.validate();
  Policy pi_b = Policy::observed_uniform(2, 2);
  Mat theta = {{0.3, -0.2}, {-0.5, 0.1}};

  Model truth = analytic_model(m, pi_b, /*pooled=*/true);
  Policy pi_theta = Policy::softmax(theta);
  Mat z_true(2, Vec(2, 0.0));
  for (int s0 = 0; s0 < 2; ++s0) {
    PolicyEval pe = value_policy_grad(truth.Pt(0), truth.r_t(0), pi_theta, 2, 2, 3, s0);
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) z_true[s][a] += m.d0[s0] * pe.dtheta[s][a];
  }

  int batches = 100, per = 100;
  Mat mean(2, Vec(2, 0.0)), msq(2, Vec(2, 0.0));
  for (int b = 0; b < batches; ++b) {
    Dataset ds = simulate(m, pi_b, per, m.H, 50000 + b);
    Mat g = per_cluster_pg(ds, truth, theta, GradEstimator::IsReinforce);
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        mean[s][a] += g[s][a];
        msq[s][a] += g[s][a] * g[s][a];
      }
  }
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      double mu = mean[s][a] / batches;
      double var = msq[s][a] / batches - mu * mu;
      double se = std::sqrt(std::max(var, 0.0) / batches);
      CHECK(std::abs(mu - z_true[s][a]) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("importance sampling rejects unsupported actions") {
  ConfoundedMdp m;
  m.S = 1;
  m.U = 1;
  m.A = 2;
  m.H = 2;
  m.stationary = true;
  m.kernel = {Vec{1.0, 1.0}};
  m.reward = {Vec{0.0, 1.0}};
  m.d0 = {1.0};
  m.proc.kind = ConfounderProcess::Kind::Global;
  m.proc.p_u = {1.0};
  m.validate();
  // Behavior plays only action 1; the model then assigns probability zero to
  // action 0, but hand-edit a trajectory so action 0 appears in the data.
  Policy pi_b = Policy::observed(1, 2, {Vec{0.0, 1.0}});
  Dataset ds = simulate(m, pi_b, 5, m.H, 3);
  ds.trajs[0].a[0] = 0;
  Model cm = analytic_model(m, pi_b, true);
  Mat theta = {{0.0, 0.0}};
  CHECK_THROWS_AS(per_cluster_pg(ds, cm, theta, GradEstimator::IsReinforce), ConfigError);
}

TEST_CASE("surrogate gradient vanishes when actions are interchangeable") {
  // Kernel and rewards ignore the action, so every policy has the same
  // value and the exact plug-in gradient is identically zero.
  Model cm;
  cm.S = 2;
  cm.A = 2;
  cm.H = 4;
  cm.pooled = true;
  cm.P = {Vec{0.4, 0.6, 0.4, 0.6, 0.3, 0.7, 0.3, 0.7}};
  cm.pi_b = {Vec{0.5, 0.5, 0.5, 0.5}};
  cm.r = {Vec{0.2, 0.2, 0.9, 0.9}};
  cm.visited = {std::vector<char>{1, 1, 1, 1}};
  cm.n_sa = {Vec{9.0, 9.0, 9.0, 9.0}};
  Dataset unused;
  unused.S = 2;
  unused.A = 2;
  unused.H = 4;
  Mat theta = {{0.4, -0.4}, {0.0, 0.7}};
  Mat g = per_cluster_pg(unused, cm, theta, GradEstimator::Approximate, 0);
  for (const auto& row : g)
    for (double x : row) CHECK(x == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one cluster reproduces the oblivious baseline exactly") {
  Fixture fx = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(fx.mdps[0], 40);
  Dataset ds = simulate(big, fx.pi_b[0], 60, 40, 515);
  Mat theta0(ds.S, Vec(ds.A, 0.0));

  ClusterPgOptions a;
  a.iters = 20;
  a.cluster.K = 1;
  a.s0 = 1;
  ClusterPgResult ra = cluster_policy_gradient(ds, theta0, a);

  ClusterPgOptions b = a;
  b.force_single = true;
  ClusterPgResult rb = cluster_policy_gradient(ds, theta0, b);

  REQUIRE(ra.trace.objective.size() == rb.trace.objective.size());
  for (size_t i = 0; i < ra.trace.objective.size(); ++i)
    CHECK(ra.trace.objective[i] == doctest::Approx(rb.trace.objective[i]).epsilon(1e-12));
  for (int s = 0; s < ds.S; ++s)
    for (int a2 = 0; a2 < ds.A; ++a2)
      CHECK(ra.theta[s][a2] == doctest::Approx(rb.theta[s][a2]).epsilon(1e-12));
}

TEST_CASE("maxmin bookkeeping, determinism, and ascent at gamma 1") {
  Fixture fx = make_fixture("gridworld");
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  Mat theta0(m.S, Vec(m.A, 0.0));
  MaxminOptions opt;
  opt.outer_iters = 12;
  opt.inner_iters = 60;
  opt.eta0 = 0.3;
  opt.seed = 21;

  MaxminResult r1 = maxmin_improve(m, 1.0, theta0, 0, opt);
  REQUIRE(r1.trace.thetas.size() == static_cast<size_t>(opt.outer_iters + 1));
  REQUIRE(r1.trace.objective.size() == r1.trace.thetas.size());
  REQUIRE(r1.trace.grad_norm.size() == r1.trace.thetas.size());
  REQUIRE(r1.trace.lr.size() == r1.trace.thetas.size());
  CHECK(r1.trace.lr.back() == doctest::Approx(0.0));
  CHECK(r1.lower_bound == doctest::Approx(r1.trace.objective.back()).epsilon(1e-12));
  // At gamma 1 the inner player is pinned to the plug-in kernel, so the
  // outer loop is plain gradient ascent and must not end below its start.
  CHECK(r1.trace.objective.back() >= r1.trace.objective.front() - 1e-9);

  MaxminResult r2 = maxmin_improve(m, 1.0, theta0, 0, opt);
  CHECK(r1.lower_bound == r2.lower_bound);
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a) CHECK(r1.theta[s][a] == r2.theta[s][a]);
}
