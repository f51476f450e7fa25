#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <string>

#include "confope/envs.hpp"
#include "confope/mdp.hpp"

using namespace confope;

namespace {

// Deterministic two-state cycle: state 0 pays 1 and moves to 1, state 1 pays
// 0 and moves back. Single action, single confounder value.
ConfoundedMdp two_cycle(int H) {
  ConfoundedMdp m;
  m.S = 2;
  m.U = 1;
  m.A = 1;
  m.H = H;
  m.stationary = true;
  m.d0 = {1.0, 0.0};
  m.reward = {{1.0}, {0.0}};
  m.proc.kind = ConfounderProcess::Kind::Memoryless;
  m.proc.p_u_s = {Mat(2, Vec{1.0})};
  Vec K(4, 0.0);
  K[0 * 2 + 1] = 1.0;  // row (s=0): -> 1
  K[1 * 2 + 0] = 1.0;  // row (s=1): -> 0
  m.kernel = {K};
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("exact value of a deterministic cycle") {
  ConfoundedMdp m = two_cycle(5);
  Policy pi = Policy::observed_uniform(2, 1);
  ExactValue e = exact_value(m, pi);
  // From state 0 the reward stream is 1,0,1,0,1; from state 1 it is 0,1,0,1,0.
  CHECK(e.v1[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.v1[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.v == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("policy tables and softmax caching") {
  Policy u = Policy::observed_uniform(3, 2);
  CHECK(u.p(0, 1, 0, 0) == doctest::Approx(0.5));
  CHECK(u.steps() == 1);

  Policy sm0 = Policy::softmax(Mat(2, Vec(2, 0.0)));
  CHECK(sm0.p(0, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  Policy sm = Policy::softmax({{1.0, 0.0}, {0.0, 0.0}});
  double e1 = std::exp(1.0);
  CHECK(sm.p(0, 0, 0, 0) == doctest::Approx(e1 / (e1 + 1.0)).epsilon(1e-12));
  CHECK(sm.p(5, 0, 0, 0) == sm.p(0, 0, 0, 0));  // stationary
}

TEST_CASE("global confounder value decomposes over the mixture") {
  Fixture fx = two_mixture();
  const ConfoundedMdp& m = fx.mdps[0];
  ExactValue e = exact_value(m, fx.pi_e);
  double mix = m.proc.p_u[0] * exact_value_given_u(m, fx.pi_e, 1, 0) +
               m.proc.p_u[1] * exact_value_given_u(m, fx.pi_e, 1, 1);
  CHECK(e.v == doctest::Approx(mix).epsilon(1e-12));
}

TEST_CASE("marginalized behavior hides the confounding exactly") {
  Fixture fx = memoryless_pair();
  // At the start state the confounder tilt cancels to 1/2 - 2*eps^2 = 0.48.
  Policy marg = marginalize_policy(fx.mdps[0], fx.pi_b[0]);
  CHECK(marg.p(0, start_state(fx.mdps[0]), 0, 0) == doctest::Approx(0.48).epsilon(1e-12));
}

TEST_CASE("posterior reduces to the prior when behavior ignores u") {
  ConfoundedMdp m = two_cycle(4);
  m.U = 2;
  m.proc.p_u_s = {Mat(2, Vec{0.3, 0.7})};
  // Duplicate the kernel across u so transitions carry no information.
  Vec K(8, 0.0);
  for (int u = 0; u < 2; ++u) {
    K[(0 * 2 + u) * 2 + 1] = 1.0;
    K[(1 * 2 + u) * 2 + 0] = 1.0;
  }
  m.kernel = {K};
  m.validate();
  Policy pb = Policy::observed_uniform(2, 1);
  std::vector<Mat> post = behavior_state_posterior(m, pb);
  // The deterministic cycle puts mass on state h % 2 at step h; the
  // posterior is only pinned down where the state is actually reached.
  for (int h = 0; h < m.H; ++h) {
    int s = h % 2;
    CHECK(post[h][s][0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(post[h][s][1] == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("mixing time: lazy uniform chain mixes in one step") {
  ConfoundedMdp m = two_cycle(4);
  Vec K(4, 0.5);  // both rows uniform
  m.kernel = {K};
  m.validate();
  MixingReport rep = mixing_time(m, Policy::observed_uniform(2, 1), 0);
  CHECK(rep.t_mix == 1);
  CHECK(rep.converged);
  CHECK(rep.irreducible);
  CHECK(rep.aperiodic);
}

TEST_CASE("mixing time flags the deterministic cycle as periodic") {
  ConfoundedMdp m = two_cycle(4);
  MixingReport rep = mixing_time(m, Policy::observed_uniform(2, 1), 0);
  CHECK(rep.irreducible);
  CHECK_FALSE(rep.aperiodic);
}

TEST_CASE("observed law sums to one and matches across the pair") {
  Fixture fx = memoryless_pair(0.1, 0.0, 0.25, 0.75, 3);
  std::map<std::string, double> l1 = observed_law(fx.mdps[0], fx.pi_b[0]);
  std::map<std::string, double> l2 = observed_law(fx.mdps[1], fx.pi_b[1]);
  double tot = 0.0, diff = 0.0;
  for (const auto& [k, v] : l1) {
    tot += v;
    auto it = l2.find(k);
    diff = std::max(diff, std::abs(v - (it == l2.end() ? 0.0 : it->second)));
  }
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(diff <= 1e-12);
}

TEST_CASE("concentrability of the streak chain") {
  Fixture fx = memory_chain(8);
  Concentrability c = concentrability(fx.mdps[0], fx.pi_b[0], fx.pi_e);
  // Deterministic target over a uniform behavior: action ratio 2.
  CHECK(c.tau_a == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c.tau_s >= 1.0);
}

TEST_CASE("mdp and policy JSON round trips") {
  Fixture fx = two_mixture();
  ConfoundedMdp m2 = mdp_from_json(mdp_to_json(fx.mdps[0]));
  CHECK(m2.S == fx.mdps[0].S);
  CHECK(m2.U == fx.mdps[0].U);
  CHECK(m2.A == fx.mdps[0].A);
  CHECK(m2.H == fx.mdps[0].H);
  CHECK(m2.proc.kind == ConfounderProcess::Kind::Global);
  for (size_t i = 0; i < fx.mdps[0].kernel[0].size(); ++i)
    CHECK(m2.kernel[0][i] == fx.mdps[0].kernel[0][i]);
  for (int s = 0; s < m2.S; ++s) CHECK(m2.d0[s] == fx.mdps[0].d0[s]);

  Policy pb2 = policy_from_json(policy_to_json(fx.pi_b[0]));
  CHECK(pb2.confounded());
  for (size_t i = 0; i < fx.pi_b[0].tab[0].size(); ++i)
    CHECK(pb2.tab[0][i] == fx.pi_b[0].tab[0][i]);

  Policy sm = Policy::softmax({{0.3, -0.2}, {0.0, 1.0}});
  Policy sm2 = policy_from_json(policy_to_json(sm));
  CHECK(sm2.kind == Policy::Kind::Softmax);
  CHECK(sm2.theta[0][0] == sm.theta[0][0]);
  CHECK(sm2.p(0, 1, 0, 1) == doctest::Approx(sm.p(0, 1, 0, 1)).epsilon(1e-15));
}
