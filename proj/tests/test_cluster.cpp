#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confope/cluster.hpp"
#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"
#include "confope/ope.hpp"

using namespace confope;

namespace {

Trajectory traj(std::vector<int> s, std::vector<int> a) {
  Trajectory t;
  t.s = std::move(s);
  t.a = std::move(a);
  t.r = Vec(t.s.size(), 0.0);
  t.u = std::vector<int>(t.s.size(), 0);
  return t;
}

}  // namespace

TEST_CASE("per-trajectory statistics count what happened") {
  Dataset ds;
  ds.S = 2;
  ds.A = 1;
  ds.H = 4;
  ds.env_id = "hand";
  ds.trajs = {traj({0, 0, 1, 0}, {0, 0, 0, 0})};
  auto st = trajectory_stats(ds);
  REQUIRE(st.size() == 1);
  // Cell (s=0,a=0): transitions 0->0 once, 0->1 once; cell (1,0): 1->0 once.
  CHECK(st[0].trans.at(0)[0] == doctest::Approx(1.0));
  CHECK(st[0].trans.at(0)[1] == doctest::Approx(1.0));
  CHECK(st[0].trans.at(1)[0] == doctest::Approx(1.0));
  CHECK(st[0].trans.at(1)[1] == doctest::Approx(0.0));
  CHECK(st[0].visits.at(0) == doctest::Approx(3.0));  // action counts include the last step
  CHECK(st[0].visits.at(1) == doctest::Approx(1.0));
}

TEST_CASE("pair distance has the unbiased-correction closed form") {
  // Cell (0,0) holds three transitions in each trajectory, with row
  // estimates (2/3,1/3) and (1/3,2/3). The corrected squared norm is
  // (3*5/9-1)/2 = 1/3 for both, the cross term is 2*4/9, and cell (1,0)
  // falls below the floor, so the distance is 2/3 - 8/9 = -2/9.
  Dataset ds;
  ds.S = 2;
  ds.A = 1;
  ds.H = 5;
  ds.env_id = "hand";
  ds.trajs = {traj({0, 0, 1, 0, 0}, {0, 0, 0, 0, 0}),
              traj({0, 1, 0, 0, 1}, {0, 0, 0, 0, 0})};
  auto st = trajectory_stats(ds);
  Vec d = pairwise_distances(st, 2, 1, 2, /*parallel=*/false);
  CHECK(d[0 * 2 + 1] == doctest::Approx(-2.0 / 9.0).epsilon(1e-12));
  CHECK(d[1 * 2 + 0] == doctest::Approx(-2.0 / 9.0).epsilon(1e-12));
  CHECK(d[0] == doctest::Approx(0.0));

  // Raising the floor past the counts makes the pair incomparable.
  Vec d2 = pairwise_distances(st, 2, 1, 5, false);
  CHECK(std::isnan(d2[1]));
}

TEST_CASE("parallel and serial distance matrices agree") {
  Fixture fx = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(fx.mdps[0], 60);
  Dataset ds = simulate(big, fx.pi_b[0], 30, 60, 424242);
  auto st = trajectory_stats(ds);
  Vec a = pairwise_distances(st, ds.S, ds.A, 3, true);
  Vec b = pairwise_distances_reference(st, ds.S, ds.A, 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]))
      CHECK(std::isnan(b[i]));
    else
      CHECK(a[i] == b[i]);
  }
}

TEST_CASE("permutation accuracy and weight error on hand labels") {
  std::vector<int> truth = {0, 0, 1, 1};
  CHECK(permutation_accuracy({1, 1, 0, 0}, truth, 2) == doctest::Approx(1.0));
  CHECK(permutation_accuracy({0, 1, 0, 1}, truth, 2) == doctest::Approx(0.5));
  CHECK(weight_error({0, 0, 1, 1}, truth, 2) == doctest::Approx(0.0));
  // Three-vs-one split against two-vs-two: each share is off by 0.25.
  CHECK(weight_error({0, 0, 0, 1}, truth, 2) == doctest::Approx(0.25));
}

TEST_CASE("single linkage separates a well-separated mixture exactly") {
  Fixture fx = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(fx.mdps[0], 100);
  Dataset ds = simulate(big, fx.pi_b[0], 40, 100, 31337);
  ClusterOptions opt;
  opt.K = 2;
  // Demand well-estimated cells before a pair contributes a distance; with
  // sparse cells the unbiased correction can push cross-component distances
  // negative and single linkage then merges across the components.
  opt.min_count = 20;
  Clustering cl = cluster_single_linkage(ds, opt);
  std::vector<int> truth = true_labels(ds);
  CHECK(permutation_accuracy(cl.assign, truth, 2) == doctest::Approx(1.0));
  double wsum = 0.0;
  for (double w : cl.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft EM objective is monotone and weights normalize") {
  Fixture fx = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(fx.mdps[0], 60);
  Dataset ds = simulate(big, fx.pi_b[0], 50, 60, 99);
  ClusterOptions opt;
  opt.K = 2;
  opt.em_iters = 25;
  opt.seed = 4;
  Clustering cl = cluster_soft_em(ds, opt);
  REQUIRE(cl.trace.size() >= 2);
  for (size_t i = 1; i < cl.trace.size(); ++i) CHECK(cl.trace[i] >= cl.trace[i - 1] - 1e-9);
  double wsum = 0.0;
  for (double w : cl.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("clustered estimate is the weight-mixed per-cluster estimate") {
  Fixture fx = make_fixture("two_mixture");
  ConfoundedMdp big = with_horizon(fx.mdps[0], 80);
  Dataset ds = simulate(big, fx.pi_b[0], 60, 80, 2024);
  ClusterOptions opt;
  opt.K = 2;
  ClusterOpeReport rep = clustering_ope(ds, fx.pi_e, opt, false, 1);
  REQUIRE(rep.v_c.size() == rep.w_c.size());
  double mix = 0.0;
  for (size_t c = 0; c < rep.v_c.size(); ++c) mix += rep.w_c[c] * rep.v_c[c];
  CHECK(rep.v_hat == doctest::Approx(mix).epsilon(1e-12));
  int n = 0;
  for (int sz : rep.sizes) n += sz;
  CHECK(n == 60);
}

TEST_CASE("state projection relabels and keeps hidden labels") {
  Fixture fx = make_fixture("sepsis");
  REQUIRE(fx.obs_projection.size() == static_cast<size_t>(fx.mdps[0].S));
  Dataset ds = simulate(fx.mdps[0], fx.pi_b[0], 20, fx.mdps[0].H, 7);
  Dataset pr = project_dataset(ds, fx.obs_projection);
  int max_obs = 0;
  for (int v : fx.obs_projection) max_obs = std::max(max_obs, v);
  CHECK(pr.S == max_obs + 1);
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    CHECK(pr.trajs[i].u == ds.trajs[i].u);
    for (size_t h = 0; h < ds.trajs[i].s.size(); ++h)
      CHECK(pr.trajs[i].s[h] == fx.obs_projection[ds.trajs[i].s[h]]);
  }
}

TEST_CASE("a single latent type clusters into one group") {
  Fixture fx = sepsis_toy(3, 1, 60);
  Dataset ds = simulate(fx.mdps[0], fx.pi_b[0], 25, fx.mdps[0].H, 11);
  ClusterOptions opt;
  opt.K = 1;
  Clustering cl = cluster_single_linkage(ds, opt);
  std::vector<int> truth = true_labels(ds);
  CHECK(permutation_accuracy(cl.assign, truth, 1) == doctest::Approx(1.0));
}
