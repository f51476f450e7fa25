#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/mdp.hpp"

using namespace confope;

namespace {

Dataset tiny_dataset() {
  // Two hand-written trajectories, S = 2, A = 1, H = 3.
  Dataset ds;
  ds.S = 2;
  ds.A = 1;
  ds.H = 3;
  ds.env_id = "hand";
  ds.seed = 0;
  Trajectory t1;
  t1.s = {0, 1, 0};
  t1.a = {0, 0, 0};
  t1.r = {1.0, 0.0, 1.0};
  t1.u = {0, 0, 0};
  Trajectory t2;
  t2.s = {0, 0, 1};
  t2.a = {0, 0, 0};
  t2.r = {1.0, 1.0, 0.0};
  t2.u = {0, 0, 0};
  ds.trajs = {t1, t2};
  return ds;
}

std::string slurp(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string out;
  char buf[4096];
  size_t k;
  while ((k = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, k);
  std::fclose(f);
  return out;
}

}  // namespace

TEST_CASE("parallel and serial simulation are bit-identical") {
  Fixture fx = two_mixture();
  Dataset a = simulate(fx.mdps[0], fx.pi_b[0], 50, 20, 3);
  Dataset b = simulate_reference(fx.mdps[0], fx.pi_b[0], 50, 20, 3);
  REQUIRE(a.trajs.size() == b.trajs.size());
  for (size_t i = 0; i < a.trajs.size(); ++i) {
    CHECK(a.trajs[i].s == b.trajs[i].s);
    CHECK(a.trajs[i].a == b.trajs[i].a);
    CHECK(a.trajs[i].u == b.trajs[i].u);
    for (size_t h = 0; h < a.trajs[i].r.size(); ++h)
      CHECK(a.trajs[i].r[h] == b.trajs[i].r[h]);
  }
}

TEST_CASE("simulation is seed-deterministic") {
  Fixture fx = make_fixture("gridworld");
  Dataset a = simulate(fx.mdps[0], fx.pi_b[0], 20, 8, 42);
  Dataset b = simulate(fx.mdps[0], fx.pi_b[0], 20, 8, 42);
  Dataset c = simulate(fx.mdps[0], fx.pi_b[0], 20, 8, 43);
  for (size_t i = 0; i < a.trajs.size(); ++i) CHECK(a.trajs[i].s == b.trajs[i].s);
  bool same = true;
  for (size_t i = 0; i < a.trajs.size(); ++i) same = same && a.trajs[i].s == c.trajs[i].s;
  CHECK_FALSE(same);
}

TEST_CASE("counts add up") {
  Fixture fx = two_mixture();
  Dataset ds = simulate(fx.mdps[0], fx.pi_b[0], 30, 20, 9);
  Counts c = counts(ds);
  for (int h = 0; h < ds.H; ++h) {
    double tot = 0.0;
    for (int s = 0; s < ds.S; ++s) tot += c.n_s[h][s];
    CHECK(tot == doctest::Approx(30.0));
    double tot_sa = 0.0;
    for (size_t i = 0; i < c.n_sa[h].size(); ++i) tot_sa += c.n_sa[h][i];
    CHECK(tot_sa == doctest::Approx(30.0));
  }
}

TEST_CASE("empirical model from a hand dataset") {
  Model m = empirical_model(tiny_dataset(), /*pooled=*/true);
  // From state 0 the recorded transitions are 0->1, 0->0, 0->1.
  CHECK(m.P[0][0 * 2 + 0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(m.P[0][0 * 2 + 1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // From state 1 there is a single transition 1->0.
  CHECK(m.P[0][1 * 2 + 0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.cell_visited(0, 0, 0));
  // Rewards average the recorded payouts per (s, a).
  CHECK(m.r[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.r[0][1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("analytic model rows are distributions on visited cells") {
  Fixture fx = make_fixture("gridworld");
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], /*pooled=*/true);
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a) {
      if (!m.cell_visited(0, s, a)) continue;
      double tot = 0.0;
      for (int s2 = 0; s2 < m.S; ++s2) tot += m.P[0][(static_cast<size_t>(s) * m.A + a) * m.S + s2];
      CHECK(tot == doctest::Approx(1.0).epsilon(1e-9));
    }
  for (int s = 0; s < m.S; ++s) {
    double tot = 0.0;
    for (int a = 0; a < m.A; ++a) tot += m.pi_b[0][static_cast<size_t>(s) * m.A + a];
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("concentration widths: closed form and shrinkage") {
  // Single self-looping state: every step holds all n trajectories, so the
  // effective count is exactly n and the half-width is the plain formula.
  ConfoundedMdp m;
  m.S = 1;
  m.U = 1;
  m.A = 1;
  m.H = 4;
  m.stationary = true;
  m.d0 = {1.0};
  m.reward = {{0.0}};
  m.proc.kind = ConfounderProcess::Kind::Memoryless;
  m.proc.p_u_s = {Mat(1, Vec{1.0})};
  m.kernel = {Vec{1.0}};
  m.validate();
  Policy pb = Policy::observed_uniform(1, 1);

  Dataset d100 = simulate(m, pb, 100, 4, 1);
  Widths w100 = hoeffding_widths(d100, 0.05, 0.05);
  CHECK(w100.n_star_s[0] == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(w100.delta_pi[0] ==
        doctest::Approx(std::sqrt(std::log(2.0 / 0.05) / 200.0)).epsilon(1e-12));

  Dataset d1000 = simulate(m, pb, 1000, 4, 1);
  Widths w1000 = hoeffding_widths(d1000, 0.05, 0.05);
  CHECK(w1000.delta_pi[0] < w100.delta_pi[0]);
  CHECK(w1000.delta_P[0] < w100.delta_P[0]);
}

TEST_CASE("effective count is a soft minimum over per-step visits") {
  // Deterministic two-state cycle from state 0: per-step visit counts for
  // each state alternate between n and 0, so the effective count collapses
  // to roughly log 2 rather than n.
  ConfoundedMdp m;
  m.S = 2;
  m.U = 1;
  m.A = 1;
  m.H = 4;
  m.stationary = true;
  m.d0 = {1.0, 0.0};
  m.reward = {{0.0}, {0.0}};
  m.proc.kind = ConfounderProcess::Kind::Memoryless;
  m.proc.p_u_s = {Mat(2, Vec{1.0})};
  Vec K(4, 0.0);
  K[0 * 2 + 1] = 1.0;
  K[1 * 2 + 0] = 1.0;
  m.kernel = {K};
  m.validate();
  Dataset ds = simulate(m, Policy::observed_uniform(2, 1), 50, 4, 2);
  Counts c = counts(ds);
  Widths w = hoeffding_widths(ds, 0.05, 0.05);
  for (int s = 0; s < 2; ++s) {
    double acc = 0.0;
    for (int h = 0; h < 4; ++h) acc += std::exp(-c.n_s[h][s]) / 4.0;
    CHECK(w.n_star_s[s] == doctest::Approx(-std::log(acc)).epsilon(1e-9));
  }
  CHECK(w.n_star_s[0] < 2.0);  // dominated by the empty steps
}

TEST_CASE("dataset file round trip preserves unvisited dimensions") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "confope_test_data";
  fs::create_directories(dir);
  std::string jp = (dir / "data.jsonl").string(), mp = (dir / "meta.json").string();

  // Two steps from the gridworld start never reach the goal state, so the
  // data alone under-reports S; the sidecar must restore it.
  Fixture fx = make_fixture("gridworld");
  Dataset ds = simulate(fx.mdps[0], fx.pi_b[0], 10, 2, 7);
  CHECK(ds.S == 16);
  write_dataset(ds, jp, mp);
  Dataset back = read_dataset(jp, mp);
  CHECK(back.S == 16);
  CHECK(back.A == ds.A);
  CHECK(back.H == ds.H);
  CHECK(back.env_id == ds.env_id);
  CHECK(back.seed == ds.seed);
  REQUIRE(back.trajs.size() == ds.trajs.size());
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    CHECK(back.trajs[i].s == ds.trajs[i].s);
    CHECK(back.trajs[i].a == ds.trajs[i].a);
    CHECK(back.trajs[i].u == ds.trajs[i].u);
  }

  // Same seed, same bytes.
  std::string first = slurp(jp);
  write_dataset(simulate(fx.mdps[0], fx.pi_b[0], 10, 2, 7), jp, mp);
  CHECK(slurp(jp) == first);
  fs::remove_all(dir);
}

TEST_CASE("monte carlo return agrees with exact evaluation") {
  Fixture fx = two_mixture();
  double v = exact_value(fx.mdps[0], fx.pi_b[0]).v;
  double mc = mc_return(fx.mdps[0], fx.pi_b[0], 4000, 11);
  // Returns live in [0, 20]; 4000 episodes put the standard error near 0.1.
  CHECK(std::abs(mc - v) < 0.5);
}
