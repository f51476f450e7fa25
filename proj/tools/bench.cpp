// Timing harness for the parallel kernels against their serial reference
// implementations: episode simulation, pairwise trajectory statistics, and a
// many-seed estimator fan-out. Also verifies that both paths produce
// identical results before timing them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "confope/cluster.hpp"
#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/ope.hpp"

using namespace confope;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_ms(F&& f, int reps = 3) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    double t0 = now_ms();
    f();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void row(const std::string& name, double serial, double parallel, bool identical) {
  std::printf("%-28s %10.1f ms %10.1f ms   x%.2f   %s\n", name.c_str(), serial, parallel,
              parallel > 0 ? serial / parallel : 0.0, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 4000;
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  std::printf("%-28s %13s %13s %8s\n", "kernel", "serial", "parallel", "speedup");

  Fixture fx = two_mixture();
  const ConfoundedMdp& mdp = fx.mdps[0];
  const Policy& pi_b = fx.pi_b[0];
  const int H = 20;

  // Episode simulation.
  Dataset ds_par, ds_ser;
  double t_sim_p = time_ms([&] { ds_par = simulate(mdp, pi_b, n, H, 7); });
  double t_sim_s = time_ms([&] { ds_ser = simulate_reference(mdp, pi_b, n, H, 7); });
  bool sim_same = ds_par.trajs.size() == ds_ser.trajs.size();
  for (size_t i = 0; sim_same && i < ds_par.trajs.size(); ++i)
    sim_same = ds_par.trajs[i].s == ds_ser.trajs[i].s && ds_par.trajs[i].a == ds_ser.trajs[i].a &&
               ds_par.trajs[i].r == ds_ser.trajs[i].r;
  row("simulate", t_sim_s, t_sim_p, sim_same);

  // Pairwise corrected distances.
  std::vector<TrajStats> st = trajectory_stats(ds_par);
  Vec d_par, d_ser;
  double t_pd_p = time_ms([&] { d_par = pairwise_distances(st, mdp.S, mdp.A, 5, true); });
  double t_pd_s = time_ms([&] { d_ser = pairwise_distances_reference(st, mdp.S, mdp.A, 5); });
  bool pd_same = d_par.size() == d_ser.size();
  for (size_t i = 0; pd_same && i < d_par.size(); ++i) {
    bool both_nan = std::isnan(d_par[i]) && std::isnan(d_ser[i]);
    pd_same = both_nan || d_par[i] == d_ser[i];
  }
  row("pairwise distances", t_pd_s, t_pd_p, pd_same);

  // Estimator fan-out across seeds.
  const int trials = 24;
  Vec v_par(trials), v_ser(trials);
  auto trial = [&](int t) {
    Dataset d = simulate(mdp, pi_b, n / 4, H, 100 + static_cast<uint64_t>(t));
    Model m = empirical_model(d, true);
    return fqe(m, fx.pi_e, start_state(mdp)).v1[start_state(mdp)];
  };
  double t_fan_p = time_ms([&] {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < trials; ++t) v_par[t] = trial(t);
  });
  double t_fan_s = time_ms([&] {
    for (int t = 0; t < trials; ++t) v_ser[t] = trial(t);
  });
  row("trial fan-out", t_fan_s, t_fan_p, v_par == v_ser);
  return 0;
}
