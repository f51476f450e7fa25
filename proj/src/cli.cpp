#include "confope/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "confope/acceptance.hpp"
#include "confope/cluster.hpp"
#include "confope/data.hpp"
#include "confope/envs.hpp"
#include "confope/io.hpp"
#include "confope/model_based.hpp"
#include "confope/ope.hpp"
#include "confope/policy_opt.hpp"
#include "confope/rng.hpp"
#include "confope/sensitivity.hpp"

namespace confope {

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitCoverage = 4;
constexpr int kExitAcceptance = 5;

// ---- config file injection -----------------------------------------------

// Pull "--config PATH" out of args; returns the path ("" if absent).
std::string extract_config(std::vector<std::string>* args) {
  std::string path;
  std::vector<std::string> rest;
  for (size_t i = 0; i < args->size(); ++i) {
    const std::string& a = (*args)[i];
    if (a == "--config") {
      if (i + 1 >= args->size()) throw ConfigError("--config needs a file path");
      path = (*args)[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    } else {
      rest.push_back(a);
    }
  }
  *args = rest;
  return path;
}

// Turn the JSON object into command-line tokens inserted right after the
// subcommand, so explicit flags (parsed later) override the file.
std::vector<std::string> apply_config(const std::vector<std::string>& args,
                                      const std::string& cfg_path) {
  std::ifstream f(cfg_path);
  if (!f) throw ConfigError("cannot open config file " + cfg_path);
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
  if (args.empty() || args[0].rfind("-", 0) == 0)
    throw ConfigError("--config requires a leading subcommand");

  std::vector<std::string> tokens;
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const std::string key = "--" + it.key();
    const json& v = it.value();
    if (v.is_boolean()) {
      if (v.get<bool>()) tokens.push_back(key);
    } else if (v.is_array()) {
      std::string joined;
      for (const json& x : v) {
        if (!joined.empty()) joined += ',';
        joined += x.is_string() ? x.get<std::string>() : fmt_g(x.get<double>());
      }
      tokens.push_back(key + "=" + joined);
    } else if (v.is_string()) {
      tokens.push_back(key + "=" + v.get<std::string>());
    } else if (v.is_number_integer()) {
      tokens.push_back(key + "=" + std::to_string(v.get<long long>()));
    } else if (v.is_number()) {
      tokens.push_back(key + "=" + fmt_g(v.get<double>()));
    } else {
      throw ConfigError("config key '" + it.key() + "' has an unsupported type");
    }
  }
  std::vector<std::string> out;
  out.push_back(args[0]);
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

// ---- shared helpers ------------------------------------------------------

struct EnvChoice {
  Fixture fx;
  int model = 0;  // index into fx.mdps
};

EnvChoice pick_env(const std::string& env, int model_1based) {
  EnvChoice ec;
  ec.fx = make_fixture(env);
  if (model_1based < 1 || model_1based > static_cast<int>(ec.fx.mdps.size()))
    throw ConfigError("--model " + std::to_string(model_1based) + " out of range for '" +
                      ec.fx.id + "' (" + std::to_string(ec.fx.mdps.size()) + " model(s))");
  ec.model = model_1based - 1;
  return ec;
}

// env id stored in dataset metadata, with the pair member appended.
std::string tag_env(const std::string& id, int model_1based) {
  return model_1based == 1 ? id : id + "#" + std::to_string(model_1based);
}
void untag_env(const std::string& tagged, std::string* id, int* model_1based) {
  auto pos = tagged.find('#');
  if (pos == std::string::npos) {
    *id = tagged;
    *model_1based = 1;
  } else {
    *id = tagged.substr(0, pos);
    *model_1based = std::atoi(tagged.c_str() + pos + 1);
  }
}

// Most frequent start state (ties to the smallest index).
int modal_start(const Dataset& ds) {
  std::vector<int> cnt(ds.S, 0);
  for (const Trajectory& t : ds.trajs)
    if (!t.s.empty()) ++cnt[t.s[0]];
  return static_cast<int>(std::max_element(cnt.begin(), cnt.end()) - cnt.begin());
}

Vec empirical_start_law(const Dataset& ds) {
  Vec d(ds.S, 0.0);
  size_t n = 0;
  for (const Trajectory& t : ds.trajs)
    if (!t.s.empty()) {
      d[t.s[0]] += 1.0;
      ++n;
    }
  if (n == 0) throw ConfigError("dataset has no nonempty trajectories");
  for (double& x : d) x /= static_cast<double>(n);
  return d;
}

// Restrict an observed policy to projected states; requires the policy to
// act identically on every state that projects to the same observation.
Policy project_policy(const Policy& pi, const std::vector<int>& proj, int A) {
  int S_obs = *std::max_element(proj.begin(), proj.end()) + 1;
  std::vector<Vec> tabs;
  for (int t = 0; t < pi.steps(); ++t) {
    Vec tab(static_cast<size_t>(S_obs) * A, -1.0);
    for (size_t s = 0; s < proj.size(); ++s)
      for (int a = 0; a < A; ++a) {
        double p = pi.p(t, static_cast<int>(s), 0, a);
        double& slot = tab[static_cast<size_t>(proj[s]) * A + a];
        if (slot < 0.0)
          slot = p;
        else if (std::abs(slot - p) > 1e-12)
          throw ConfigError("target policy differs within an observation class; cannot project");
      }
    tabs.push_back(std::move(tab));
  }
  return Policy::observed(S_obs, A, tabs);
}

Mat random_logits(int S, int A, std::uint64_t seed) {
  Rng rng(seed ^ 0x7E7A0ULL);
  Mat th(S, Vec(A, 0.0));
  for (auto& row : th)
    for (double& x : row) x = rng.uniform(-1.0, 1.0);
  return th;
}

void write_policy_json(const std::string& path, const Mat& theta) {
  Policy pi = Policy::softmax(theta);
  json j;
  j["theta"] = theta;
  Mat probs(theta.size(), Vec(theta.empty() ? 0 : theta[0].size(), 0.0));
  for (size_t s = 0; s < theta.size(); ++s)
    for (size_t a = 0; a < theta[s].size(); ++a)
      probs[s][a] = pi.p(0, static_cast<int>(s), 0, static_cast<int>(a));
  j["pi"] = probs;
  write_text(path, j.dump(2) + "\n");
}

std::vector<TraceRow> trace_rows(const ImprovementTrace& tr) {
  std::vector<TraceRow> rows;
  for (size_t i = 0; i < tr.objective.size(); ++i)
    rows.push_back({static_cast<int>(i), tr.objective[i], tr.grad_norm[i]});
  return rows;
}

// Mean/sd across trials of per-iteration traces (all the same length).
void mean_sd(const std::vector<Vec>& runs, Vec* mean, Vec* sd) {
  size_t T = runs.at(0).size(), n = runs.size();
  mean->assign(T, 0.0);
  sd->assign(T, 0.0);
  for (const Vec& r : runs)
    for (size_t i = 0; i < T; ++i) (*mean)[i] += r[i];
  for (double& m : *mean) m /= static_cast<double>(n);
  if (n > 1) {
    for (const Vec& r : runs)
      for (size_t i = 0; i < T; ++i) {
        double d = r[i] - (*mean)[i];
        (*sd)[i] += d * d;
      }
    for (double& s : *sd) s = std::sqrt(s / static_cast<double>(n - 1));
  }
}

// ---- ope -----------------------------------------------------------------

struct OpeArgs {
  std::string data_dir, env;
  bool analytic = false;
  int model = 1;
  std::string method;
  std::vector<double> gammas{1.0};
  int state = -1;
  bool widened = false;
  double delta1 = 0.05, delta2 = 0.05;
  int clusters = 2;
  bool em = false;
  int pgd_iters = 300;
  int pgd_restarts = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_ope(const OpeArgs& a) {
  if (a.gammas.empty()) throw ConfigError("--gamma list is empty");
  Dataset ds;
  std::optional<EnvChoice> ec;
  Model m;
  std::uint64_t seed_col = a.seed;

  if (a.analytic) {
    if (a.env.empty()) throw ConfigError("--analytic requires --env");
    ec = pick_env(a.env, a.model);
    if (!ec->fx.obs_projection.empty())
      throw ConfigError("analytic mode is unavailable for partially observed environments; "
                        "generate data instead");
    m = analytic_model(ec->fx.mdps[ec->model], ec->fx.pi_b[ec->model], /*pooled=*/true);
  } else {
    if (a.data_dir.empty()) throw ConfigError("pass --data DIR or --analytic --env ID");
    ds = read_dataset(a.data_dir + "/data.jsonl", a.data_dir + "/meta.json");
    seed_col = ds.seed;
    std::string id = a.env;
    int model = a.model;
    if (id.empty()) untag_env(ds.env_id, &id, &model);
    if (id.empty()) throw ConfigError("dataset has no environment id; pass --env");
    ec = pick_env(id, model);
    if (!ec->fx.obs_projection.empty()) {
      // Hidden-coordinate environments log full states; analysis sees the
      // projection.
      ds = project_dataset(ds, ec->fx.obs_projection);
    }
    m = empirical_model(ds, /*pooled=*/true);
  }

  Policy pi_e = ec->fx.pi_e;
  if (!ec->fx.obs_projection.empty())
    pi_e = project_policy(pi_e, ec->fx.obs_projection, ec->fx.mdps[ec->model].A);
  if (pi_e.S != m.S || pi_e.A != m.A)
    throw ConfigError("target policy dimensions do not match the dataset");
  if (a.state >= m.S) throw ConfigError("--state out of range");

  // Start-state weights for reporting a single value when --state is absent.
  Vec w0;
  if (a.state < 0) {
    if (a.analytic)
      w0 = ec->fx.mdps[ec->model].d0;
    else
      w0 = empirical_start_law(ds);
  }
  auto report_value = [&](const ValueReport& rep) {
    if (a.state >= 0) return rep.v1[a.state];
    double v = 0.0;
    for (int s = 0; s < m.S; ++s) v += w0[s] * rep.v1[s];
    return v;
  };

  std::optional<Widths> widths;
  if (a.widened) {
    if (a.analytic) throw ConfigError("--widened needs sampled data");
    widths = hoeffding_widths(ds, a.delta1, a.delta2);
  }

  std::vector<ValueRow> rows;
  for (double gamma : a.gammas) {
    if (gamma < 1.0) throw ConfigError("--gamma must be >= 1");
    if (a.method == "fqe") {
      ValueReport rep = fqe(m, pi_e, a.state);
      rows.push_back({gamma, rep.method, a.state, report_value(rep), rep.is_lower_bound, seed_col});
      continue;
    }
    if (a.method == "cluster") {
      if (a.analytic) throw ConfigError("--method cluster needs sampled data");
      ClusterOptions co;
      co.K = a.clusters;
      co.seed = a.seed;
      ClusterOpeReport rep = clustering_ope(ds, pi_e, co, a.em, a.state);
      rows.push_back({gamma, "cluster", a.state, rep.v_hat, false, seed_col});
      for (size_t c = 0; c < rep.v_c.size(); ++c)
        rows.push_back({gamma, "cluster:" + std::to_string(c), a.state,
                        rep.v_c[c], false, seed_col});
      continue;
    }
    Uncertainty tu = widths ? build_uncertainty_widened(m, gamma, *widths)
                            : build_uncertainty(m, gamma);
    check_feasible(tu);
    if (a.method == "cfqe") {
      ValueReport rep = cfqe(m, pi_e, tu, a.state);
      rows.push_back({gamma, rep.method, a.state, report_value(rep), rep.is_lower_bound, seed_col});
    } else if (a.method == "mb-relax") {
      ValueReport rep = mb_relaxation(m, pi_e, tu, a.state);
      rows.push_back({gamma, rep.method, a.state, report_value(rep), rep.is_lower_bound, seed_col});
    } else if (a.method == "naive-lb") {
      ValueReport rep = naive_lb(m, pi_e, envelope_l1_radius(m, tu), a.state);
      rows.push_back({gamma, rep.method, a.state, report_value(rep), rep.is_lower_bound, seed_col});
    } else if (a.method == "mb-pgd") {
      int s0 = a.state;
      if (s0 < 0) s0 = a.analytic ? start_state(ec->fx.mdps[ec->model]) : modal_start(ds);
      PgdOptions po;
      po.iters = a.pgd_iters;
      po.restarts = a.pgd_restarts;
      po.seed = a.seed;
      PgdResult res = mb_pgd(m, pi_e, tu, s0, po);
      rows.push_back({gamma, "mb-pgd", s0, res.v_min, true, seed_col});
    } else {
      throw ConfigError("unknown method '" + a.method + "'");
    }
  }

  std::string csv = values_csv(rows);
  std::cout << csv;
  if (!a.out.empty()) write_text(a.out + "/values.csv", csv);
  return 0;
}

// ---- improve -------------------------------------------------------------

struct ImproveArgs {
  std::string data_dir, env, method;
  bool analytic = false;
  int model = 1;
  double gamma = 10.0;
  int state = -1;
  int outer = 60, inner = 300;
  double eta = -1.0;  // default depends on method
  int clusters = 2, iters = 150;
  std::string estimator = "approx";
  bool oblivious = false;
  bool random_init = false;
  std::uint64_t seed = 0;
  std::string out = "out/improve";
};

int run_improve(const ImproveArgs& a) {
  if (a.method == "maxmin") {
    Model m;
    int s0 = a.state;
    if (a.analytic || !a.env.empty()) {
      EnvChoice ec = pick_env(a.env, a.model);
      m = analytic_model(ec.fx.mdps[ec.model], ec.fx.pi_b[ec.model], true);
      if (s0 < 0) s0 = start_state(ec.fx.mdps[ec.model]);
    } else {
      if (a.data_dir.empty()) throw ConfigError("pass --data DIR or --analytic --env ID");
      Dataset ds = read_dataset(a.data_dir + "/data.jsonl", a.data_dir + "/meta.json");
      m = empirical_model(ds, true);
      if (s0 < 0) s0 = modal_start(ds);
    }
    Mat theta0 = a.random_init ? random_logits(m.S, m.A, a.seed) : Mat(m.S, Vec(m.A, 0.0));
    MaxminOptions mo;
    mo.outer_iters = a.outer;
    mo.inner_iters = a.inner;
    if (a.eta > 0) mo.eta0 = a.eta;
    mo.seed = a.seed;
    MaxminResult res = maxmin_improve(m, a.gamma, theta0, s0, mo);
    write_text(a.out + "/trace.csv", trace_csv(trace_rows(res.trace)));
    write_policy_json(a.out + "/policy.json", res.theta);
    std::cout << "final lower bound " << fmt_g(res.lower_bound) << " (initial "
              << fmt_g(res.trace.objective.front()) << ") after " << a.outer
              << " rounds; outputs in " << a.out << "\n";
    return 0;
  }
  if (a.method == "cluster-pg") {
    if (a.data_dir.empty()) throw ConfigError("--method cluster-pg needs --data");
    Dataset ds = read_dataset(a.data_dir + "/data.jsonl", a.data_dir + "/meta.json");
    std::string id;
    int model = 1;
    untag_env(ds.env_id.empty() ? a.env : ds.env_id, &id, &model);
    if (!id.empty()) {
      Fixture fx = make_fixture(id);
      if (!fx.obs_projection.empty()) ds = project_dataset(ds, fx.obs_projection);
    }
    Mat theta0 = a.random_init ? random_logits(ds.S, ds.A, a.seed) : Mat(ds.S, Vec(ds.A, 0.0));
    ClusterPgOptions co;
    co.iters = a.iters;
    if (a.eta > 0) co.eta = a.eta;
    co.estimator = a.estimator == "is" ? GradEstimator::IsReinforce : GradEstimator::Approximate;
    if (a.estimator != "is" && a.estimator != "approx")
      throw ConfigError("--estimator must be 'is' or 'approx'");
    co.cluster.K = a.clusters;
    co.cluster.seed = a.seed;
    co.force_single = a.oblivious;
    co.s0 = a.state;
    ClusterPgResult res = cluster_policy_gradient(ds, theta0, co);
    write_text(a.out + "/trace.csv", trace_csv(trace_rows(res.trace)));
    write_policy_json(a.out + "/policy.json", res.theta);
    std::cout << "final estimate " << fmt_g(res.trace.objective.back()) << " (initial "
              << fmt_g(res.trace.objective.front()) << ") with " << res.weights.size()
              << " cluster(s); outputs in " << a.out << "\n";
    return 0;
  }
  throw ConfigError("unknown method '" + a.method + "'");
}

// ---- reproduce -----------------------------------------------------------

struct ReproArgs {
  std::string figure;
  int trials = 30;
  std::uint64_t seed = 1;
  std::string out = "out";
};

int repro_fig1(const ReproArgs& a) {
  const Vec gammas = {1, 2, 5, 10, 20, 50};
  const int n = 5000, s0 = 13;
  Fixture fx = gridworld_iid();
  const ConfoundedMdp& mdp = fx.mdps[0];
  double v_true = exact_value(mdp, fx.pi_e).v1[s0];

  struct TrialOut {
    Vec fqe_v, cfqe_v, pgd_v;  // per gamma
  };
  std::vector<TrialOut> res(a.trials);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < a.trials; ++t) {
    std::uint64_t seed = a.seed + static_cast<std::uint64_t>(t);
    Dataset ds = simulate(mdp, fx.pi_b[0], n, mdp.H, seed);
    Model m = empirical_model(ds, true);
    TrialOut& o = res[t];
    for (double g : gammas) {
      Uncertainty tu = build_uncertainty(m, g);
      check_feasible(tu);
      o.fqe_v.push_back(fqe(m, fx.pi_e, s0).v1[s0]);
      o.cfqe_v.push_back(cfqe(m, fx.pi_e, tu, s0).v1[s0]);
      PgdOptions po;
      po.seed = seed;
      o.pgd_v.push_back(mb_pgd(m, fx.pi_e, tu, s0, po).v_min);
    }
  }

  std::vector<ValueRow> rows;
  for (int t = 0; t < a.trials; ++t) {
    std::uint64_t seed = a.seed + static_cast<std::uint64_t>(t);
    for (size_t k = 0; k < gammas.size(); ++k) {
      rows.push_back({gammas[k], "fqe", s0, res[t].fqe_v[k], false, seed});
      rows.push_back({gammas[k], "cfqe", s0, res[t].cfqe_v[k], true, seed});
      rows.push_back({gammas[k], "mb-pgd", s0, res[t].pgd_v[k], true, seed});
    }
  }
  for (double g : gammas) rows.push_back({g, "true", s0, v_true, false, 0});
  write_text(a.out + "/fig1.csv", values_csv(rows));

  auto series_of = [&](const std::string& label, auto pick) {
    Series s;
    s.label = label;
    s.x = gammas;
    for (size_t k = 0; k < gammas.size(); ++k) {
      Vec vals;
      for (int t = 0; t < a.trials; ++t) vals.push_back(pick(res[t], k));
      double mean = 0;
      for (double v : vals) mean += v;
      mean /= vals.size();
      double sd = 0;
      if (vals.size() > 1) {
        for (double v : vals) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / (vals.size() - 1));
      }
      s.mean.push_back(mean);
      s.sd.push_back(sd);
    }
    return s;
  };
  std::vector<Series> series;
  series.push_back(series_of("fqe", [](const TrialOut& o, size_t k) { return o.fqe_v[k]; }));
  series.push_back(series_of("cfqe", [](const TrialOut& o, size_t k) { return o.cfqe_v[k]; }));
  series.push_back(series_of("mb-pgd", [](const TrialOut& o, size_t k) { return o.pgd_v[k]; }));
  Series tr;
  tr.label = "true value";
  tr.x = gammas;
  tr.mean.assign(gammas.size(), v_true);
  tr.sd.assign(gammas.size(), 0.0);
  series.push_back(tr);

  PlotSpec spec;
  spec.title = "Lower bounds vs sensitivity budget (start state " + std::to_string(s0) + ")";
  spec.xlabel = "gamma";
  spec.ylabel = "value";
  spec.log_x = true;
  write_text(a.out + "/fig1.svg", svg_plot(series, spec));
  std::cout << "fig1: " << a.trials << " trials over " << gammas.size() << " gamma values -> "
            << a.out << "/fig1.{csv,svg}\n";
  return 0;
}

int repro_fig2(const ReproArgs& a) {
  const int s0 = 13;
  const double gamma = 10.0;
  Fixture fx = gridworld_iid();
  Model m = analytic_model(fx.mdps[0], fx.pi_b[0], true);

  // Reference: the robust bound of the fixed target policy.
  Uncertainty tu = build_uncertainty(m, gamma);
  check_feasible(tu);
  double pie_lb = mb_pgd(m, fx.pi_e, tu, s0).v_min;

  MaxminOptions mo;
  mo.outer_iters = 40;
  mo.inner_iters = 120;
  std::vector<Vec> objs(a.trials);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < a.trials; ++t) {
    std::uint64_t seed = a.seed + static_cast<std::uint64_t>(t);
    MaxminOptions mt = mo;
    mt.seed = seed;
    MaxminResult r = maxmin_improve(m, gamma, random_logits(m.S, m.A, seed), s0, mt);
    objs[t] = r.trace.objective;
  }
  for (int t = 0; t < a.trials; ++t) {
    ImprovementTrace tr;
    tr.objective = objs[t];
    tr.grad_norm.assign(objs[t].size(), 0.0);
    std::vector<TraceRow> rows;
    for (size_t i = 0; i < objs[t].size(); ++i) rows.push_back({static_cast<int>(i), objs[t][i], 0.0});
    write_text(a.out + "/fig2_trace_" + std::to_string(t) + ".csv", trace_csv(rows));
  }

  Series asc;
  asc.label = "max-min ascent";
  mean_sd(objs, &asc.mean, &asc.sd);
  for (size_t i = 0; i < asc.mean.size(); ++i) asc.x.push_back(static_cast<double>(i));
  Series base;
  base.label = "target policy bound";
  base.x = asc.x;
  base.mean.assign(asc.x.size(), pie_lb);
  base.sd.assign(asc.x.size(), 0.0);

  PlotSpec spec;
  spec.title = "Robust lower bound during ascent (gamma 10)";
  spec.xlabel = "outer iteration";
  spec.ylabel = "lower bound";
  write_text(a.out + "/fig2.svg", svg_plot({asc, base}, spec));
  std::cout << "fig2: " << a.trials << " ascent runs -> " << a.out << "/fig2.svg (final mean "
            << fmt_g(asc.mean.back()) << ", target baseline " << fmt_g(pie_lb) << ")\n";
  return 0;
}

int repro_fig3(const ReproArgs& a) {
  const int n = 2000, H = 20, iters = 150;
  Fixture fx = two_mixture();
  const ConfoundedMdp& mdp = fx.mdps[0];
  int s0 = start_state(mdp);

  std::vector<Vec> obj_cl(a.trials), obj_ob(a.trials);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < a.trials; ++t) {
    std::uint64_t seed = a.seed + static_cast<std::uint64_t>(t);
    Dataset ds = simulate(mdp, fx.pi_b[0], n, H, seed);
    Mat theta0 = random_logits(mdp.S, mdp.A, seed);
    ClusterPgOptions co;
    co.iters = iters;
    co.cluster.K = 2;
    co.cluster.seed = seed;
    co.s0 = s0;
    co.truth = &mdp;
    obj_cl[t] = cluster_policy_gradient(ds, theta0, co).trace.objective;
    co.force_single = true;
    obj_ob[t] = cluster_policy_gradient(ds, theta0, co).trace.objective;
  }
  for (int t = 0; t < a.trials; ++t) {
    std::vector<TraceRow> rc, ro;
    for (size_t i = 0; i < obj_cl[t].size(); ++i) rc.push_back({static_cast<int>(i), obj_cl[t][i], 0.0});
    for (size_t i = 0; i < obj_ob[t].size(); ++i) ro.push_back({static_cast<int>(i), obj_ob[t][i], 0.0});
    write_text(a.out + "/fig3_trace_clustered_" + std::to_string(t) + ".csv", trace_csv(rc));
    write_text(a.out + "/fig3_trace_oblivious_" + std::to_string(t) + ".csv", trace_csv(ro));
  }

  Series cl, ob;
  cl.label = "clustered (2 groups)";
  ob.label = "single cluster";
  mean_sd(obj_cl, &cl.mean, &cl.sd);
  mean_sd(obj_ob, &ob.mean, &ob.sd);
  for (size_t i = 0; i < cl.mean.size(); ++i) cl.x.push_back(static_cast<double>(i));
  ob.x = cl.x;

  PlotSpec spec;
  spec.title = "Policy value during clustered gradient ascent";
  spec.xlabel = "iteration";
  spec.ylabel = "exact value of the iterate";
  write_text(a.out + "/fig3.svg", svg_plot({cl, ob}, spec));
  std::cout << "fig3: " << a.trials << " paired runs -> " << a.out << "/fig3.svg (final means "
            << fmt_g(cl.mean.back()) << " clustered vs " << fmt_g(ob.mean.back())
            << " single)\n";
  return 0;
}

int run_reproduce(const ReproArgs& a) {
  if (a.trials < 1) throw ConfigError("--trials must be >= 1");
  if (a.figure == "fixtures") {
    int failures = run_acceptance_battery(std::cout);
    return failures == 0 ? 0 : kExitAcceptance;
  }
  if (a.figure == "fig1") return repro_fig1(a);
  if (a.figure == "fig2") return repro_fig2(a);
  if (a.figure == "fig3") return repro_fig3(a);
  throw ConfigError("unknown figure '" + a.figure + "'");
}

}  // namespace

int cli_main(const std::vector<std::string>& raw_args) {
  std::vector<std::string> args = raw_args;
  try {
    std::string cfg = extract_config(&args);
    if (!cfg.empty()) args = apply_config(args, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  CLI::App app{"Tabular off-policy evaluation and improvement under hidden confounding"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // gen-data
  struct {
    std::string env, out = "out/data";
    int model = 1, n = 100, H = -1;
    std::uint64_t seed = 1;
  } gd;
  CLI::App* gen = app.add_subcommand("gen-data", "Simulate a behavior-policy dataset");
  gen->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  gen->add_option("--env", gd.env, "environment id")->required();
  gen->add_option("--model", gd.model, "pair member (1-based)");
  gen->add_option("--n", gd.n, "number of trajectories");
  gen->add_option("--H", gd.H, "episode length (default: the environment horizon)");
  gen->add_option("--seed", gd.seed, "simulation seed");
  gen->add_option("--out", gd.out, "output directory");

  OpeArgs oa;
  CLI::App* ope = app.add_subcommand("ope", "Run a value estimator");
  ope->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  ope->add_option("--data", oa.data_dir, "dataset directory from gen-data");
  ope->add_flag("--analytic", oa.analytic, "use the infinite-data model of --env");
  ope->add_option("--env", oa.env, "environment id (required with --analytic)");
  ope->add_option("--model", oa.model, "pair member (1-based)");
  ope->add_option("--method", oa.method, "fqe|cfqe|mb-relax|mb-pgd|naive-lb|cluster")->required();
  ope->add_option("--gamma", oa.gammas, "sensitivity budget(s)")->delimiter(',');
  ope->add_option("--state", oa.state, "start state (-1: start-law average)");
  ope->add_flag("--widened", oa.widened, "widen the envelope by finite-sample widths");
  ope->add_option("--delta1", oa.delta1, "behavior-policy confidence level");
  ope->add_option("--delta2", oa.delta2, "kernel confidence level");
  ope->add_option("--U", oa.clusters, "cluster count for --method cluster");
  ope->add_flag("--em", oa.em, "soft EM instead of linkage clustering");
  ope->add_option("--pgd-iters", oa.pgd_iters, "projected gradient steps");
  ope->add_option("--pgd-restarts", oa.pgd_restarts, "extra random starts");
  ope->add_option("--seed", oa.seed, "seed for pgd restarts / clustering");
  ope->add_option("--out", oa.out, "output directory (CSV also echoes to stdout)");

  ImproveArgs ia;
  CLI::App* imp = app.add_subcommand("improve", "Run policy improvement");
  imp->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  imp->add_option("--method", ia.method, "maxmin|cluster-pg")->required();
  imp->add_option("--data", ia.data_dir, "dataset directory");
  imp->add_flag("--analytic", ia.analytic, "use the infinite-data model of --env");
  imp->add_option("--env", ia.env, "environment id");
  imp->add_option("--model", ia.model, "pair member (1-based)");
  imp->add_option("--gamma", ia.gamma, "sensitivity budget (maxmin)");
  imp->add_option("--state", ia.state, "start state");
  imp->add_option("--outer", ia.outer, "outer rounds (maxmin)");
  imp->add_option("--inner", ia.inner, "inner minimization steps (maxmin)");
  imp->add_option("--eta", ia.eta, "ascent step scale");
  imp->add_option("--U", ia.clusters, "cluster count (cluster-pg)");
  imp->add_option("--iters", ia.iters, "ascent iterations (cluster-pg)");
  imp->add_option("--estimator", ia.estimator, "is|approx gradient estimator (cluster-pg)");
  imp->add_flag("--oblivious", ia.oblivious, "force a single cluster (baseline)");
  imp->add_flag("--random-init", ia.random_init, "random initial logits (else zeros)");
  imp->add_option("--seed", ia.seed, "seed");
  imp->add_option("--out", ia.out, "output directory");

  ReproArgs ra;
  CLI::App* rep = app.add_subcommand("reproduce", "Scaled figure-style experiments");
  rep->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  rep->add_option("--figure", ra.figure, "fig1|fig2|fig3|fixtures")->required();
  rep->add_option("--trials", ra.trials, "number of seeds");
  rep->add_option("--seed", ra.seed, "base seed");
  rep->add_option("--out", ra.out, "output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

#ifdef _OPENMP
  if (const char* tenv = std::getenv("CONFOPE_THREADS")) {
    int tn = std::atoi(tenv);
    if (tn > 0) omp_set_num_threads(tn);
  }
#endif

  try {
    if (gen->parsed()) {
      EnvChoice ec = pick_env(gd.env, gd.model);
      ConfoundedMdp mdp = ec.fx.mdps[ec.model];
      int H = gd.H;
      if (gen->count("--H") && H <= 0) throw ConfigError("--H must be positive");
      if (H <= 0) H = mdp.H;
      if (H > mdp.H) {
        if (!mdp.stationary)
          throw ConfigError("--H exceeds the environment horizon " + std::to_string(mdp.H));
        mdp = with_horizon(mdp, H);
      }
      if (gd.n <= 0) throw ConfigError("--n must be positive");
      Dataset ds = simulate(mdp, ec.fx.pi_b[ec.model], gd.n, H, gd.seed);
      ds.env_id = tag_env(ec.fx.id, gd.model);
      std::filesystem::create_directories(gd.out);
      write_dataset(ds, gd.out + "/data.jsonl", gd.out + "/meta.json");
      std::cout << "wrote " << gd.n << " trajectories (H=" << H << ", env=" << ds.env_id
                << ") to " << gd.out << "\n";
      return 0;
    }
    if (ope->parsed()) return run_ope(oa);
    if (imp->parsed()) return run_improve(ia);
    if (rep->parsed()) return run_reproduce(ra);
    throw ConfigError("no subcommand given");
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const CoverageError& e) {
    std::cerr << "coverage: " << e.what() << "\n";
    return kExitCoverage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace confope
