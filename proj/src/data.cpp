#include "confope/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "confope/rng.hpp"

namespace confope {

using nlohmann::json;

static Trajectory simulate_one(const ConfoundedMdp& mdp, const Policy& pi_b, int H, Rng rng) {
  Trajectory t;
  t.s.resize(H);
  t.a.resize(H);
  t.u.resize(H);
  t.r.resize(H);
  int s = rng.categorical(mdp.d0);
  int u;
  switch (mdp.proc.kind) {
    case ConfounderProcess::Kind::Memoryless:
      u = rng.categorical(mdp.proc.p_u_s[0][s]);
      break;
    case ConfounderProcess::Kind::Global:
      u = rng.categorical(mdp.proc.p_u);
      break;
    case ConfounderProcess::Kind::HistoryDeterministic:
      u = mdp.proc.u0;
      break;
    default:
      throw ConfigError("simulate: bad process kind");
  }
  Vec pa(mdp.A);
  for (int h = 0; h < H; ++h) {
    for (int a = 0; a < mdp.A; ++a) pa[a] = pi_b.p(h, s, u, a);
    int a = rng.categorical(pa);
    t.s[h] = s;
    t.a[h] = a;
    t.u[h] = u;
    t.r[h] = mdp.reward[s][a];
    if (h + 1 == H) break;
    int s2 = rng.categorical(mdp.row(h, s, u, a), mdp.S);
    switch (mdp.proc.kind) {
      case ConfounderProcess::Kind::Memoryless: {
        const Mat& tab = mdp.proc.p_u_s[mdp.proc.p_u_s.size() == 1 ? 0 : static_cast<size_t>(h + 1)];
        u = rng.categorical(tab[s2]);
        break;
      }
      case ConfounderProcess::Kind::Global:
        break;
      case ConfounderProcess::Kind::HistoryDeterministic:
        u = mdp.proc.next_u[u][a];
        break;
    }
    s = s2;
  }
  return t;
}

static Dataset simulate_impl(const ConfoundedMdp& mdp, const Policy& pi_b, int n, int H,
                             uint64_t seed, bool parallel) {
  if (H <= 0 || H > mdp.H) throw ConfigError("simulate: H must be in [1, mdp.H]");
  if (n <= 0) throw ConfigError("simulate: n must be positive");
  Dataset ds;
  ds.S = mdp.S;
  ds.A = mdp.A;
  ds.H = H;
  ds.seed = seed;
  ds.trajs.resize(n);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      ds.trajs[i] = simulate_one(mdp, pi_b, H, Rng::substream(seed, static_cast<uint64_t>(i)));
  } else {
    for (int i = 0; i < n; ++i)
      ds.trajs[i] = simulate_one(mdp, pi_b, H, Rng::substream(seed, static_cast<uint64_t>(i)));
  }
  return ds;
}

Dataset simulate(const ConfoundedMdp& mdp, const Policy& pi_b, int n, int H, uint64_t seed) {
  return simulate_impl(mdp, pi_b, n, H, seed, true);
}

Dataset simulate_reference(const ConfoundedMdp& mdp, const Policy& pi_b, int n, int H,
                           uint64_t seed) {
  return simulate_impl(mdp, pi_b, n, H, seed, false);
}

Counts counts(const Dataset& ds) {
  if (ds.S <= 0 || ds.A <= 0 || ds.H <= 0) throw ConfigError("counts: dataset missing dimensions");
  Counts c;
  c.S = ds.S;
  c.A = ds.A;
  c.H = ds.H;
  c.n_s.assign(ds.H, Vec(ds.S, 0.0));
  c.n_sa.assign(ds.H, Vec(static_cast<size_t>(ds.S) * ds.A, 0.0));
  c.n_sas.assign(std::max(0, ds.H - 1), Vec(static_cast<size_t>(ds.S) * ds.A * ds.S, 0.0));
  c.r_sum.assign(ds.H, Vec(static_cast<size_t>(ds.S) * ds.A, 0.0));
  for (const Trajectory& t : ds.trajs) {
    if (t.s.size() != static_cast<size_t>(ds.H)) throw ConfigError("counts: trajectory length mismatch");
    for (int h = 0; h < ds.H; ++h) {
      int s = t.s[h], a = t.a[h];
      if (s < 0 || s >= ds.S || a < 0 || a >= ds.A) throw ConfigError("counts: index out of range");
      c.n_s[h][s] += 1.0;
      c.n_sa[h][static_cast<size_t>(s) * ds.A + a] += 1.0;
      c.r_sum[h][static_cast<size_t>(s) * ds.A + a] += t.r[h];
      if (h + 1 < ds.H)
        c.n_sas[h][(static_cast<size_t>(s) * ds.A + a) * ds.S + t.s[h + 1]] += 1.0;
    }
  }
  return c;
}

double Model::reward_range() const {
  // Only cells the behavior policy actually produces define the observed
  // reward scale.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  bool any = false;
  for (size_t t = 0; t < r.size(); ++t)
    for (size_t i = 0; i < r[t].size(); ++i)
      if (pi_b[t][i] > 0.0) {
        any = true;
        lo = std::min(lo, r[t][i]);
        hi = std::max(hi, r[t][i]);
      }
  return any ? hi - lo : 0.0;
}

Model empirical_model(const Dataset& ds, bool pooled) {
  Counts c = counts(ds);
  Model m;
  m.S = ds.S;
  m.A = ds.A;
  m.H = ds.H;
  m.pooled = pooled;
  size_t SA = static_cast<size_t>(ds.S) * ds.A;
  int kernel_tables = pooled ? 1 : std::max(1, ds.H - 1);
  int policy_tables = pooled ? 1 : ds.H;
  m.P.assign(kernel_tables, Vec(SA * ds.S, 0.0));
  m.visited.assign(kernel_tables, std::vector<char>(SA, 0));
  m.n_sa.assign(kernel_tables, Vec(SA, 0.0));
  m.pi_b.assign(policy_tables, Vec(SA, 0.0));
  m.r.assign(policy_tables, Vec(SA, 0.0));

  for (int h = 0; h < ds.H; ++h) {
    int tp = pooled ? 0 : h;
    for (size_t i = 0; i < SA; ++i) m.r[tp][i] += c.r_sum[h][i];
    for (size_t i = 0; i < SA; ++i) m.pi_b[tp][i] += c.n_sa[h][i];
  }
  for (int t = 0; t < policy_tables; ++t)
    for (int s = 0; s < ds.S; ++s) {
      double ns = 0.0;
      for (int a = 0; a < ds.A; ++a) ns += m.pi_b[t][static_cast<size_t>(s) * ds.A + a];
      for (int a = 0; a < ds.A; ++a) {
        size_t i = static_cast<size_t>(s) * ds.A + a;
        double nsa = m.pi_b[t][i];
        m.r[t][i] = nsa > 0.0 ? m.r[t][i] / nsa : 0.0;
        m.pi_b[t][i] = ns > 0.0 ? nsa / ns : 0.0;
      }
    }
  for (int h = 0; h + 1 < ds.H; ++h) {
    int tk = pooled ? 0 : h;
    for (size_t i = 0; i < SA * static_cast<size_t>(ds.S); ++i) m.P[tk][i] += c.n_sas[h][i];
  }
  for (int t = 0; t < kernel_tables; ++t)
    for (size_t i = 0; i < SA; ++i) {
      double n = 0.0;
      for (int s2 = 0; s2 < ds.S; ++s2) n += m.P[t][i * ds.S + s2];
      m.n_sa[t][i] = n;
      if (n > 0.0) {
        m.visited[t][i] = 1;
        for (int s2 = 0; s2 < ds.S; ++s2) m.P[t][i * ds.S + s2] /= n;
      }
    }
  return m;
}

Model analytic_model(const ConfoundedMdp& mdp, const Policy& pi_b, bool pooled) {
  Occupancy occ = occupancy(mdp, pi_b);
  std::vector<Vec> bk = behavior_kernel(mdp, pi_b);
  Policy marg = marginalize_policy(mdp, pi_b);
  Model m;
  m.S = mdp.S;
  m.A = mdp.A;
  m.H = mdp.H;
  m.pooled = pooled;
  size_t SA = static_cast<size_t>(mdp.S) * mdp.A;
  int kernel_tables = pooled ? 1 : std::max(1, mdp.H - 1);
  int policy_tables = pooled ? 1 : mdp.H;
  m.P.assign(kernel_tables, Vec(SA * mdp.S, 0.0));
  m.visited.assign(kernel_tables, std::vector<char>(SA, 0));
  m.n_sa.assign(kernel_tables, Vec(SA, 0.0));
  m.pi_b.assign(policy_tables, Vec(SA, 0.0));
  m.r.assign(policy_tables, Vec(SA, 0.0));

  // Kernel cells weighted by behavior (s,a) occupancy; the infinite-data
  // estimate exists wherever that occupancy is positive.
  for (int h = 0; h + 1 < mdp.H; ++h) {
    int tk = pooled ? 0 : h;
    for (size_t i = 0; i < SA; ++i) {
      double w = occ.d_sa[h][i];
      if (w <= 0.0) continue;
      m.n_sa[tk][i] += w;
      for (int s2 = 0; s2 < mdp.S; ++s2) m.P[tk][i * mdp.S + s2] += w * bk[h][i * mdp.S + s2];
    }
  }
  for (int t = 0; t < kernel_tables; ++t)
    for (size_t i = 0; i < SA; ++i)
      if (m.n_sa[t][i] > 0.0) {
        m.visited[t][i] = 1;
        for (int s2 = 0; s2 < mdp.S; ++s2) m.P[t][i * mdp.S + s2] /= m.n_sa[t][i];
      }

  for (int h = 0; h < mdp.H; ++h) {
    int tp = pooled ? 0 : h;
    for (int s = 0; s < mdp.S; ++s) {
      double w = occ.d_s[h][s];
      for (int a = 0; a < mdp.A; ++a)
        m.pi_b[tp][static_cast<size_t>(s) * mdp.A + a] +=
            (pooled ? w : 1.0) * marg.p(h, s, 0, a);
    }
    if (!pooled)
      for (int s = 0; s < mdp.S; ++s)
        for (int a = 0; a < mdp.A; ++a)
          m.r[tp][static_cast<size_t>(s) * mdp.A + a] = mdp.reward[s][a];
  }
  if (pooled) {
    for (int s = 0; s < mdp.S; ++s) {
      double wtot = 0.0;
      for (int h = 0; h < mdp.H; ++h) wtot += occ.d_s[h][s];
      for (int a = 0; a < mdp.A; ++a) {
        size_t i = static_cast<size_t>(s) * mdp.A + a;
        // States pi_b never reaches keep a uniform-over-steps average so the
        // table still rows-normalizes; they are not marked visited anyway.
        if (wtot > 0.0) {
          m.pi_b[0][i] /= wtot;
        } else {
          double acc = 0.0;
          for (int h = 0; h < mdp.H; ++h) acc += marg.p(h, s, 0, a);
          m.pi_b[0][i] = acc / mdp.H;
        }
        m.r[0][i] = mdp.reward[s][a];
      }
    }
  }
  return m;
}

Widths hoeffding_widths(const Dataset& ds, double delta1, double delta2) {
  if (delta1 <= 0.0 || delta1 >= 1.0 || delta2 <= 0.0 || delta2 >= 1.0)
    throw ConfigError("hoeffding_widths: deltas must lie in (0,1)");
  Counts c = counts(ds);
  Widths w;
  size_t SA = static_cast<size_t>(ds.S) * ds.A;
  w.n_star_s.assign(ds.S, 0.0);
  w.n_star_sa.assign(SA, 0.0);
  w.delta_pi.assign(ds.S, 0.0);
  w.delta_P.assign(SA, 0.0);
  double l1 = std::log(2.0 * ds.S * ds.A / delta1);
  double l2 = std::log(2.0 * ds.S * ds.S * ds.A / delta2);
  for (int s = 0; s < ds.S; ++s) {
    Vec neg(ds.H);
    for (int h = 0; h < ds.H; ++h) neg[h] = -c.n_s[h][s];
    w.n_star_s[s] = -log_mean_exp(neg);
    w.delta_pi[s] = w.n_star_s[s] > 0.0 ? std::sqrt(l1 / (2.0 * w.n_star_s[s]))
                                        : std::numeric_limits<double>::infinity();
  }
  int Ht = std::max(1, ds.H - 1);
  for (size_t i = 0; i < SA; ++i) {
    Vec neg(Ht);
    for (int h = 0; h < Ht; ++h) {
      double n = 0.0;
      if (ds.H > 1)
        for (int s2 = 0; s2 < ds.S; ++s2) n += c.n_sas[h][i * ds.S + s2];
      neg[h] = -n;
    }
    w.n_star_sa[i] = -log_mean_exp(neg);
    w.delta_P[i] = w.n_star_sa[i] > 0.0 ? std::sqrt(l2 / (2.0 * w.n_star_sa[i]))
                                        : std::numeric_limits<double>::infinity();
  }
  return w;
}

double mc_return(const ConfoundedMdp& mdp, const Policy& pi, int n, uint64_t seed) {
  Dataset ds = simulate(mdp, pi, n, mdp.H, seed);
  double acc = 0.0;
  for (const Trajectory& t : ds.trajs)
    for (double r : t.r) acc += r;
  return acc / n;
}

void write_dataset(const Dataset& ds, const std::string& jsonl_path, const std::string& meta_path) {
  std::ofstream f(jsonl_path);
  if (!f) throw ConfigError("write_dataset: cannot open " + jsonl_path);
  for (const Trajectory& t : ds.trajs) {
    json j;
    j["s"] = t.s;
    j["a"] = t.a;
    j["r"] = t.r;
    j["u"] = t.u;
    f << j.dump() << "\n";
  }
  f.close();
  std::ofstream g(meta_path);
  if (!g) throw ConfigError("write_dataset: cannot open " + meta_path);
  json meta;
  meta["env_id"] = ds.env_id;
  meta["seed"] = ds.seed;
  meta["n"] = ds.trajs.size();
  meta["H"] = ds.H;
  meta["S"] = ds.S;
  meta["A"] = ds.A;
  g << meta.dump(2) << "\n";
}

Dataset read_dataset(const std::string& jsonl_path, const std::string& meta_path) {
  std::ifstream f(jsonl_path);
  if (!f) throw ConfigError("read_dataset: cannot open " + jsonl_path);
  Dataset ds;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw ConfigError("read_dataset: line " + std::to_string(lineno) + ": " + e.what());
    }
    Trajectory t;
    try {
      t.s = j.at("s").get<std::vector<int>>();
      t.a = j.at("a").get<std::vector<int>>();
      t.r = j.at("r").get<Vec>();
      if (j.contains("u")) t.u = j.at("u").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ConfigError("read_dataset: line " + std::to_string(lineno) + ": " + e.what());
    }
    if (t.s.size() != t.a.size() || t.s.size() != t.r.size() || t.s.empty())
      throw ConfigError("read_dataset: line " + std::to_string(lineno) + ": ragged trajectory");
    if (!t.u.empty() && t.u.size() != t.s.size())
      throw ConfigError("read_dataset: line " + std::to_string(lineno) + ": ragged labels");
    for (int v : t.s)
      if (v < 0) throw ConfigError("read_dataset: negative state index");
    for (int v : t.a)
      if (v < 0) throw ConfigError("read_dataset: negative action index");
    ds.trajs.push_back(std::move(t));
  }
  if (ds.trajs.empty()) throw ConfigError("read_dataset: no trajectories in " + jsonl_path);
  size_t H = ds.trajs[0].s.size();
  for (const Trajectory& t : ds.trajs)
    if (t.s.size() != H) throw ConfigError("read_dataset: trajectories have mixed lengths");
  ds.H = static_cast<int>(H);
  for (const Trajectory& t : ds.trajs)
    for (size_t h = 0; h < H; ++h) {
      ds.S = std::max(ds.S, t.s[h] + 1);
      ds.A = std::max(ds.A, t.a[h] + 1);
    }
  if (!meta_path.empty()) {
    std::ifstream g(meta_path);
    if (!g) throw ConfigError("read_dataset: cannot open " + meta_path);
    std::stringstream ss;
    ss << g.rdbuf();
    json meta;
    try {
      meta = json::parse(ss.str());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("read_dataset: meta: ") + e.what());
    }
    if (meta.contains("env_id")) ds.env_id = meta["env_id"].get<std::string>();
    if (meta.contains("seed")) ds.seed = meta["seed"].get<uint64_t>();
    if (meta.contains("H") && meta["H"].get<int>() != ds.H)
      throw ConfigError("read_dataset: meta H disagrees with trajectories");
    if (meta.contains("n") && meta["n"].get<size_t>() != ds.trajs.size())
      throw ConfigError("read_dataset: meta n disagrees with trajectories");
    // Dimensions from the sidecar win over the data-inferred lower bounds so
    // unvisited top states survive a round trip.
    if (meta.contains("S")) ds.S = std::max(ds.S, meta["S"].get<int>());
    if (meta.contains("A")) ds.A = std::max(ds.A, meta["A"].get<int>());
  }
  return ds;
}

}  // namespace confope
