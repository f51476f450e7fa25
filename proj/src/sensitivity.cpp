#include "confope/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace confope {

double alpha_bound(double pi, double gamma) {
  if (gamma < 1.0) throw ConfigError("alpha_bound: gamma must be >= 1");
  return pi + (1.0 - pi) / gamma;
}

double beta_bound(double pi, double gamma) {
  if (gamma < 1.0) throw ConfigError("beta_bound: gamma must be >= 1");
  return gamma + pi * (1.0 - gamma);
}

BoundsTable bounds_from_gamma(const Model& m, double gamma) {
  BoundsTable b;
  for (const Vec& tab : m.pi_b) {
    Vec a(tab.size()), be(tab.size());
    for (size_t i = 0; i < tab.size(); ++i) {
      a[i] = alpha_bound(tab[i], gamma);
      be[i] = beta_bound(tab[i], gamma);
    }
    b.alpha.push_back(std::move(a));
    b.beta.push_back(std::move(be));
  }
  return b;
}

static Uncertainty build_impl(const Model& m, double gamma, const Widths* w) {
  if (gamma < 1.0) throw ConfigError("build_uncertainty: gamma must be >= 1");
  Uncertainty tu;
  tu.S = m.S;
  tu.A = m.A;
  tu.pooled = m.pooled;
  size_t SA = static_cast<size_t>(m.S) * m.A;
  for (int t = 0; t < m.kernel_steps(); ++t) {
    Vec lo(SA * m.S, 0.0), hi(SA * m.S, 0.0), al(SA, 0.0), be(SA, 0.0);
    std::vector<char> def(SA, 0);
    // The behavior table may have more steps than the kernel table (pooled
    // models have one of each; per-step models pair kernel step t with
    // behavior step t).
    const Vec& pi_tab = m.pi_b[m.pooled ? 0 : static_cast<size_t>(t)];
    for (size_t i = 0; i < SA; ++i) {
      if (!m.visited[t][i]) continue;
      def[i] = 1;
      double pi_eff = pi_tab[i];
      if (w) {
        double dpi = w->delta_pi[i / m.A];
        pi_eff = std::max(pi_eff - dpi, 0.0);
      }
      al[i] = alpha_bound(pi_eff, gamma);
      be[i] = beta_bound(pi_eff, gamma);
      double dP = 0.0;
      if (w) {
        dP = w->delta_P[i];
        if (!std::isfinite(dP)) dP = 1.0;  // no transition data: widest bracket
      }
      for (int s2 = 0; s2 < m.S; ++s2) {
        double p = m.P[t][i * m.S + s2];
        lo[i * m.S + s2] = al[i] * std::max(p - dP, 0.0);
        hi[i * m.S + s2] = std::min(be[i] * std::min(p + dP, 1.0), 1.0);
      }
    }
    tu.lo.push_back(std::move(lo));
    tu.hi.push_back(std::move(hi));
    tu.alpha.push_back(std::move(al));
    tu.beta.push_back(std::move(be));
    tu.defined.push_back(std::move(def));
  }
  return tu;
}

Uncertainty build_uncertainty(const Model& m, double gamma) { return build_impl(m, gamma, nullptr); }

Uncertainty build_uncertainty_widened(const Model& m, double gamma, const Widths& w) {
  return build_impl(m, gamma, &w);
}

Uncertainty intersect_steps(const Uncertainty& tu) {
  if (tu.pooled || tu.steps() == 1) {
    Uncertainty out = tu;
    out.pooled = true;
    return out;
  }
  Uncertainty out;
  out.S = tu.S;
  out.A = tu.A;
  out.pooled = true;
  size_t SA = static_cast<size_t>(tu.S) * tu.A;
  Vec lo(SA * tu.S, 0.0), hi(SA * tu.S, 0.0), al(SA, 0.0), be(SA, 0.0);
  std::vector<char> def(SA, 0);
  for (size_t i = 0; i < SA; ++i) {
    bool any = false;
    for (int t = 0; t < tu.steps(); ++t) {
      if (!tu.defined[t][i]) continue;
      for (int s2 = 0; s2 < tu.S; ++s2) {
        size_t k = i * tu.S + s2;
        if (!any) {
          lo[k] = tu.lo[t][k];
          hi[k] = tu.hi[t][k];
        } else {
          lo[k] = std::max(lo[k], tu.lo[t][k]);
          hi[k] = std::min(hi[k], tu.hi[t][k]);
        }
      }
      if (!any) {
        al[i] = tu.alpha[t][i];
        be[i] = tu.beta[t][i];
      } else {
        al[i] = std::max(al[i], tu.alpha[t][i]);
        be[i] = std::min(be[i], tu.beta[t][i]);
      }
      any = true;
    }
    def[i] = any ? 1 : 0;
  }
  out.lo.push_back(std::move(lo));
  out.hi.push_back(std::move(hi));
  out.alpha.push_back(std::move(al));
  out.beta.push_back(std::move(be));
  out.defined.push_back(std::move(def));
  return out;
}

void check_feasible(const Uncertainty& tu) {
  for (int t = 0; t < tu.steps(); ++t) {
    size_t SA = static_cast<size_t>(tu.S) * tu.A;
    for (size_t i = 0; i < SA; ++i) {
      if (!tu.defined[t][i]) continue;
      double slo = 0.0, shi = 0.0;
      for (int s2 = 0; s2 < tu.S; ++s2) {
        slo += tu.lo[t][i * tu.S + s2];
        shi += tu.hi[t][i * tu.S + s2];
      }
      if (slo > 1.0 + 1e-12 || shi < 1.0 - 1e-12)
        throw InfeasibleError("uncertainty set: row (s=" + std::to_string(i / tu.A) +
                              ", a=" + std::to_string(i % tu.A) + ", step " + std::to_string(t) +
                              ") admits no distribution");
    }
  }
}

double true_gamma(const ConfoundedMdp& mdp, const Policy& pi_b) {
  if (!pi_b.confounded()) return 1.0;
  Occupancy occ = occupancy(mdp, pi_b);
  Policy marg = marginalize_policy(mdp, pi_b);
  double worst = 1.0;
  for (int h = 0; h < mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s) {
      for (int u = 0; u < mdp.U; ++u) {
        if (occ.mu[h][s][u] <= 0.0) continue;
        for (int a = 0; a < mdp.A; ++a) {
          double pc = pi_b.p(h, s, u, a);
          double pm = marg.p(h, s, 0, a);
          if (pm <= 0.0 || pm >= 1.0) continue;  // no constraint from a degenerate marginal
          if (pc <= 0.0 || pc >= 1.0) return std::numeric_limits<double>::infinity();
          double oratio = (pc / (1.0 - pc)) * ((1.0 - pm) / pm);
          worst = std::max(worst, std::max(oratio, 1.0 / oratio));
        }
      }
    }
  return worst;
}

}  // namespace confope
