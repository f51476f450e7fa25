#pragma once
// Shared error types and small numeric helpers.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace confope {

// Bad parameters, malformed files, or misuse of the CLI. Mapped to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An uncertainty set or optimization problem has no feasible point. Exit code 3.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An estimator needs a (state, action) cell the dataset never visited. Exit code 4.
struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// log(mean(exp(x))) with max-shift for stability.
inline double log_mean_exp(const Vec& x) {
  if (x.empty()) throw ConfigError("log_mean_exp: empty input");
  double m = x[0];
  for (double v : x)
    if (v > m) m = v;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(x.size()));
}

inline double sqr(double x) { return x * x; }

// Max |a-b| over two equally sized vectors.
inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace confope
