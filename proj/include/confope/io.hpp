#pragma once
// CSV and SVG output. Both are rendered to strings with fixed formatting so
// identical inputs produce identical bytes.

#include <cstdint>
#include <string>
#include <vector>

#include "confope/common.hpp"

namespace confope {

// printf "%.12g".
std::string fmt_g(double x);

struct ValueRow {
  double gamma = 1.0;
  std::string method;
  int state = -1;  // -1: start-law average
  double value = 0.0;
  bool is_lower_bound = false;
  std::uint64_t seed = 0;
};
// Header gamma,method,state,value,is_lower_bound,seed.
std::string values_csv(const std::vector<ValueRow>& rows);

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};
// Header iter,objective,grad_norm.
std::string trace_csv(const std::vector<TraceRow>& rows);

// Writes content, creating parent directories as needed.
void write_text(const std::string& path, const std::string& content);

// One plotted line; sd (when non-empty) draws a translucent band mean +- sd.
struct Series {
  std::string label;
  Vec x, mean, sd;
};
struct PlotSpec {
  std::string title, xlabel, ylabel;
  bool log_x = false;  // plot against log10(x); ticks at the data points
  int width = 720, height = 480;
};
// Self-contained SVG 1.1 line plot: axes, ticks, legend, per-series color.
std::string svg_plot(const std::vector<Series>& series, const PlotSpec& spec);

}  // namespace confope
