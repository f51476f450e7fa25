#include "confope/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace confope {

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace {
std::string fmt2(double x) {  // SVG coordinates
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}
std::string fmt_tick(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}
std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}
}  // namespace

std::string values_csv(const std::vector<ValueRow>& rows) {
  std::string out = "gamma,method,state,value,is_lower_bound,seed\n";
  for (const ValueRow& r : rows) {
    out += fmt_g(r.gamma);
    out += ',';
    out += r.method;
    out += ',';
    out += std::to_string(r.state);
    out += ',';
    out += fmt_g(r.value);
    out += ',';
    out += r.is_lower_bound ? '1' : '0';
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "iter,objective,grad_norm\n";
  for (const TraceRow& r : rows) {
    out += std::to_string(r.iter);
    out += ',';
    out += fmt_g(r.objective);
    out += ',';
    out += fmt_g(r.grad_norm);
    out += '\n';
  }
  return out;
}

void write_text(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("write_text: cannot open " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// ---- SVG -----------------------------------------------------------------

std::string svg_plot(const std::vector<Series>& series, const PlotSpec& spec) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double W = spec.width, H = spec.height;
  const double ml = 66, mr = 18, mt = 40, mb = 52;
  const double pw = W - ml - mr, ph = H - mt - mb;

  auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };

  // Data ranges (bands included).
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  std::set<double> xticks_raw;
  for (const Series& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      double xv = tx(s.x[i]);
      double sd = i < s.sd.size() ? s.sd[i] : 0.0;
      double lo = s.mean[i] - sd, hi = s.mean[i] + sd;
      if (!any) {
        x_lo = x_hi = xv;
        y_lo = lo;
        y_hi = hi;
        any = true;
      }
      x_lo = std::min(x_lo, xv);
      x_hi = std::max(x_hi, xv);
      y_lo = std::min(y_lo, lo);
      y_hi = std::max(y_hi, hi);
      if (spec.log_x) xticks_raw.insert(s.x[i]);
    }
  }
  if (!any) throw ConfigError("svg_plot: no data");
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  double ypad = 0.06 * (y_hi - y_lo);
  y_lo -= ypad;
  y_hi += ypad;
  double xpad = 0.04 * (x_hi - x_lo);
  x_lo -= xpad;
  x_hi += xpad;

  auto px = [&](double x) { return ml + (tx(x) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return mt + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << spec.width
    << "\" height=\"" << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height
    << "\">\n";
  o << "<rect width=\"" << spec.width << "\" height=\"" << spec.height << "\" fill=\"#ffffff\"/>\n";

  // y ticks: a "nice" step near range/5.
  {
    double range = y_hi - y_lo;
    double raw = range / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (mag * m >= raw) {
        step = mag * m;
        break;
      }
    double first = std::ceil(y_lo / step) * step;
    for (double v = first; v <= y_hi + 1e-9 * step; v += step) {
      double y = py(v);
      o << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(y) << "\" x2=\"" << fmt2(ml + pw)
        << "\" y2=\"" << fmt2(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      o << "<text x=\"" << fmt2(ml - 8) << "\" y=\"" << fmt2(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt_tick(std::abs(v) < 1e-12 ? 0.0 : v) << "</text>\n";
    }
  }
  // x ticks: at the data points when log-x, else a nice step.
  {
    std::vector<double> ticks;
    if (spec.log_x) {
      ticks.assign(xticks_raw.begin(), xticks_raw.end());
    } else {
      double range = x_hi - x_lo;
      double raw = range / 6.0;
      double mag = std::pow(10.0, std::floor(std::log10(raw)));
      double step = mag;
      for (double m : {1.0, 2.0, 5.0, 10.0})
        if (mag * m >= raw) {
          step = mag * m;
          break;
        }
      for (double v = std::ceil(x_lo / step) * step; v <= x_hi + 1e-9 * step; v += step)
        ticks.push_back(std::abs(v) < 1e-12 ? 0.0 : v);
    }
    for (double v : ticks) {
      double x = px(v);
      o << "<line x1=\"" << fmt2(x) << "\" y1=\"" << fmt2(mt + ph) << "\" x2=\"" << fmt2(x)
        << "\" y2=\"" << fmt2(mt + ph + 5) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
      o << "<text x=\"" << fmt2(x) << "\" y=\"" << fmt2(mt + ph + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_tick(v)
        << "</text>\n";
    }
  }
  // Axes.
  o << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(mt) << "\" x2=\"" << fmt2(ml) << "\" y2=\""
    << fmt2(mt + ph) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  o << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(mt + ph) << "\" x2=\"" << fmt2(ml + pw)
    << "\" y2=\"" << fmt2(mt + ph) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  // Bands first, lines on top.
  for (size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* col = kColors[k % (sizeof kColors / sizeof *kColors)];
    if (!s.sd.empty()) {
      std::string d = "M";
      for (size_t i = 0; i < s.x.size(); ++i) {
        d += fmt2(px(s.x[i])) + "," + fmt2(py(s.mean[i] + s.sd[i]));
        d += i + 1 < s.x.size() ? " L" : " ";
      }
      for (size_t i = s.x.size(); i-- > 0;) {
        d += "L" + fmt2(px(s.x[i])) + "," + fmt2(py(s.mean[i] - s.sd[i])) + " ";
      }
      d += "Z";
      o << "<path d=\"" << d << "\" fill=\"" << col << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
  }
  for (size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* col = kColors[k % (sizeof kColors / sizeof *kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.8\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (i) o << ' ';
      o << fmt2(px(s.x[i])) << ',' << fmt2(py(s.mean[i]));
    }
    o << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      o << "<circle cx=\"" << fmt2(px(s.x[i])) << "\" cy=\"" << fmt2(py(s.mean[i]))
        << "\" r=\"2.5\" fill=\"" << col << "\"/>\n";
  }

  // Legend, top-right inside the plot.
  {
    double lx = ml + pw - 10, ly = mt + 10;
    for (size_t k = 0; k < series.size(); ++k) {
      const char* col = kColors[k % (sizeof kColors / sizeof *kColors)];
      double y = ly + 16.0 * static_cast<double>(k);
      o << "<line x1=\"" << fmt2(lx - 150) << "\" y1=\"" << fmt2(y) << "\" x2=\"" << fmt2(lx - 126)
        << "\" y2=\"" << fmt2(y) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
      o << "<text x=\"" << fmt2(lx - 120) << "\" y=\"" << fmt2(y + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(series[k].label)
        << "</text>\n";
    }
  }

  // Labels.
  if (!spec.title.empty())
    o << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"" << fmt2(mt - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";
  if (!spec.xlabel.empty())
    o << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"" << fmt2(H - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << xml_escape(spec.xlabel) << "</text>\n";
  if (!spec.ylabel.empty())
    o << "<text x=\"16\" y=\"" << fmt2(mt + ph / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
      << fmt2(mt + ph / 2) << ")\">" << xml_escape(spec.ylabel) << "</text>\n";

  o << "</svg>\n";
  return o.str();
}

}  // namespace confope
