#include "diamt/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace diamt {
namespace {

constexpr double kW = 720, kH = 440;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

std::string esc(const std::string& s) {
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

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double base = std::abs(lo) > 1e-12 ? std::abs(lo) * 0.05 : 0.5;
    lo -= base;
    hi += base;
    return;
  }
  const double margin = 0.05 * (hi - lo);
  lo -= margin;
  hi += margin;
}

std::ofstream open_svg(const std::string& path, const Envelope& env,
                       const std::string& title) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write: " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" data-xmin=\"" << num(env.xmin)
      << "\" data-xmax=\"" << num(env.xmax) << "\" data-ymin=\""
      << num(env.ymin) << "\" data-ymax=\"" << num(env.ymax) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << esc(title) << "</text>\n";
  return out;
}

void draw_axes(std::ofstream& out, const Envelope& env,
               const std::string& xlabel, const std::string& ylabel) {
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\""
      << kW - kRight << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(xlabel)
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kTop + kH - kBottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (kTop + kH - kBottom) / 2 << ")\">" << esc(ylabel) << "</text>\n";
  // Endpoint tick labels.
  out << "<text x=\"" << kLeft << "\" y=\"" << kH - kBottom + 16
      << "\" font-size=\"10\">" << num(env.xmin) << "</text>\n"
      << "<text x=\"" << kW - kRight << "\" y=\"" << kH - kBottom + 16
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(env.xmax)
      << "</text>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << kH - kBottom
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(env.ymin)
      << "</text>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 10
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(env.ymax)
      << "</text>\n";
}

}  // namespace

Envelope plot_envelope(const std::vector<Series>& series) {
  Envelope env;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!any) {
        env.xmin = env.xmax = s.xs[i];
        env.ymin = env.ymax = s.ys[i];
        any = true;
      }
      env.xmin = std::min(env.xmin, s.xs[i]);
      env.xmax = std::max(env.xmax, s.xs[i]);
      env.ymin = std::min(env.ymin, s.ys[i]);
      env.ymax = std::max(env.ymax, s.ys[i]);
    }
  if (!any) throw ConfigError("plot: no data points");
  pad_range(env.xmin, env.xmax);
  pad_range(env.ymin, env.ymax);
  return env;
}

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series) {
  const Envelope env = plot_envelope(series);
  auto px = [&](double x) {
    return kLeft + (x - env.xmin) / (env.xmax - env.xmin) * (kW - kLeft - kRight);
  };
  auto py = [&](double y) {
    return kH - kBottom -
           (y - env.ymin) / (env.ymax - env.ymin) * (kH - kTop - kBottom);
  };
  std::ofstream out = open_svg(path, env, title);
  draw_axes(out, env, xlabel, ylabel);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 10];
    std::ostringstream pts;
    for (std::size_t i = 0; i < series[s].xs.size(); ++i)
      pts << px(series[s].xs[i]) << ',' << py(series[s].ys[i]) << ' ';
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    for (std::size_t i = 0; i < series[s].xs.size(); ++i)
      out << "<circle cx=\"" << px(series[s].xs[i]) << "\" cy=\""
          << py(series[s].ys[i]) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 14 * (s + 1)
        << "\" font-size=\"11\" fill=\"" << color << "\">"
        << esc(series[s].label) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw RuntimeFailure("write failed: " + path);
}

void svg_bar_chart(const std::string& path, const std::string& title,
                   const std::vector<std::string>& labels,
                   const std::vector<std::string>& series_names,
                   const std::vector<std::vector<double>>& values) {
  if (labels.empty() || values.empty())
    throw ConfigError("bar chart: no data");
  for (const auto& row : values)
    if (row.size() != labels.size())
      throw ConfigError("bar chart: ragged values");
  Envelope env;
  env.xmin = 0;
  env.xmax = static_cast<double>(labels.size());
  env.ymin = 0;
  env.ymax = values[0][0];
  for (const auto& row : values)
    for (double v : row) {
      env.ymin = std::min(env.ymin, v);
      env.ymax = std::max(env.ymax, v);
    }
  env.ymin = std::min(env.ymin, 0.0);
  pad_range(env.ymin, env.ymax);
  auto py = [&](double y) {
    return kH - kBottom -
           (y - env.ymin) / (env.ymax - env.ymin) * (kH - kTop - kBottom);
  };
  std::ofstream out = open_svg(path, env, title);
  draw_axes(out, env, "", "");
  const double group_w = (kW - kLeft - kRight) / labels.size();
  const double bar_w = group_w * 0.8 / values.size();
  for (std::size_t g = 0; g < labels.size(); ++g) {
    for (std::size_t s = 0; s < values.size(); ++s) {
      const double x = kLeft + g * group_w + group_w * 0.1 + s * bar_w;
      const double y0 = py(0.0), y1 = py(values[s][g]);
      out << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\""
          << bar_w << "\" height=\"" << std::abs(y0 - y1) << "\" fill=\""
          << kPalette[s % 10] << "\"/>\n";
    }
    out << "<text x=\"" << kLeft + g * group_w + group_w / 2 << "\" y=\""
        << kH - kBottom + 16 << "\" text-anchor=\"middle\" font-size=\"9\">"
        << esc(labels[g]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series_names.size() && s < values.size(); ++s)
    out << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 14 * (s + 1)
        << "\" font-size=\"11\" fill=\"" << kPalette[s % 10] << "\">"
        << esc(series_names[s]) << "</text>\n";
  out << "</svg>\n";
  if (!out) throw RuntimeFailure("write failed: " + path);
}

void svg_dendrogram(const std::string& path, const std::string& title,
                    const Dendrogram& dendrogram) {
  const int n = static_cast<int>(dendrogram.leaves.size());
  if (n < 2) throw ConfigError("dendrogram plot: need at least 2 leaves");
  double hmax = 0;
  for (const auto& m : dendrogram.merges) hmax = std::max(hmax, m.height);
  double lo = 0, hi = hmax;
  pad_range(lo, hi);
  Envelope env{0, hi, 0, static_cast<double>(n)};

  // Leaf vertical order: in-order traversal of the merge tree.
  std::vector<double> ypos(2 * n - 1, -1);
  std::vector<double> height(2 * n - 1, 0);
  std::vector<int> order;
  std::function<void(int)> walk = [&](int id) {
    if (id < n) {
      order.push_back(id);
      return;
    }
    const auto& m = dendrogram.merges[id - n];
    walk(m.a);
    walk(m.b);
  };
  walk(2 * n - 2);
  const double row_h = (kH - kTop - kBottom) / n;
  for (int i = 0; i < n; ++i)
    ypos[order[i]] = kTop + row_h * (i + 0.5);
  auto px = [&](double h) {
    return kLeft + (h - lo) / (hi - lo) * (kW - kLeft - kRight);
  };

  std::ofstream out = open_svg(path, env, title);
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < dendrogram.merges.size(); ++i) {
    const auto& m = dendrogram.merges[i];
    const int id = n + static_cast<int>(i);
    const double ya = ypos[m.a], yb = ypos[m.b];
    const double xa = px(height[m.a]), xb = px(height[m.b]);
    const double xm = px(m.height);
    out << "<line x1=\"" << xa << "\" y1=\"" << ya << "\" x2=\"" << xm
        << "\" y2=\"" << ya << "\" stroke=\"#1f77b4\"/>\n"
        << "<line x1=\"" << xb << "\" y1=\"" << yb << "\" x2=\"" << xm
        << "\" y2=\"" << yb << "\" stroke=\"#1f77b4\"/>\n"
        << "<line x1=\"" << xm << "\" y1=\"" << ya << "\" x2=\"" << xm
        << "\" y2=\"" << yb << "\" stroke=\"#1f77b4\"/>\n";
    ypos[id] = (ya + yb) / 2;
    height[id] = m.height;
  }
  for (int i = 0; i < n; ++i)
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << ypos[i] + 3
        << "\" text-anchor=\"end\" font-size=\"10\">"
        << esc(dendrogram.leaves[i]) << "</text>\n";
  out << "</svg>\n";
  if (!out) throw RuntimeFailure("write failed: " + path);
}

}  // namespace diamt
