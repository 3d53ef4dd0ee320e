#pragma once

#include <string>
#include <vector>

#include "diamt/cluster.hpp"

namespace diamt {

struct Series {
  std::string label;
  std::vector<double> xs, ys;
};

/// Axis range = data envelope padded by 5% on each side (fixed fallback when
/// the data are a single point). Recorded on the <svg> root as data-xmin,
/// data-xmax, data-ymin, data-ymax for downstream checks.
struct Envelope {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
};
Envelope plot_envelope(const std::vector<Series>& series);

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series);

/// Grouped bars: one group per label, one bar per series (values[s][i]).
void svg_bar_chart(const std::string& path, const std::string& title,
                   const std::vector<std::string>& labels,
                   const std::vector<std::string>& series_names,
                   const std::vector<std::vector<double>>& values);

void svg_dendrogram(const std::string& path, const std::string& title,
                    const Dendrogram& dendrogram);

}  // namespace diamt
