#include "diamt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diamt/common.hpp"

namespace diamt {
namespace {

std::vector<double> ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // average rank for ties
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw ConfigError("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw ConfigError("pearson: need at least 3 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0)
    throw ConfigError("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(ranks(xs), ranks(ys));
}

}  // namespace diamt
