#pragma once

#include <vector>

namespace diamt {

/// Sample Pearson correlation. Requires equal length >= 3 and nonzero
/// variance on both sides.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Spearman rank correlation (Pearson on average ranks).
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace diamt
