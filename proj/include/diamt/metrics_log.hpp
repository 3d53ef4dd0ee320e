#pragma once

#include <map>
#include <string>
#include <vector>

#include "diamt/common.hpp"

namespace diamt {

struct MetricsRow {
  long step = 0;
  double lm_loss = 0;
  double decouple_loss = 0;
  double validation_loss = 0;
  std::string checkpoint_path;
  std::map<std::string, double> chrf;        // per variety
  std::map<std::string, double> ssa;         // per dialect, vs the standard
  std::map<std::string, double> code_bits;   // per variety, bits/token
};

/// Append-only training time series; steps strictly increase.
struct MetricsLog {
  std::vector<MetricsRow> rows;

  void append(MetricsRow row);

  void save_csv(const std::string& path) const;
  static MetricsLog load_csv(const std::string& path);
};

}  // namespace diamt
