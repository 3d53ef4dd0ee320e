#include "diamt/metrics_log.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace diamt {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::map<std::string, double>& group(const MetricsRow& r,
                                           const std::string& prefix) {
  if (prefix == "chrf") return r.chrf;
  if (prefix == "ssa") return r.ssa;
  return r.code_bits;
}

std::map<std::string, double>& group(MetricsRow& r, const std::string& prefix) {
  if (prefix == "chrf") return r.chrf;
  if (prefix == "ssa") return r.ssa;
  return r.code_bits;
}

}  // namespace

void MetricsLog::append(MetricsRow row) {
  if (!rows.empty() && row.step <= rows.back().step)
    throw ConfigError("MetricsLog: steps must strictly increase");
  rows.push_back(std::move(row));
}

void MetricsLog::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write: " + path);
  std::set<std::string> dynamic;
  for (const auto& r : rows)
    for (const std::string prefix : {"chrf", "ssa", "code_bits"})
      for (const auto& [k, v] : group(r, prefix)) dynamic.insert(prefix + "." + k);

  out << "step,lm_loss,decouple_loss,validation_loss,checkpoint_path";
  for (const auto& c : dynamic) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    if (r.checkpoint_path.find(',') != std::string::npos)
      throw ConfigError("MetricsLog: checkpoint path contains a comma");
    out << r.step << ',' << fmt(r.lm_loss) << ',' << fmt(r.decouple_loss) << ','
        << fmt(r.validation_loss) << ',' << r.checkpoint_path;
    for (const auto& c : dynamic) {
      out << ',';
      const auto dot = c.find('.');
      const auto& g = group(r, c.substr(0, dot));
      const auto it = g.find(c.substr(dot + 1));
      if (it != g.end()) out << fmt(it->second);
    }
    out << '\n';
  }
  if (!out) throw RuntimeFailure("write failed: " + path);
}

MetricsLog MetricsLog::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty metrics CSV");
  const auto header = split_on(line, ',');
  if (header.size() < 5 || header[0] != "step")
    throw ConfigError(path + ": unexpected metrics CSV header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    auto cells = split_on(line, ',');
    cells.resize(header.size());
    MetricsRow r;
    r.step = std::stol(cells[0]);
    r.lm_loss = std::stod(cells[1]);
    r.decouple_loss = std::stod(cells[2]);
    r.validation_loss = std::stod(cells[3]);
    r.checkpoint_path = cells[4];
    for (std::size_t i = 5; i < header.size(); ++i) {
      if (strip(cells[i]).empty()) continue;
      const auto dot = header[i].find('.');
      if (dot == std::string::npos)
        throw ConfigError(path + ": unknown metrics column " + header[i]);
      group(r, header[i].substr(0, dot))[header[i].substr(dot + 1)] =
          std::stod(cells[i]);
    }
    log.append(std::move(r));
  }
  return log;
}

}  // namespace diamt
