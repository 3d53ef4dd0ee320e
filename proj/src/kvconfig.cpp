#include "diamt/kvconfig.hpp"

#include <fstream>
#include <sstream>

#include "diamt/common.hpp"

namespace diamt {

KVConfig KVConfig::parse(const std::string& text) {
  KVConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got: " + s);
    cfg.set(strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
  }
  return cfg;
}

KVConfig KVConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KVConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = value;
}

bool KVConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KVConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string KVConfig::get_string(const std::string& key,
                                 const std::string& dflt) const {
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

long KVConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: " + v);
  }
}

long KVConfig::get_int(const std::string& key, long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

double KVConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + v);
  }
}

double KVConfig::get_double(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}

bool KVConfig::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::string KVConfig::serialize() const {
  std::ostringstream out;
  for (const auto& k : order_) out << k << " = " << values_.at(k) << "\n";
  return out.str();
}

}  // namespace diamt
