#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace diamt {

/// Flat `key = value` configuration document. Lines starting with '#' and
/// blank lines are ignored. Keys may be dotted (e.g. "variety.D01.parent").
class KVConfig {
 public:
  KVConfig() = default;

  static KVConfig parse(const std::string& text);
  static KVConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  /// Keys in insertion order.
  const std::vector<std::string>& keys() const { return order_; }

  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace diamt
