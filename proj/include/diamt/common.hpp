#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diamt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown on malformed inputs (bad config, bad file, violated precondition).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = mix64(seed);
  for (char c : tag) h = mix64(h ^ static_cast<std::uint8_t>(c));
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t n) {
  return mix64(derive_seed(seed, tag) ^ n);
}

std::vector<std::string> split_whitespace(const std::string& text);
std::vector<std::string> split_on(const std::string& text, char sep);
std::string strip(const std::string& text);

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 30 ? x : std::log1p(std::exp(x));
}

}  // namespace diamt
