#include "diamt/chrf.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <vector>

#include "diamt/common.hpp"

namespace diamt {
namespace {

using Counts = std::unordered_map<std::string, int>;

Counts char_ngrams(const std::string& chars, int n) {
  Counts counts;
  if (static_cast<int>(chars.size()) >= n) {
    for (std::size_t i = 0; i + n <= chars.size(); ++i)
      ++counts[chars.substr(i, n)];
  }
  return counts;
}

Counts word_ngrams(const std::vector<std::string>& words, int n) {
  Counts counts;
  if (static_cast<int>(words.size()) >= n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string gram;
      for (int j = 0; j < n; ++j) {
        if (j) gram += ' ';
        gram += words[i + j];
      }
      ++counts[gram];
    }
  }
  return counts;
}

struct OrderScore {
  bool active = false;  // at least one side has n-grams of this order
  double f = 0.0;
};

OrderScore f_score(const Counts& hyp, const Counts& ref, double beta) {
  long hyp_total = 0, ref_total = 0, matched = 0;
  for (const auto& [g, c] : hyp) hyp_total += c;
  for (const auto& [g, c] : ref) ref_total += c;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) matched += std::min(c, it->second);
  }
  OrderScore s;
  if (hyp_total == 0 && ref_total == 0) return s;  // inactive order
  s.active = true;
  if (hyp_total == 0 || ref_total == 0 || matched == 0) return s;  // f = 0
  const double p = static_cast<double>(matched) / hyp_total;
  const double r = static_cast<double>(matched) / ref_total;
  const double b2 = beta * beta;
  s.f = (1.0 + b2) * p * r / (b2 * p + r);
  return s;
}

std::string remove_whitespace(const std::string& text) {
  std::string out;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

}  // namespace

double chrf_pp(const std::string& hypothesis, const std::string& reference,
               const ChrfParams& params) {
  const std::string hyp_chars = remove_whitespace(hypothesis);
  const std::string ref_chars = remove_whitespace(reference);
  if (hyp_chars.empty() && ref_chars.empty()) return 100.0;
  if (hyp_chars.empty() || ref_chars.empty()) return 0.0;

  const auto hyp_words = split_whitespace(hypothesis);
  const auto ref_words = split_whitespace(reference);

  double f_sum = 0.0;
  int active = 0;
  for (int n = 1; n <= params.char_n_max; ++n) {
    OrderScore s = f_score(char_ngrams(hyp_chars, n), char_ngrams(ref_chars, n),
                           params.beta);
    if (s.active) {
      f_sum += s.f;
      ++active;
    }
  }
  for (int n = 1; n <= params.word_n_max; ++n) {
    OrderScore s = f_score(word_ngrams(hyp_words, n), word_ngrams(ref_words, n),
                           params.beta);
    if (s.active) {
      f_sum += s.f;
      ++active;
    }
  }
  if (active == 0) return 0.0;
  return 100.0 * f_sum / active;
}

}  // namespace diamt
