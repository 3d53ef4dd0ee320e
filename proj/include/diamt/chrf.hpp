#pragma once

#include <string>

namespace diamt {

struct ChrfParams {
  int char_n_max = 6;
  int word_n_max = 2;
  double beta = 2.0;  // recall weight
};

/// Character n-gram F-score with word n-grams (chrF++), range [0, 100].
/// Character n-grams are counted with all whitespace removed; word n-grams
/// over whitespace tokens. Orders where both sides have no n-grams are
/// skipped; orders where exactly one side has n-grams score 0. Both strings
/// empty scores 100.
double chrf_pp(const std::string& hypothesis, const std::string& reference,
               const ChrfParams& params = {});

}  // namespace diamt
