#pragma once

#include <string>
#include <vector>

#include "diamt/corpus.hpp"
#include "diamt/model.hpp"
#include "diamt/tokenizer.hpp"

namespace diamt {

struct AnchoredDistance {
  std::string variety;
  double l2 = 0;
  double cosine = 0;  // 1 - cos similarity
};

/// Layer-wise representation distances against an anchor variety, averaged
/// over parallel sentence pairs. Sentence representation = mean over tokens
/// of the layer's hidden states (max over tokens with max_pool).
std::vector<AnchoredDistance> anchored_distances(
    const Model& model, const SubwordVocab& vocab, const ParallelCorpus& corpus,
    const std::string& anchor, int layer, bool max_pool = false);

}  // namespace diamt
