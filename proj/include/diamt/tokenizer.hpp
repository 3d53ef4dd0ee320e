#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace diamt {

/// Subword vocabulary with WordPiece-style continuation pieces ("##x").
/// Reserved pieces occupy fixed ids; every single character seen in the
/// training data is present as both a word-initial and continuation piece,
/// so all training text is encodable.
struct SubwordVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  std::vector<std::string> pieces;
  std::unordered_map<std::string, int> piece_to_id;
  std::string continuation_prefix = "##";

  int size() const { return static_cast<int>(pieces.size()); }
  int id_of(const std::string& piece) const;
};

/// Greedy likelihood-gain merge training: pair score =
/// freq(pair) / (freq(left) * freq(right)), ties broken by the
/// lexicographically smaller merged piece. Stops at vocab_size or when no
/// pair occurs at least twice.
SubwordVocab train_wordpiece(const std::vector<std::string>& texts,
                             int vocab_size);

/// Longest-match-first segmentation per whitespace word. A word containing
/// a character outside the vocabulary alphabet encodes to the unknown piece.
std::vector<int> encode(const SubwordVocab& vocab, const std::string& text);

std::string decode(const SubwordVocab& vocab, std::span<const int> ids);

/// Total pieces per whitespace word over the given texts.
double fertility(const SubwordVocab& vocab,
                 const std::vector<std::string>& texts);

void save_vocab(const SubwordVocab& vocab, const std::string& path);
SubwordVocab load_vocab(const std::string& path);

/// Distinct whitespace words (Appendix-style unique word count).
std::size_t unique_word_count(const std::vector<std::string>& texts);

}  // namespace diamt
