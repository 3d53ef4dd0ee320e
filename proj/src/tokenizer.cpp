#include "diamt/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "diamt/common.hpp"

namespace diamt {
namespace {

const char* kReserved[] = {"[PAD]", "[UNK]", "[BOS]", "[EOS]"};

using WordCounts = std::map<std::string, long>;

WordCounts count_words(const std::vector<std::string>& texts) {
  WordCounts counts;
  for (const auto& t : texts)
    for (const auto& w : split_whitespace(t)) ++counts[w];
  return counts;
}

std::vector<std::string> initial_segmentation(const std::string& word) {
  std::vector<std::string> pieces;
  for (std::size_t i = 0; i < word.size(); ++i) {
    std::string p = i == 0 ? std::string() : std::string("##");
    p += word[i];
    pieces.push_back(std::move(p));
  }
  return pieces;
}

std::string merge_pieces(const std::string& left, const std::string& right) {
  std::string r = right;
  if (r.rfind("##", 0) == 0) r = r.substr(2);
  return left + r;
}

}  // namespace

int SubwordVocab::id_of(const std::string& piece) const {
  auto it = piece_to_id.find(piece);
  return it == piece_to_id.end() ? kUnk : it->second;
}

SubwordVocab train_wordpiece(const std::vector<std::string>& texts,
                             int vocab_size) {
  if (texts.empty()) throw ConfigError("train_wordpiece: no training text");
  const WordCounts words = count_words(texts);
  if (words.empty()) throw ConfigError("train_wordpiece: no words in text");

  // Alphabet: both word-initial and continuation forms of every character.
  std::set<std::string> alphabet;
  for (const auto& [w, n] : words)
    for (std::size_t i = 0; i < w.size(); ++i) {
      alphabet.insert(std::string(1, w[i]));
      alphabet.insert("##" + std::string(1, w[i]));
    }
  const int base = static_cast<int>(alphabet.size()) + 4;
  if (vocab_size < base)
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " below alphabet size (need >= " + std::to_string(base) +
                      ")");

  SubwordVocab vocab;
  for (const char* r : kReserved) vocab.pieces.push_back(r);
  for (const auto& p : alphabet) vocab.pieces.push_back(p);

  // Current segmentation of each word type.
  std::vector<std::pair<std::vector<std::string>, long>> segs;
  for (const auto& [w, n] : words) segs.emplace_back(initial_segmentation(w), n);

  std::set<std::string> have(vocab.pieces.begin(), vocab.pieces.end());
  while (static_cast<int>(vocab.pieces.size()) < vocab_size) {
    std::map<std::string, long> piece_freq;
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const auto& [seg, n] : segs) {
      for (std::size_t i = 0; i < seg.size(); ++i) {
        piece_freq[seg[i]] += n;
        if (i + 1 < seg.size()) pair_freq[{seg[i], seg[i + 1]}] += n;
      }
    }
    std::string best_merged;
    std::pair<std::string, std::string> best_pair;
    double best_score = -1.0;
    for (const auto& [pair, n] : pair_freq) {
      if (n < 2) continue;
      const std::string merged = merge_pieces(pair.first, pair.second);
      if (have.count(merged)) continue;
      const double score =
          static_cast<double>(n) /
          (static_cast<double>(piece_freq[pair.first]) * piece_freq[pair.second]);
      if (score > best_score ||
          (score == best_score && merged < best_merged)) {
        best_score = score;
        best_merged = merged;
        best_pair = pair;
      }
    }
    if (best_score < 0) break;  // no pair occurs at least twice

    vocab.pieces.push_back(best_merged);
    have.insert(best_merged);
    for (auto& [seg, n] : segs) {
      for (std::size_t i = 0; i + 1 < seg.size();) {
        if (seg[i] == best_pair.first && seg[i + 1] == best_pair.second) {
          seg[i] = best_merged;
          seg.erase(seg.begin() + i + 1);
        } else {
          ++i;
        }
      }
    }
  }

  for (std::size_t i = 0; i < vocab.pieces.size(); ++i)
    vocab.piece_to_id[vocab.pieces[i]] = static_cast<int>(i);
  return vocab;
}

std::vector<int> encode(const SubwordVocab& vocab, const std::string& text) {
  std::vector<int> ids;
  for (const auto& word : split_whitespace(text)) {
    std::vector<int> word_ids;
    bool ok = true;
    std::size_t pos = 0;
    while (pos < word.size()) {
      const std::string prefix = pos == 0 ? "" : vocab.continuation_prefix;
      int found = -1;
      for (std::size_t len = word.size() - pos; len >= 1; --len) {
        auto it = vocab.piece_to_id.find(prefix + word.substr(pos, len));
        if (it != vocab.piece_to_id.end()) {
          found = it->second;
          pos += len;
          break;
        }
      }
      if (found < 0) {
        ok = false;
        break;
      }
      word_ids.push_back(found);
    }
    if (ok) {
      ids.insert(ids.end(), word_ids.begin(), word_ids.end());
    } else {
      ids.push_back(SubwordVocab::kUnk);
    }
  }
  return ids;
}

std::string decode(const SubwordVocab& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id == SubwordVocab::kPad || id == SubwordVocab::kBos ||
        id == SubwordVocab::kEos)
      continue;
    if (id < 0 || id >= vocab.size())
      throw RuntimeFailure("decode: id out of range: " + std::to_string(id));
    const std::string& p = vocab.pieces[id];
    if (p.rfind(vocab.continuation_prefix, 0) == 0) {
      out += p.substr(vocab.continuation_prefix.size());
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

double fertility(const SubwordVocab& vocab,
                 const std::vector<std::string>& texts) {
  long pieces = 0, words = 0;
  for (const auto& t : texts) {
    const auto ws = split_whitespace(t);
    words += static_cast<long>(ws.size());
    for (const auto& w : ws)
      pieces += static_cast<long>(encode(vocab, w).size());
  }
  if (words == 0) throw ConfigError("fertility: no words in input");
  return static_cast<double>(pieces) / words;
}

void save_vocab(const SubwordVocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write vocab: " + path);
  for (const auto& p : vocab.pieces) out << p << '\n';
}

SubwordVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocab: " + path);
  SubwordVocab vocab;
  std::string line;
  while (std::getline(in, line)) vocab.pieces.push_back(line);
  if (vocab.pieces.size() < 4 || vocab.pieces[SubwordVocab::kUnk] != "[UNK]")
    throw ConfigError("not a vocab file: " + path);
  for (std::size_t i = 0; i < vocab.pieces.size(); ++i)
    vocab.piece_to_id[vocab.pieces[i]] = static_cast<int>(i);
  return vocab;
}

std::size_t unique_word_count(const std::vector<std::string>& texts) {
  std::set<std::string> seen;
  for (const auto& t : texts)
    for (const auto& w : split_whitespace(t)) seen.insert(w);
  return seen.size();
}

}  // namespace diamt
