#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diamt/common.hpp"
#include "diamt/kvconfig.hpp"

namespace diamt {

/// One node of the divergence tree. The root (no parent) is the standard
/// variety; every other variety is derived from its parent's text.
struct VarietySpec {
  std::string id;
  std::optional<std::string> parent;
  double lex_sub_rate = 0.0;
  // (suffix, replacement): the first matching suffix rewrite is applied.
  std::vector<std::pair<std::string, std::string>> morph_rules;
  // Character substitutions applied last.
  std::vector<std::pair<char, char>> ortho_map;
};

struct ParallelCorpus {
  std::vector<std::string> varieties;       // column order
  std::vector<std::string> sentence_ids;    // row order
  std::vector<std::vector<std::string>> sentences;  // [row][column]
  std::string standard_id;
  std::optional<std::vector<VarietySpec>> divergence_tree;

  int variety_index(const std::string& id) const;
  std::size_t n_sentences() const { return sentence_ids.size(); }
  const std::string& text(std::size_t row, const std::string& variety) const;
};

struct PromptExample {
  std::string source_variety;
  std::string target_variety;
  std::string prompt_text;
  std::string target_text;
  bool to_standard = false;
};

/// Validates the spec tree: exactly one root, parents exist, acyclic,
/// rates in [0,1].
void validate_tree(const std::vector<VarietySpec>& tree);

ParallelCorpus gen_continuum(const std::vector<VarietySpec>& tree,
                             int n_sentences, std::uint64_t seed);

ParallelCorpus load_tsv(const std::string& path);
void save_tsv(const ParallelCorpus& corpus, const std::string& path);

std::vector<PromptExample> build_prompts(const ParallelCorpus& corpus,
                                         bool bidirectional);

struct CorpusSplit {
  ParallelCorpus train, validation, test;
};

/// Splits by sentence id; deterministic under seed. validation gets
/// (1 - train_frac - test_frac), so train_frac + test_frac <= 1.
CorpusSplit split_corpus(const ParallelCorpus& corpus, double train_frac,
                         double test_frac, std::uint64_t seed);

/// Tree path distance between every pair of varieties: sum of per-edge
/// divergence weights along the connecting path. Ground truth for
/// cluster-recovery checks.
Matrix tree_path_distances(const std::vector<VarietySpec>& tree,
                           const std::vector<std::string>& order);

/// Parse a generator config (n_sentences, seed, varieties, per-variety
/// parent/lex_sub_rate/morph/ortho keys).
struct ContinuumConfig {
  std::vector<VarietySpec> tree;
  int n_sentences = 200;
  std::uint64_t seed = 1;
};
ContinuumConfig parse_continuum_config(const KVConfig& cfg);

/// The built-in default: one standard plus 25 dialects in regional families.
std::string default_continuum_config_text();

}  // namespace diamt
