#include "diamt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace diamt {
namespace {

const char* kConsonants = "bdfgklmnprstvz";
const char* kVowels = "aeiou";

std::string gen_word(Rng& rng) {
  std::uniform_int_distribution<int> syll(2, 3);
  std::uniform_int_distribution<int> cons(0, 13);
  std::uniform_int_distribution<int> vow(0, 4);
  std::uniform_int_distribution<int> coda(0, 3);
  std::string w;
  const int n = syll(rng);
  for (int i = 0; i < n; ++i) {
    w += kConsonants[cons(rng)];
    w += kVowels[vow(rng)];
    if (i + 1 == n && coda(rng) == 0) w += kConsonants[cons(rng)];
  }
  return w;
}

struct Lexicon {
  std::vector<std::string> determiners, nouns, verbs, adjectives, adverbs;
};

// Determiners are a short closed class: two characters, exempt from lexical
// substitution so that token-level divergence tracks the configured rate.
std::string gen_short_word(Rng& rng) {
  std::uniform_int_distribution<int> cons(0, 13);
  std::uniform_int_distribution<int> vow(0, 4);
  std::string w;
  w += kConsonants[cons(rng)];
  w += kVowels[vow(rng)];
  return w;
}

Lexicon gen_lexicon(Rng& rng) {
  Lexicon lex;
  std::set<std::string> seen;
  auto fill = [&](std::vector<std::string>& dst, int n) {
    while (static_cast<int>(dst.size()) < n) {
      std::string w = gen_word(rng);
      if (seen.insert(w).second) dst.push_back(w);
    }
  };
  while (static_cast<int>(lex.determiners.size()) < 6) {
    std::string w = gen_short_word(rng);
    if (seen.insert(w).second) lex.determiners.push_back(w);
  }
  fill(lex.nouns, 220);
  fill(lex.verbs, 120);
  fill(lex.adjectives, 120);
  fill(lex.adverbs, 60);
  return lex;
}

enum Slot { DET, NOUN, VERB, ADJ, ADV };

// Slot templates; all well under the 16-word sentence cap.
const std::vector<std::vector<Slot>>& templates() {
  static const std::vector<std::vector<Slot>> t = {
      {DET, NOUN, VERB, DET, NOUN},
      {DET, ADJ, NOUN, VERB, DET, NOUN},
      {DET, NOUN, VERB, ADV},
      {DET, NOUN, VERB, DET, NOUN, ADV},
      {ADJ, NOUN, VERB, DET, ADJ, NOUN},
      {DET, NOUN, ADV, VERB, DET, ADJ, NOUN},
      {DET, ADJ, NOUN, VERB, DET, ADJ, NOUN, ADV},
  };
  return t;
}

std::string gen_sentence(const Lexicon& lex, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_t(0, templates().size() - 1);
  const auto& tmpl = templates()[pick_t(rng)];
  auto pick = [&](const std::vector<std::string>& pool) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };
  std::string s;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (i) s += ' ';
    switch (tmpl[i]) {
      case DET: s += pick(lex.determiners); break;
      case NOUN: s += pick(lex.nouns); break;
      case VERB: s += pick(lex.verbs); break;
      case ADJ: s += pick(lex.adjectives); break;
      case ADV: s += pick(lex.adverbs); break;
    }
  }
  s += " .";
  return s;
}

// Splits a token into core and trailing punctuation.
std::pair<std::string, std::string> split_punct(const std::string& word) {
  std::size_t end = word.size();
  while (end > 0 && !std::isalnum(static_cast<unsigned char>(word[end - 1])))
    --end;
  return {word.substr(0, end), word.substr(end)};
}

std::string apply_variety(const std::string& sentence,
                          const std::map<std::string, std::string>& lex_map,
                          const VarietySpec& spec) {
  std::string out;
  for (const auto& word : split_whitespace(sentence)) {
    auto [core, punct] = split_punct(word);
    auto it = lex_map.find(core);
    if (it != lex_map.end()) core = it->second;
    for (const auto& [suffix, repl] : spec.morph_rules) {
      if (core.size() >= suffix.size() &&
          core.compare(core.size() - suffix.size(), suffix.size(), suffix) == 0) {
        core = core.substr(0, core.size() - suffix.size()) + repl;
        break;
      }
    }
    for (char& c : core)
      for (const auto& [from, to] : spec.ortho_map)
        if (c == from) {
          c = to;
          break;
        }
    if (!out.empty()) out += ' ';
    out += core + punct;
  }
  return out;
}

std::vector<int> topo_order(const std::vector<VarietySpec>& tree) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < tree.size(); ++i) index[tree[i].id] = i;
  std::vector<int> order;
  std::vector<bool> placed(tree.size(), false);
  while (order.size() < tree.size()) {
    bool progress = false;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (placed[i]) continue;
      if (!tree[i].parent || placed[index.at(*tree[i].parent)]) {
        order.push_back(i);
        placed[i] = true;
        progress = true;
      }
    }
    if (!progress) throw ConfigError("variety tree contains a cycle");
  }
  return order;
}

}  // namespace

int ParallelCorpus::variety_index(const std::string& id) const {
  auto it = std::find(varieties.begin(), varieties.end(), id);
  if (it == varieties.end())
    throw ConfigError("unknown variety id: " + id);
  return static_cast<int>(it - varieties.begin());
}

const std::string& ParallelCorpus::text(std::size_t row,
                                        const std::string& variety) const {
  return sentences.at(row).at(variety_index(variety));
}

void validate_tree(const std::vector<VarietySpec>& tree) {
  if (tree.empty()) throw ConfigError("empty variety tree");
  std::set<std::string> ids;
  int roots = 0;
  for (const auto& v : tree) {
    if (v.id.empty()) throw ConfigError("variety with empty id");
    if (!ids.insert(v.id).second)
      throw ConfigError("duplicate variety id: " + v.id);
    if (!v.parent) ++roots;
    if (v.lex_sub_rate < 0.0 || v.lex_sub_rate > 1.0)
      throw ConfigError("variety " + v.id + ": lex_sub_rate outside [0,1]");
  }
  if (roots != 1)
    throw ConfigError("variety tree must have exactly one root, found " +
                      std::to_string(roots));
  for (const auto& v : tree)
    if (v.parent && !ids.count(*v.parent))
      throw ConfigError("variety " + v.id + ": unknown parent " + *v.parent);
  topo_order(tree);  // throws on cycles
}

ParallelCorpus gen_continuum(const std::vector<VarietySpec>& tree,
                             int n_sentences, std::uint64_t seed) {
  validate_tree(tree);
  if (n_sentences < 1) throw ConfigError("n_sentences must be >= 1");

  Rng lex_rng(derive_seed(seed, "lexicon"));
  const Lexicon lex = gen_lexicon(lex_rng);

  ParallelCorpus corpus;
  corpus.divergence_tree = tree;
  const auto order = topo_order(tree);
  for (const auto& v : tree) corpus.varieties.push_back(v.id);
  corpus.standard_id = tree[order[0]].id;

  // Standard-variety sentences from the template grammar.
  Rng grammar_rng(derive_seed(seed, "grammar"));
  std::vector<std::vector<std::string>> columns(tree.size());
  const int root = order[0];
  for (int i = 0; i < n_sentences; ++i)
    columns[root].push_back(gen_sentence(lex, grammar_rng));

  // Derive every dialect from its parent column.
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < tree.size(); ++i) index[tree[i].id] = i;
  for (std::size_t oi = 1; oi < order.size(); ++oi) {
    const int vi = order[oi];
    const VarietySpec& spec = tree[vi];
    const auto& parent_col = columns[index.at(*spec.parent)];

    std::set<std::string> types;
    for (const auto& s : parent_col)
      for (const auto& w : split_whitespace(s)) {
        auto [core, punct] = split_punct(w);
        if (!core.empty()) types.insert(core);
      }
    Rng vrng(derive_seed(seed, "variety:" + spec.id));
    std::bernoulli_distribution substitute(spec.lex_sub_rate);
    std::map<std::string, std::string> lex_map;
    for (const auto& t : types) {
      const bool closed_class = t.size() <= 3;
      if (closed_class || !substitute(vrng)) continue;
      std::string repl = gen_word(vrng);
      while (repl == t) repl = gen_word(vrng);
      lex_map[t] = repl;
    }
    columns[vi].reserve(parent_col.size());
    for (const auto& s : parent_col)
      columns[vi].push_back(apply_variety(s, lex_map, spec));
  }

  corpus.sentences.resize(n_sentences);
  for (int i = 0; i < n_sentences; ++i) {
    std::ostringstream id;
    id << 's' << std::setw(5) << std::setfill('0') << i;
    corpus.sentence_ids.push_back(id.str());
    corpus.sentences[i].resize(tree.size());
    for (std::size_t v = 0; v < tree.size(); ++v)
      corpus.sentences[i][v] = columns[v][i];
  }
  return corpus;
}

ParallelCorpus load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ConfigError("empty corpus file: " + path);
  ++lineno;
  {
    auto cols = split_on(strip(line), '\t');
    if (cols.size() != 3 || cols[0] != "variety_id" || cols[1] != "sentence_id" ||
        cols[2] != "text")
      throw ConfigError(path + ": expected header 'variety_id\\tsentence_id\\ttext'");
  }
  std::vector<std::string> varieties, sentence_ids;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  std::string standard_id;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty())
      throw ConfigError(path + " line " + std::to_string(lineno) +
                        ": malformed row (need 3 non-empty tab-separated fields)");
    const std::string& v = cols[0];
    const std::string& sid = cols[1];
    if (std::find(varieties.begin(), varieties.end(), v) == varieties.end())
      varieties.push_back(v);
    if (std::find(sentence_ids.begin(), sentence_ids.end(), sid) ==
        sentence_ids.end())
      sentence_ids.push_back(sid);
    cells[{sid, v}] = cols[2];
  }
  if (varieties.empty()) throw ConfigError(path + ": no data rows");

  std::string missing;
  for (const auto& sid : sentence_ids)
    for (const auto& v : varieties)
      if (!cells.count({sid, v})) missing += " (" + sid + ", " + v + ")";
  if (!missing.empty())
    throw ConfigError(path + ": missing cells:" + missing);

  ParallelCorpus corpus;
  corpus.varieties = varieties;
  corpus.sentence_ids = sentence_ids;
  // First variety column is taken as the standard unless an "STD" id exists.
  corpus.standard_id = varieties[0];
  for (const auto& v : varieties)
    if (v == "STD" || v == "MSA") corpus.standard_id = v;
  corpus.sentences.resize(sentence_ids.size());
  for (std::size_t i = 0; i < sentence_ids.size(); ++i) {
    corpus.sentences[i].resize(varieties.size());
    for (std::size_t j = 0; j < varieties.size(); ++j)
      corpus.sentences[i][j] = cells.at({sentence_ids[i], varieties[j]});
  }
  return corpus;
}

void save_tsv(const ParallelCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write corpus file: " + path);
  out << "variety_id\tsentence_id\ttext\n";
  for (std::size_t j = 0; j < corpus.varieties.size(); ++j)
    for (std::size_t i = 0; i < corpus.sentence_ids.size(); ++i)
      out << corpus.varieties[j] << '\t' << corpus.sentence_ids[i] << '\t'
          << corpus.sentences[i][j] << '\n';
  if (!out) throw RuntimeFailure("write failed: " + path);
}

std::vector<PromptExample> build_prompts(const ParallelCorpus& corpus,
                                         bool bidirectional) {
  const int std_idx = corpus.variety_index(corpus.standard_id);
  auto render = [](const std::string& src, const std::string& tgt,
                   const std::string& text) {
    std::ostringstream p;
    p << "Rewrite the following from " << src << " to the dialect of " << tgt
      << " . " << src << " phrase : " << text << " " << tgt << " phrase :";
    return p.str();
  };
  std::vector<PromptExample> out;
  for (std::size_t i = 0; i < corpus.n_sentences(); ++i) {
    for (std::size_t j = 0; j < corpus.varieties.size(); ++j) {
      if (static_cast<int>(j) == std_idx) continue;
      const std::string& d = corpus.varieties[j];
      PromptExample fwd;
      fwd.source_variety = corpus.standard_id;
      fwd.target_variety = d;
      fwd.prompt_text = render(corpus.standard_id, d, corpus.sentences[i][std_idx]);
      fwd.target_text = corpus.sentences[i][j];
      fwd.to_standard = false;
      out.push_back(std::move(fwd));
      if (bidirectional) {
        PromptExample rev;
        rev.source_variety = d;
        rev.target_variety = corpus.standard_id;
        rev.prompt_text = render(d, corpus.standard_id, corpus.sentences[i][j]);
        rev.target_text = corpus.sentences[i][std_idx];
        rev.to_standard = true;
        out.push_back(std::move(rev));
      }
    }
  }
  return out;
}

CorpusSplit split_corpus(const ParallelCorpus& corpus, double train_frac,
                         double test_frac, std::uint64_t seed) {
  if (train_frac < 0 || test_frac < 0 || train_frac + test_frac > 1.0)
    throw ConfigError("split fractions must be nonnegative and sum to <= 1");
  const std::size_t n = corpus.n_sentences();
  if (n < 3) throw ConfigError("corpus too small to split (need >= 3 sentences)");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(idx.begin(), idx.end(), rng);

  const std::size_t n_train = static_cast<std::size_t>(train_frac * n);
  const std::size_t n_test = static_cast<std::size_t>(test_frac * n);
  auto take = [&](std::size_t begin, std::size_t end) {
    ParallelCorpus part;
    part.varieties = corpus.varieties;
    part.standard_id = corpus.standard_id;
    part.divergence_tree = corpus.divergence_tree;
    std::vector<std::size_t> rows(idx.begin() + begin, idx.begin() + end);
    std::sort(rows.begin(), rows.end());
    for (std::size_t r : rows) {
      part.sentence_ids.push_back(corpus.sentence_ids[r]);
      part.sentences.push_back(corpus.sentences[r]);
    }
    return part;
  };
  CorpusSplit s;
  s.train = take(0, n_train);
  s.test = take(n_train, n_train + n_test);
  s.validation = take(n_train + n_test, n);
  return s;
}

Matrix tree_path_distances(const std::vector<VarietySpec>& tree,
                           const std::vector<std::string>& order) {
  validate_tree(tree);
  std::map<std::string, const VarietySpec*> by_id;
  for (const auto& v : tree) by_id[v.id] = &v;
  auto edge_weight = [](const VarietySpec& v) {
    // Weights calibrated against measured chrF++ divergence: one ortho
    // substitution perturbs roughly as much surface as a 0.3 lexical rate,
    // a suffix rule roughly 0.08.
    return v.lex_sub_rate + 0.08 * v.morph_rules.size() +
           0.3 * v.ortho_map.size();
  };
  // Path to root as (variety id, cumulative weight) pairs.
  auto path_to_root = [&](const std::string& id) {
    std::vector<std::pair<std::string, double>> path;
    double acc = 0.0;
    const VarietySpec* cur = by_id.at(id);
    path.emplace_back(cur->id, 0.0);
    while (cur->parent) {
      acc += edge_weight(*cur);
      cur = by_id.at(*cur->parent);
      path.emplace_back(cur->id, acc);
    }
    return path;
  };
  const std::size_t n = order.size();
  Matrix dist = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto pi = path_to_root(order[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto pj = path_to_root(order[j]);
      double best = -1.0;
      for (const auto& [a, wa] : pi)
        for (const auto& [b, wb] : pj)
          if (a == b && (best < 0 || wa + wb < best)) best = wa + wb;
      dist(i, j) = dist(j, i) = best;
    }
  }
  return dist;
}

ContinuumConfig parse_continuum_config(const KVConfig& cfg) {
  ContinuumConfig out;
  out.n_sentences = static_cast<int>(cfg.get_int("n_sentences", 200));
  out.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const auto ids = split_on(cfg.get_string("varieties"), ',');
  for (auto raw : ids) {
    VarietySpec v;
    v.id = strip(raw);
    const std::string prefix = "variety." + v.id + ".";
    if (cfg.has(prefix + "parent")) v.parent = cfg.get_string(prefix + "parent");
    v.lex_sub_rate = cfg.get_double(prefix + "lex_sub_rate", 0.0);
    if (cfg.has(prefix + "morph")) {
      for (auto rule : split_on(cfg.get_string(prefix + "morph"), ';')) {
        rule = strip(rule);
        if (rule.empty()) continue;
        auto parts = split_on(rule, '>');
        if (parts.size() != 2)
          throw ConfigError("variety " + v.id + ": bad morph rule: " + rule);
        v.morph_rules.emplace_back(strip(parts[0]), strip(parts[1]));
      }
    }
    if (cfg.has(prefix + "ortho")) {
      for (auto sub : split_on(cfg.get_string(prefix + "ortho"), ';')) {
        sub = strip(sub);
        if (sub.empty()) continue;
        auto parts = split_on(sub, '>');
        if (parts.size() != 2 || strip(parts[0]).size() != 1 ||
            strip(parts[1]).size() != 1)
          throw ConfigError("variety " + v.id + ": bad ortho entry: " + sub);
        v.ortho_map.emplace_back(strip(parts[0])[0], strip(parts[1])[0]);
      }
    }
    out.tree.push_back(std::move(v));
  }
  validate_tree(out.tree);
  return out;
}

std::string default_continuum_config_text() {
  // 1 standard + 25 dialects in five regional families; divergence grows
  // with depth so family structure is recoverable from surface distance.
  std::ostringstream out;
  out << "n_sentences = 2000\nseed = 1\n";
  std::ostringstream names;
  names << "STD";
  std::ostringstream body;
  const char* fam_ortho[5] = {"a>e", "o>u", "e>i", "u>o", "i>y"};
  const char* fam_morph[5] = {"a>ah", "on>un", "e>eh", "t>ta", "n>m"};
  int d = 0;
  for (int f = 0; f < 5; ++f) {
    std::string head = "D" + std::to_string(++d);
    names << "," << head;
    body << "variety." << head << ".parent = STD\n";
    body << "variety." << head << ".lex_sub_rate = " << (0.25 + 0.05 * f) << "\n";
    body << "variety." << head << ".ortho = " << fam_ortho[f] << "\n";
    for (int c = 0; c < 4; ++c) {
      std::string child = "D" + std::to_string(++d);
      names << "," << child;
      body << "variety." << child << ".parent = " << head << "\n";
      body << "variety." << child << ".lex_sub_rate = " << (0.10 + 0.04 * c)
           << "\n";
      if (c % 2 == 0)
        body << "variety." << child << ".morph = " << fam_morph[f] << "\n";
    }
  }
  out << "varieties = " << names.str() << "\n" << body.str();
  return out.str();
}

}  // namespace diamt
