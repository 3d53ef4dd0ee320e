#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "diamt/chrf.hpp"
#include "diamt/corpus.hpp"

using namespace diamt;
namespace fs = std::filesystem;

namespace {

std::vector<VarietySpec> std_only() {
  VarietySpec std_v;
  std_v.id = "STD";
  return {std_v};
}

VarietySpec child(const std::string& id, const std::string& parent,
                  double rate) {
  VarietySpec v;
  v.id = id;
  v.parent = parent;
  v.lex_sub_rate = rate;
  return v;
}

double mean_chrf_to_std(const ParallelCorpus& c, const std::string& variety) {
  double sum = 0;
  for (std::size_t i = 0; i < c.n_sentences(); ++i)
    sum += chrf_pp(c.text(i, variety), c.text(i, c.standard_id));
  return sum / c.n_sentences();
}

}  // namespace

TEST_CASE("degenerate tree: standard only") {
  auto c = gen_continuum(std_only(), 10, 42);
  CHECK(c.varieties == std::vector<std::string>{"STD"});
  CHECK(c.n_sentences() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(!c.sentences[i][0].empty());
}

TEST_CASE("identity transform yields a column identical to the standard") {
  auto tree = std_only();
  tree.push_back(child("D01", "STD", 0.0));
  auto c = gen_continuum(tree, 20, 7);
  for (std::size_t i = 0; i < 20; ++i)
    CHECK(c.text(i, "D01") == c.text(i, "STD"));
}

TEST_CASE("higher lex_sub_rate means lower chrF++ against the standard") {
  auto tree = std_only();
  tree.push_back(child("HI", "STD", 0.4));
  tree.push_back(child("LO", "STD", 0.1));
  auto c = gen_continuum(tree, 150, 11);
  CHECK(mean_chrf_to_std(c, "HI") < mean_chrf_to_std(c, "LO"));
}

TEST_CASE("generation is deterministic in the seed") {
  auto tree = std_only();
  tree.push_back(child("D01", "STD", 0.3));
  auto a = gen_continuum(tree, 30, 5);
  auto b = gen_continuum(tree, 30, 5);
  auto c = gen_continuum(tree, 30, 6);
  CHECK(a.sentences == b.sentences);
  CHECK(a.sentences != c.sentences);
}

TEST_CASE("invalid trees are rejected") {
  // Cycle.
  std::vector<VarietySpec> cyc = {child("A", "B", 0.1), child("B", "A", 0.1)};
  CHECK_THROWS_AS(validate_tree(cyc), ConfigError);
  // Two roots.
  std::vector<VarietySpec> two = std_only();
  VarietySpec other;
  other.id = "ALT";
  two.push_back(other);
  CHECK_THROWS_AS(validate_tree(two), ConfigError);
  // Rate outside [0,1].
  auto bad = std_only();
  bad.push_back(child("D", "STD", 1.5));
  CHECK_THROWS_AS(validate_tree(bad), ConfigError);
  CHECK_THROWS_AS(gen_continuum(std_only(), 0, 1), ConfigError);
}

TEST_CASE("injective ortho map is invertible") {
  auto tree = std_only();
  auto d = child("D01", "STD", 0.0);
  d.ortho_map = {{'a', 'q'}, {'e', 'x'}};  // images unused by the lexicon
  tree.push_back(d);
  auto c = gen_continuum(tree, 15, 3);
  for (std::size_t i = 0; i < 15; ++i) {
    std::string back = c.text(i, "D01");
    for (char& ch : back) {
      if (ch == 'q') ch = 'a';
      if (ch == 'x') ch = 'e';
    }
    CHECK(back == c.text(i, "STD"));
  }
}

TEST_CASE("morph rules rewrite suffixes") {
  auto tree = std_only();
  auto d = child("D01", "STD", 0.0);
  d.morph_rules = {{"a", "ah"}};
  tree.push_back(d);
  auto c = gen_continuum(tree, 10, 9);
  bool any_changed = false;
  for (std::size_t i = 0; i < 10; ++i) {
    for (const auto& w : split_whitespace(c.text(i, "D01")))
      if (w.size() >= 2 && w.substr(w.size() - 2) == "ah") any_changed = true;
  }
  CHECK(any_changed);
}

TEST_CASE("TSV round trip preserves structure") {
  auto tree = std_only();
  tree.push_back(child("D01", "STD", 0.3));
  tree.push_back(child("D02", "D01", 0.2));
  auto c = gen_continuum(tree, 12, 17);
  const std::string path =
      (fs::temp_directory_path() / "diamt_corpus_rt.tsv").string();
  save_tsv(c, path);
  auto r = load_tsv(path);
  CHECK(r.varieties == c.varieties);
  CHECK(r.sentence_ids == c.sentence_ids);
  CHECK(r.sentences == c.sentences);
  std::remove(path.c_str());
}

TEST_CASE("minimal complete TSV loads") {
  const std::string path =
      (fs::temp_directory_path() / "diamt_corpus_min.tsv").string();
  {
    std::ofstream out(path);
    out << "variety_id\tsentence_id\ttext\n"
        << "STD\ts1\tkato miri\n"
        << "STD\ts2\tsela dumo\n"
        << "D01\ts1\tkato zol\n"
        << "D01\ts2\tsela fum\n"
        << "D02\ts1\tnuvo zol\n"
        << "D02\ts2\tpela fum\n";
  }
  auto c = load_tsv(path);
  CHECK(c.varieties.size() == 3);
  CHECK(c.n_sentences() == 2);
  CHECK(c.standard_id == "STD");
  std::remove(path.c_str());
}

TEST_CASE("missing cell is reported by coordinates") {
  const std::string path =
      (fs::temp_directory_path() / "diamt_corpus_bad.tsv").string();
  {
    std::ofstream out(path);
    out << "variety_id\tsentence_id\ttext\n"
        << "STD\ts1\ta b\n"
        << "STD\ts2\tc d\n"
        << "D01\ts1\te f\n";
  }
  try {
    load_tsv(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("s2") != std::string::npos);
    CHECK(std::string(e.what()).find("D01") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("malformed TSV row names the line number") {
  const std::string path =
      (fs::temp_directory_path() / "diamt_corpus_mal.tsv").string();
  {
    std::ofstream out(path);
    out << "variety_id\tsentence_id\ttext\n"
        << "STD\ts1\tok text\n"
        << "broken row without tabs\n";
  }
  try {
    load_tsv(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("prompt counts: bidirectional doubles unidirectional") {
  auto tree = std_only();
  tree.push_back(child("D01", "STD", 0.2));
  tree.push_back(child("D02", "STD", 0.2));
  auto c = gen_continuum(tree, 1, 2);
  auto uni = build_prompts(c, false);
  auto bi = build_prompts(c, true);
  CHECK(uni.size() == 2);
  CHECK(bi.size() == 4);
  for (const auto& e : uni) CHECK(!e.to_standard);
}

TEST_CASE("prompt text embeds variety name and source sentence") {
  ParallelCorpus c;
  c.varieties = {"STD", "D01"};
  c.standard_id = "STD";
  c.sentence_ids = {"s0"};
  c.sentences = {{"a b c", "x y z"}};
  auto prompts = build_prompts(c, false);
  REQUIRE(prompts.size() == 1);
  CHECK(prompts[0].prompt_text.find("D01") != std::string::npos);
  CHECK(prompts[0].prompt_text.find("a b c") != std::string::npos);
  CHECK(prompts[0].target_text == "x y z");
}

TEST_CASE("split is a deterministic partition by sentence id") {
  auto tree = std_only();
  tree.push_back(child("D01", "STD", 0.2));
  auto c = gen_continuum(tree, 10, 1);
  auto s1 = split_corpus(c, 0.9, 0.0, 77);
  auto s2 = split_corpus(c, 0.9, 0.0, 77);
  CHECK(s1.train.sentence_ids == s2.train.sentence_ids);
  CHECK(s1.train.n_sentences() == 9);
  CHECK(s1.validation.n_sentences() == 1);
  CHECK(s1.test.n_sentences() == 0);

  auto s3 = split_corpus(c, 0.6, 0.2, 5);
  std::set<std::string> all;
  for (const auto* part : {&s3.train, &s3.validation, &s3.test})
    for (const auto& id : part->sentence_ids) CHECK(all.insert(id).second);
  CHECK(all.size() == c.n_sentences());
}

TEST_CASE("split rejects tiny corpora and bad fractions") {
  auto tree = std_only();
  auto c = gen_continuum(tree, 2, 1);
  CHECK_THROWS_AS(split_corpus(c, 0.9, 0.0, 1), ConfigError);
  auto c2 = gen_continuum(tree, 10, 1);
  CHECK_THROWS_AS(split_corpus(c2, 0.9, 0.2, 1), ConfigError);
}

TEST_CASE("default continuum config parses to 26 varieties") {
  auto cfg = KVConfig::parse(default_continuum_config_text());
  auto cc = parse_continuum_config(cfg);
  CHECK(cc.tree.size() == 26);
  CHECK(cc.tree[0].id == "STD");
}

TEST_CASE("sentence length stays under the 16-word cap") {
  auto c = gen_continuum(std_only(), 200, 23);
  for (std::size_t i = 0; i < c.n_sentences(); ++i)
    CHECK(split_whitespace(c.sentences[i][0]).size() <= 16);
}
