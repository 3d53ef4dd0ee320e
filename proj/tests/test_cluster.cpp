#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diamt/cluster.hpp"
#include "diamt/corpus.hpp"
#include "diamt/stats.hpp"

using namespace diamt;

namespace {

ParallelCorpus tiny_corpus(const std::vector<std::string>& varieties,
                           const std::vector<std::vector<std::string>>& rows) {
  ParallelCorpus c;
  c.varieties = varieties;
  c.standard_id = varieties[0];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    c.sentence_ids.push_back("s" + std::to_string(i));
    c.sentences.push_back(rows[i]);
  }
  return c;
}

}  // namespace

TEST_CASE("identical varieties merge first at height 0") {
  auto c = tiny_corpus({"A", "B", "C"},
                       {{"kato miri", "kato miri", "zuvo pelu"},
                        {"sela dumo", "sela dumo", "rika fomi"}});
  auto dendro = cluster_varieties(c);
  REQUIRE(dendro.merges.size() == 2);
  CHECK(dendro.merges[0].height == doctest::Approx(0.0));
  // First merge joins leaves A (0) and B (1).
  CHECK(dendro.merges[0].a == 0);
  CHECK(dendro.merges[0].b == 1);
}

TEST_CASE("closest pair merges before distant singleton") {
  Matrix d(3, 3);
  d << 0, 1, 10,
       1, 0, 10,
       10, 10, 0;
  auto dendro = average_linkage(d, {"a", "b", "c"});
  CHECK(dendro.merges[0].a == 0);
  CHECK(dendro.merges[0].b == 1);
  CHECK(dendro.merges[0].height == doctest::Approx(1.0));
  CHECK(dendro.merges[1].height == doctest::Approx(10.0));
}

TEST_CASE("merge heights are nondecreasing") {
  Matrix d(4, 4);
  d << 0, 2, 6, 9,
       2, 0, 5, 8,
       6, 5, 0, 4,
       9, 8, 4, 0;
  auto dendro = average_linkage(d, {"a", "b", "c", "d"});
  for (std::size_t i = 1; i < dendro.merges.size(); ++i)
    CHECK(dendro.merges[i].height >= dendro.merges[i - 1].height);
}

TEST_CASE("newick export for a single merge") {
  Matrix d(2, 2);
  d << 0, 3,
       3, 0;
  auto dendro = average_linkage(d, {"x", "y"});
  CHECK(to_newick(dendro) == "(x:3,y:3);");
}

TEST_CASE("cophenetic matrix records merge heights") {
  Matrix d(3, 3);
  d << 0, 1, 10,
       1, 0, 10,
       10, 10, 0;
  auto dendro = average_linkage(d, {"a", "b", "c"});
  Matrix coph = cophenetic_matrix(dendro);
  CHECK(coph(0, 1) == doctest::Approx(1.0));
  CHECK(coph(0, 2) == doctest::Approx(10.0));
  CHECK(coph(1, 2) == doctest::Approx(10.0));
  CHECK(coph(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("chrf distance matrix is symmetric with zero diagonal") {
  auto c = tiny_corpus({"A", "B", "C"},
                       {{"kato miri lemu", "kato miri zol", "zuvo pelu rik"},
                        {"sela dumo fa", "sela numo fa", "rika fomi gu"}});
  Matrix d = chrf_distance_matrix(c);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(d.diagonal().cwiseAbs().maxCoeff() < 1e-9);
  CHECK(d(0, 1) < d(0, 2));  // B is closer to A than C is
}

TEST_CASE("continuum dendrogram recovers the generator tree") {
  // Two families of two dialects each; cophenetic distances must correlate
  // with tree path distances.
  KVConfig cfg = KVConfig::parse(
      "n_sentences = 120\n"
      "seed = 5\n"
      "varieties = STD,A1,A2,B1,B2\n"
      "variety.A1.parent = STD\nvariety.A1.lex_sub_rate = 0.3\n"
      "variety.A1.ortho = a>e\n"
      "variety.A2.parent = A1\nvariety.A2.lex_sub_rate = 0.12\n"
      "variety.B1.parent = STD\nvariety.B1.lex_sub_rate = 0.45\n"
      "variety.B1.ortho = o>u\n"
      "variety.B2.parent = B1\nvariety.B2.lex_sub_rate = 0.12\n");
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    auto cc = parse_continuum_config(cfg);
    auto corpus = gen_continuum(cc.tree, cc.n_sentences, seed);
    auto dendro = cluster_varieties(corpus);
    Matrix coph = cophenetic_matrix(dendro);
    Matrix truth = tree_path_distances(cc.tree, corpus.varieties);
    std::vector<double> xs, ys;
    for (int i = 0; i < coph.rows(); ++i)
      for (int j = i + 1; j < coph.cols(); ++j) {
        xs.push_back(truth(i, j));
        ys.push_back(coph(i, j));
      }
    CHECK(pearson(xs, ys) >= 0.8);
  }
}
