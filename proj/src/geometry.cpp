#include "diamt/geometry.hpp"

#include <cmath>

namespace diamt {
namespace {

Vector sentence_rep(const Model& model, const SubwordVocab& vocab,
                    const std::string& text, int layer, bool max_pool,
                    const std::string& sentence_name) {
  std::vector<int> ids = encode(vocab, text);
  const int cap = model.config.max_seq_len;
  if (static_cast<int>(ids.size()) > cap) ids.resize(cap);
  if (ids.empty())
    throw ConfigError("anchored_distances: sentence " + sentence_name +
                      " encodes to nothing");
  HiddenStack stack;
  forward(model, ids, {}, &stack);
  if (layer < 0 || layer >= static_cast<int>(stack.states.size()))
    throw ConfigError("anchored_distances: layer out of range");
  const Matrix& h = stack.states[layer];
  Vector rep = max_pool ? Vector(h.colwise().maxCoeff().transpose())
                        : Vector(h.colwise().mean().transpose());
  if (rep.norm() < 1e-12)
    throw RuntimeFailure("anchored_distances: zero representation for sentence " +
                         sentence_name);
  return rep;
}

}  // namespace

std::vector<AnchoredDistance> anchored_distances(
    const Model& model, const SubwordVocab& vocab, const ParallelCorpus& corpus,
    const std::string& anchor, int layer, bool max_pool) {
  corpus.variety_index(anchor);  // throws if unknown
  std::vector<AnchoredDistance> out;
  for (const auto& variety : corpus.varieties) {
    AnchoredDistance d;
    d.variety = variety;
    for (std::size_t row = 0; row < corpus.n_sentences(); ++row) {
      const std::string name = corpus.sentence_ids[row] + "/" + variety;
      const Vector rv = sentence_rep(model, vocab, corpus.text(row, variety),
                                     layer, max_pool, name);
      const Vector ra = sentence_rep(model, vocab, corpus.text(row, anchor),
                                     layer, max_pool,
                                     corpus.sentence_ids[row] + "/" + anchor);
      d.l2 += (rv - ra).norm();
      d.cosine += 1.0 - rv.dot(ra) / (rv.norm() * ra.norm());
    }
    d.l2 /= static_cast<double>(corpus.n_sentences());
    d.cosine /= static_cast<double>(corpus.n_sentences());
    out.push_back(d);
  }
  return out;
}

}  // namespace diamt
