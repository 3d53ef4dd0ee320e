#include "diamt/cluster.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <sstream>

#include "diamt/chrf.hpp"
#include "diamt/corpus.hpp"

namespace diamt {
namespace {

struct Cluster {
  int id;                 // dendrogram cluster id
  std::vector<int> leaves;
  std::string min_label;  // lexicographic tie-break key
  int size() const { return static_cast<int>(leaves.size()); }
};

}  // namespace

Dendrogram average_linkage(const Matrix& dist,
                           const std::vector<std::string>& labels) {
  const int n = static_cast<int>(labels.size());
  if (n < 2) throw ConfigError("clustering needs at least 2 items");
  if (dist.rows() != n || dist.cols() != n)
    throw ConfigError("distance matrix shape mismatch");
  if ((dist - dist.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw ConfigError("distance matrix must be symmetric");

  Dendrogram out;
  out.leaves = labels;

  std::vector<Cluster> active;
  for (int i = 0; i < n; ++i) active.push_back({i, {i}, labels[i]});
  // Pairwise distances between active clusters, indexed by position.
  Matrix d = dist;
  int next_id = n;
  while (active.size() > 1) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double v = d(i, j);
        bool better = v < best;
        if (!better && v == best) {
          // Deterministic tie-break on smallest leaf labels.
          auto key = [&](std::size_t a, std::size_t b) {
            return std::minmax(active[a].min_label, active[b].min_label);
          };
          better = key(i, j) < key(bi, bj);
        }
        if (better) {
          best = v;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    Dendrogram::Merge m;
    m.a = active[bi].id;
    m.b = active[bj].id;
    m.height = best;
    out.merges.push_back(m);

    Cluster merged;
    merged.id = next_id++;
    merged.leaves = active[bi].leaves;
    merged.leaves.insert(merged.leaves.end(), active[bj].leaves.begin(),
                         active[bj].leaves.end());
    merged.min_label = std::min(active[bi].min_label, active[bj].min_label);
    const int si = active[bi].size(), sj = active[bj].size();

    // Lance-Williams update for average linkage.
    const std::size_t m_count = active.size() - 1;
    Matrix nd(m_count, m_count);
    std::vector<Cluster> next;
    for (std::size_t k = 0; k < active.size(); ++k)
      if (static_cast<int>(k) != bi && static_cast<int>(k) != bj)
        next.push_back(std::move(active[k]));
    auto old_pos = [&](std::size_t new_k) {
      std::size_t pos = 0, count = 0;
      for (std::size_t k = 0; k < static_cast<std::size_t>(d.rows()); ++k) {
        if (static_cast<int>(k) == bi || static_cast<int>(k) == bj) continue;
        if (count == new_k) { pos = k; break; }
        ++count;
      }
      return pos;
    };
    for (std::size_t a = 0; a < next.size(); ++a)
      for (std::size_t b = 0; b < next.size(); ++b)
        nd(a, b) = d(old_pos(a), old_pos(b));
    // Append merged cluster distances.
    Matrix nd2(m_count, m_count);
    nd2.topLeftCorner(next.size(), next.size()) =
        nd.topLeftCorner(next.size(), next.size());
    for (std::size_t a = 0; a < next.size(); ++a) {
      const std::size_t p = old_pos(a);
      const double v = (si * d(p, bi) + sj * d(p, bj)) / (si + sj);
      nd2(a, next.size()) = v;
      nd2(next.size(), a) = v;
    }
    nd2(next.size(), next.size()) = 0.0;
    next.push_back(std::move(merged));
    active = std::move(next);
    d = std::move(nd2);
  }
  return out;
}

Matrix chrf_distance_matrix(const ParallelCorpus& corpus) {
  const std::size_t nv = corpus.varieties.size();
  const std::size_t ns = corpus.n_sentences();
  Matrix d = Matrix::Zero(nv, nv);
  for (std::size_t a = 0; a < nv; ++a) {
    for (std::size_t b = a + 1; b < nv; ++b) {
      double sum = 0.0;
      for (std::size_t i = 0; i < ns; ++i) {
        // chrF++ is direction-asymmetric; symmetrize by averaging both.
        sum += 0.5 * (chrf_pp(corpus.sentences[i][a], corpus.sentences[i][b]) +
                      chrf_pp(corpus.sentences[i][b], corpus.sentences[i][a]));
      }
      d(a, b) = d(b, a) = 100.0 - sum / ns;
    }
  }
  return d;
}

Dendrogram cluster_varieties(const ParallelCorpus& corpus) {
  return average_linkage(chrf_distance_matrix(corpus), corpus.varieties);
}

std::string to_newick(const Dendrogram& dendro) {
  const int n = static_cast<int>(dendro.leaves.size());
  // Branch length of a cluster = parent height - own height (leaves: height 0).
  std::vector<double> height(n + dendro.merges.size(), 0.0);
  for (std::size_t i = 0; i < dendro.merges.size(); ++i)
    height[n + i] = dendro.merges[i].height;
  std::function<std::string(int, double)> render = [&](int id,
                                                       double parent_h) {
    std::ostringstream s;
    if (id < n) {
      s << dendro.leaves[id];
    } else {
      const auto& m = dendro.merges[id - n];
      s << '(' << render(m.a, height[id]) << ',' << render(m.b, height[id])
        << ')';
    }
    s << ':' << (parent_h - height[id]);
    return s.str();
  };
  const int root = n + static_cast<int>(dendro.merges.size()) - 1;
  const auto& m = dendro.merges.back();
  std::ostringstream out;
  out << '(' << render(m.a, height[root]) << ',' << render(m.b, height[root])
      << ");";
  return out.str();
}

Matrix cophenetic_matrix(const Dendrogram& dendro) {
  const int n = static_cast<int>(dendro.leaves.size());
  std::vector<std::vector<int>> members(n + dendro.merges.size());
  for (int i = 0; i < n; ++i) members[i] = {i};
  Matrix coph = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < dendro.merges.size(); ++k) {
    const auto& m = dendro.merges[k];
    for (int a : members[m.a])
      for (int b : members[m.b]) coph(a, b) = coph(b, a) = m.height;
    auto& dst = members[n + k];
    dst = members[m.a];
    dst.insert(dst.end(), members[m.b].begin(), members[m.b].end());
  }
  return coph;
}

}  // namespace diamt
