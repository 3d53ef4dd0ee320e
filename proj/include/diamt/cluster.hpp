#pragma once

#include <string>
#include <vector>

#include "diamt/common.hpp"

namespace diamt {

struct ParallelCorpus;

/// Agglomerative merge tree. Leaves are 0..n-1 in label order; merge i
/// creates cluster id n+i from clusters a and b at the given height.
struct Dendrogram {
  struct Merge {
    int a = 0;
    int b = 0;
    double height = 0.0;
  };
  std::vector<std::string> leaves;
  std::vector<Merge> merges;
};

/// Average-linkage clustering of a symmetric distance matrix. Ties are
/// broken by the lexicographically smallest leaf label in each cluster.
Dendrogram average_linkage(const Matrix& dist,
                           const std::vector<std::string>& labels);

/// Symmetric per-variety distance matrix D(v,w) = 100 - mean sentence-level
/// chrF++ (averaged over both comparison directions).
Matrix chrf_distance_matrix(const ParallelCorpus& corpus);

Dendrogram cluster_varieties(const ParallelCorpus& corpus);

std::string to_newick(const Dendrogram& dendro);

/// Pairwise merge heights between leaves.
Matrix cophenetic_matrix(const Dendrogram& dendro);

}  // namespace diamt
