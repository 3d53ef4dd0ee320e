#pragma once

#include "diamt/common.hpp"

namespace diamt {

/// Top-2 principal-component projection of row vectors (n x d input,
/// n x 2 output). Sign convention: in each component the entry with the
/// largest magnitude is positive. Rank-deficient input pads with zeros.
Matrix pca2d(const Matrix& vectors);

}  // namespace diamt
