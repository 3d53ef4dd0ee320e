#include "diamt/pca.hpp"

#include <Eigen/SVD>

namespace diamt {

Matrix pca2d(const Matrix& vectors) {
  const Eigen::Index n = vectors.rows();
  if (n < 2) throw ConfigError("pca2d: need at least 2 vectors");
  Matrix centered = vectors.rowwise() - vectors.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Matrix out = Matrix::Zero(n, 2);
  for (int c = 0; c < 2 && c < sv.size(); ++c) {
    if (sv(c) <= 1e-12 * std::max(1.0, sv(0))) break;
    Vector comp = centered * svd.matrixV().col(c);
    // Sign convention: largest-magnitude coordinate positive.
    Eigen::Index imax;
    comp.cwiseAbs().maxCoeff(&imax);
    if (comp(imax) < 0) comp = -comp;
    out.col(c) = comp;
  }
  return out;
}

}  // namespace diamt
