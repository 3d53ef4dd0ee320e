#include "diamt/subspace.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "diamt/tensor_io.hpp"

namespace diamt {

SubspaceBasis extract_basis(const Matrix& theta, double rel_tol) {
  if (theta.size() == 0 || theta.cwiseAbs().maxCoeff() == 0.0)
    throw ConfigError("extract_basis: theta is zero");
  Eigen::JacobiSVD<Matrix> svd(theta, Eigen::ComputeThinU);
  const Vector s = svd.singularValues();
  long k = 0;
  while (k < s.size() && s(k) >= rel_tol * s(0)) ++k;
  if (k == 0) throw ConfigError("extract_basis: no singular value above tolerance");
  SubspaceBasis b;
  b.U = svd.matrixU().leftCols(k);
  b.singular_values = s.head(k);
  return b;
}

Projector make_projector(const Matrix& U) {
  if (U.cols() < 1) throw ConfigError("make_projector: empty basis");
  const Matrix gram = U.transpose() * U;
  const Matrix eye = Matrix::Identity(U.cols(), U.cols());
  if ((gram - eye).cwiseAbs().maxCoeff() > 1e-5)
    throw ConfigError("make_projector: basis is not orthonormal");
  Projector p;
  p.P = U * U.transpose();
  return p;
}

double decoupling_loss(const HiddenStack& stack, const Vector& alpha,
                       const Matrix& P, std::vector<Matrix>* d_hidden,
                       bool frobenius) {
  if (stack.states.empty()) throw ConfigError("decoupling_loss: empty stack");
  if (static_cast<long>(stack.states.size()) != alpha.size())
    throw ConfigError("decoupling_loss: alpha/layer count mismatch");
  const long t_len = stack.states[0].rows();
  std::vector<std::uint8_t> mask = stack.mask;
  if (mask.empty()) mask.assign(t_len, 1);
  long n = 0;
  for (std::uint8_t m : mask) n += m;
  if (n == 0) throw ConfigError("decoupling_loss: all tokens masked");

  Matrix hp = alpha(0) * stack.states[0];
  for (std::size_t i = 1; i < stack.states.size(); ++i)
    hp += alpha(static_cast<long>(i)) * stack.states[i];

  const Matrix proj = hp * P;  // row t = h'_t P (P symmetric)
  double loss = 0;
  Matrix dhp = Matrix::Zero(hp.rows(), hp.cols());
  if (frobenius) {
    double ssq = 0;
    for (long t = 0; t < t_len; ++t)
      if (mask[t]) ssq += proj.row(t).squaredNorm();
    loss = std::sqrt(ssq);
    if (d_hidden && loss > 1e-12)
      for (long t = 0; t < t_len; ++t)
        if (mask[t]) dhp.row(t) = proj.row(t) / loss;
  } else {
    for (long t = 0; t < t_len; ++t) {
      if (!mask[t]) continue;
      const double norm = proj.row(t).norm();
      loss += norm / n;
      if (d_hidden && norm > 1e-12) dhp.row(t) = proj.row(t) / (norm * n);
    }
  }
  if (d_hidden) {
    d_hidden->assign(stack.states.size(), Matrix());
    for (std::size_t i = 0; i < stack.states.size(); ++i)
      (*d_hidden)[i] = alpha(static_cast<long>(i)) * dhp;
  }
  return loss;
}

double ssa_degrees(const Matrix& U_A, const Matrix& U_B) {
  if (U_A.cols() < 1 || U_B.cols() < 1)
    throw ConfigError("ssa: empty basis");
  if (U_A.rows() != U_B.rows())
    throw ConfigError("ssa: ambient dimensions differ");
  Eigen::JacobiSVD<Matrix> svd(U_A.transpose() * U_B);
  const Vector s = svd.singularValues();
  const long k = std::min(U_A.cols(), U_B.cols());
  double acc = 0;
  for (long i = 0; i < k; ++i)
    acc += std::acos(std::clamp(s(i), 0.0, 1.0));
  return acc / k * 180.0 / M_PI;
}

void save_basis(const SubspaceBasis& b, const std::string& path) {
  TensorFile f;
  f.header.set("kind", "subspace_basis");
  f.header.set("source_step", std::to_string(b.source_step));
  f.add("U", b.U);
  f.add("singular_values", b.singular_values.transpose());
  f.save(path);
}

SubspaceBasis load_basis(const std::string& path) {
  const TensorFile f = TensorFile::load(path);
  SubspaceBasis b;
  b.U = f.get("U");
  b.singular_values = f.get("singular_values").row(0).transpose();
  b.source_step = f.header.get_int("source_step", 0);
  return b;
}

void save_projector(const Projector& p, const std::string& path) {
  TensorFile f;
  f.header.set("kind", "projector");
  f.add("P", p.P);
  f.save(path);
}

Projector load_projector(const std::string& path) {
  const TensorFile f = TensorFile::load(path);
  Projector p;
  p.P = f.get("P");
  return p;
}

}  // namespace diamt
