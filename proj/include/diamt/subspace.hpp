#pragma once

#include <string>
#include <vector>

#include "diamt/common.hpp"
#include "diamt/model.hpp"
#include "diamt/probe.hpp"

namespace diamt {

/// Orthonormal basis of a variety subspace, columns ordered by descending
/// singular value.
struct SubspaceBasis {
  Matrix U;                  // d x k
  Vector singular_values;    // length k
  long source_step = 0;      // training step of the probe it came from
};

struct Projector {
  Matrix P;                  // d x d, symmetric, idempotent
};

/// Thin SVD of theta; retains left singular vectors with s_i >= rel_tol * s_1.
SubspaceBasis extract_basis(const Matrix& theta, double rel_tol = 1e-6);

/// P = U U^T. Rejects non-orthonormal input.
Projector make_projector(const Matrix& U);
inline Projector make_projector(const SubspaceBasis& b) {
  return make_projector(b.U);
}

/// Decoupling penalty: mean over non-masked tokens of ||h'_t P||_2 where
/// h' = sum_i alpha_i h^(i). P and alpha are frozen constants; when
/// `d_hidden` is given it receives dL/dh^(i) for every stack layer (shaped
/// like stack.states), suitable for injection into backward().
/// `frobenius` switches to ||H' P||_F over the batch instead of the
/// token mean (same quantity up to token-count normalization).
double decoupling_loss(const HiddenStack& stack, const Vector& alpha,
                       const Matrix& P, std::vector<Matrix>* d_hidden = nullptr,
                       bool frobenius = false);

/// Mean principal angle between the two subspaces, in degrees.
double ssa_degrees(const Matrix& U_A, const Matrix& U_B);

void save_basis(const SubspaceBasis& b, const std::string& path);
SubspaceBasis load_basis(const std::string& path);
void save_projector(const Projector& p, const std::string& path);
Projector load_projector(const std::string& path);

}  // namespace diamt
