#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "diamt/subspace.hpp"

using namespace diamt;
namespace fs = std::filesystem;

namespace {

Matrix random_orthonormal(long d, long k, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01(0, 1);
  Matrix a(d, d);
  for (long r = 0; r < d; ++r)
    for (long c = 0; c < d; ++c) a(r, c) = n01(rng);
  Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  return q.leftCols(k);
}

HiddenStack stack_from(const Matrix& h) {
  HiddenStack s;
  s.states = {h};
  return s;
}

}  // namespace

TEST_CASE("extract_basis: single direction") {
  Matrix theta = Matrix::Zero(4, 2);
  theta.col(0) << 3, 0, 4, 0;  // norm 5
  SubspaceBasis b = extract_basis(theta);
  CHECK(b.U.cols() == 1);
  CHECK(b.singular_values(0) == doctest::Approx(5.0));
  Vector v(4);
  v << 0.6, 0, 0.8, 0;
  CHECK(std::abs(std::abs(b.U.col(0).dot(v)) - 1.0) < 1e-10);
}

TEST_CASE("extract_basis: axis-aligned plane and reconstruction") {
  Matrix theta = Matrix::Zero(5, 2);
  theta(0, 0) = 2.0;
  theta(1, 1) = 0.5;
  SubspaceBasis b = extract_basis(theta);
  CHECK(b.U.cols() == 2);
  CHECK(b.singular_values(0) >= b.singular_values(1));
  Matrix P = make_projector(b).P;
  Vector e1 = Vector::Zero(5), e2 = Vector::Zero(5);
  e1(0) = 1;
  e2(1) = 1;
  CHECK((P * e1 - e1).norm() < 1e-10);
  CHECK((P * e2 - e2).norm() < 1e-10);

  // Full-rank reconstruction residual.
  Rng rng(5);
  std::normal_distribution<double> n01(0, 1);
  Matrix t2(6, 2);
  for (long r = 0; r < 6; ++r)
    for (long c = 0; c < 2; ++c) t2(r, c) = n01(rng);
  SubspaceBasis b2 = extract_basis(t2);
  const double resid = (t2 - b2.U * b2.U.transpose() * t2).norm() / t2.norm();
  CHECK(resid <= 1e-5);
}

TEST_CASE("extract_basis: tolerance and degenerate input") {
  Matrix theta = Matrix::Zero(3, 2);
  theta(0, 0) = 1.0;
  theta(1, 1) = 1e-8;  // below rel_tol * s1
  CHECK(extract_basis(theta).U.cols() == 1);
  CHECK(extract_basis(theta, 1e-10).U.cols() == 2);
  CHECK_THROWS_AS(extract_basis(Matrix::Zero(3, 2)), ConfigError);
}

TEST_CASE("make_projector invariants") {
  Matrix U = Matrix::Zero(3, 1);
  U(0, 0) = 1;
  Matrix P = make_projector(U).P;
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 0) = 1;
  CHECK((P - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Full basis gives the identity.
  Matrix full = random_orthonormal(4, 4, 2);
  CHECK((make_projector(full).P - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-10);

  Matrix bad = Matrix::Ones(3, 2);
  CHECK_THROWS_AS(make_projector(bad), ConfigError);

  Matrix R = random_orthonormal(16, 2, 7);
  Matrix Pr = make_projector(R).P;
  CHECK((Pr - Pr.transpose()).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((Pr * Pr - Pr).cwiseAbs().maxCoeff() < 1e-4);
  Rng rng(9);
  std::normal_distribution<double> n01(0, 1);
  for (int i = 0; i < 100; ++i) {
    Vector h(16);
    for (long j = 0; j < 16; ++j) h(j) = n01(rng);
    CHECK((Pr * h).norm() <= h.norm() + 1e-12);
    // Pythagoras under the projector.
    const double a = (Pr * h).squaredNorm();
    const double b = ((Matrix::Identity(16, 16) - Pr) * h).squaredNorm();
    CHECK(a + b == doctest::Approx(h.squaredNorm()).epsilon(1e-5));
  }
}

TEST_CASE("decoupling_loss analytic anchors") {
  Vector alpha = Vector::Ones(1);
  Matrix U = random_orthonormal(6, 2, 3);
  Matrix P = make_projector(U).P;

  // P = 0 -> 0.
  HiddenStack s = stack_from(Matrix::Random(4, 6));
  CHECK(decoupling_loss(s, alpha, Matrix::Zero(6, 6)) == 0.0);

  // States orthogonal to span(U) -> 0.
  Matrix comp = Matrix::Identity(6, 6) - P;
  HiddenStack orth = stack_from((Matrix::Random(4, 6) * comp).eval());
  CHECK(decoupling_loss(orth, alpha, P) < 1e-10);

  // h'_t = c * u inside the span -> |c|.
  for (double c : {1.0, 2.5}) {
    Matrix h(3, 6);
    for (long t = 0; t < 3; ++t) h.row(t) = c * U.col(0).transpose();
    CHECK(decoupling_loss(stack_from(h), alpha, P) == doctest::Approx(c));
  }

  // Padding invariance: appending masked tokens changes nothing.
  Matrix h = Matrix::Random(3, 6);
  HiddenStack plain = stack_from(h);
  const double base = decoupling_loss(plain, alpha, P);
  Matrix padded(5, 6);
  padded.topRows(3) = h;
  padded.bottomRows(2).setConstant(7.0);
  HiddenStack with_pad = stack_from(padded);
  with_pad.mask = {1, 1, 1, 0, 0};
  CHECK(decoupling_loss(with_pad, alpha, P) == doctest::Approx(base));

  HiddenStack all_masked = stack_from(h);
  all_masked.mask = {0, 0, 0};
  CHECK_THROWS_AS(decoupling_loss(all_masked, alpha, P), ConfigError);
}

TEST_CASE("decoupling_loss gradient matches finite differences") {
  const long t_len = 4, d = 6, n_layers = 3;
  Rng rng(11);
  std::normal_distribution<double> n01(0, 1);
  HiddenStack s;
  for (long l = 0; l < n_layers; ++l) {
    Matrix m(t_len, d);
    for (long r = 0; r < t_len; ++r)
      for (long c = 0; c < d; ++c) m(r, c) = n01(rng);
    s.states.push_back(m);
  }
  s.mask = {1, 1, 0, 1};
  Vector alpha(3);
  alpha << 0.5, 0.3, 0.2;
  Matrix P = make_projector(random_orthonormal(d, 2, 4)).P;

  for (bool frob : {false, true}) {
    std::vector<Matrix> grads;
    decoupling_loss(s, alpha, P, &grads, frob);
    const double h = 1e-6;
    for (long l = 0; l < n_layers; ++l)
      for (long r = 0; r < t_len; ++r)
        for (long c = 0; c < d; ++c) {
          const double orig = s.states[l](r, c);
          s.states[l](r, c) = orig + h;
          const double lp = decoupling_loss(s, alpha, P, nullptr, frob);
          s.states[l](r, c) = orig - h;
          const double lm = decoupling_loss(s, alpha, P, nullptr, frob);
          s.states[l](r, c) = orig;
          const double fd = (lp - lm) / (2 * h);
          CHECK(grads[l](r, c) == doctest::Approx(fd).epsilon(1e-4));
        }
  }
}

TEST_CASE("penalty gradient flows correctly through the model") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = 10;
  cfg.max_seq_len = 8;
  cfg.seed = 21;
  Model m(cfg);
  std::vector<int> ids = {1, 2, 3, 4, 5};
  std::vector<int> targets = {2, 3, 4, 5, 6};
  std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1};
  Vector alpha(2);
  alpha << 0.6, 0.4;
  Matrix P = make_projector(random_orthonormal(8, 2, 31)).P;
  const double lambda = 0.05;

  auto total = [&]() {
    HiddenStack stack;
    Matrix logits = forward(m, ids, {}, &stack);
    stack.mask = mask;
    return lm_loss(logits, targets, mask) +
           lambda * decoupling_loss(stack, alpha, P);
  };

  HiddenStack stack;
  ForwardCache cache;
  Matrix logits = forward(m, ids, {}, &stack, &cache);
  stack.mask = mask;
  std::vector<Matrix> d_hidden;
  decoupling_loss(stack, alpha, P, &d_hidden);
  for (auto& g : d_hidden) g *= lambda;
  Gradients grads =
      backward(m, cache, lm_loss_grad(logits, targets, mask), &d_hidden);

  const double h = 1e-4;
  std::vector<Matrix*> gptrs;
  grads.visit([&](const std::string&, Matrix& t) { gptrs.push_back(&t); });
  std::size_t ti = 0;
  int failed = 0, checked = 0;
  m.params.visit([&](const std::string& name, Matrix& w) {
    Matrix& gw = *gptrs[ti++];
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) {
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double lp = total();
        w(r, c) = orig - h;
        const double lm = total();
        w(r, c) = orig;
        const double fd = (lp - lm) / (2 * h);
        ++checked;
        if (std::abs(gw(r, c) - fd) >
            1e-3 * std::max(std::abs(gw(r, c)), std::abs(fd)) + 1e-7) {
          ++failed;
          if (failed < 4)
            MESSAGE("mismatch in " << name << "(" << r << "," << c << "): "
                                   << gw(r, c) << " vs " << fd);
        }
      }
  });
  CHECK(checked == 850);
  CHECK(failed == 0);
}

TEST_CASE("ssa analytic anchors and invariances") {
  Matrix e1 = Matrix::Zero(4, 1), e2 = Matrix::Zero(4, 1);
  e1(0, 0) = 1;
  e2(1, 0) = 1;
  CHECK(ssa_degrees(e1, e1) == doctest::Approx(0.0));
  CHECK(ssa_degrees(e1, e2) == doctest::Approx(90.0));

  const double th = 30.0 * M_PI / 180.0;
  Matrix tilted = Matrix::Zero(4, 1);
  tilted(0, 0) = std::cos(th);
  tilted(1, 0) = std::sin(th);
  CHECK(ssa_degrees(e1, tilted) == doctest::Approx(30.0).epsilon(1e-6));

  Matrix A = random_orthonormal(10, 3, 1);
  Matrix B = random_orthonormal(10, 2, 2);
  CHECK(ssa_degrees(A, B) == doctest::Approx(ssa_degrees(B, A)).epsilon(1e-8));

  // Right-rotation invariance.
  Matrix R = random_orthonormal(2, 2, 3);
  CHECK(ssa_degrees(A, B * R) == doctest::Approx(ssa_degrees(A, B)).epsilon(1e-8));
  CHECK(ssa_degrees(A, A) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("basis and projector serialization round trip") {
  SubspaceBasis b;
  b.U = random_orthonormal(6, 2, 13);
  b.singular_values = Vector(2);
  b.singular_values << 1.5, 0.2;
  b.source_step = 750;
  const std::string bp = (fs::temp_directory_path() / "diamt_basis.bin").string();
  save_basis(b, bp);
  SubspaceBasis r = load_basis(bp);
  CHECK(r.source_step == 750);
  CHECK((r.U - b.U).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((r.singular_values - b.singular_values).cwiseAbs().maxCoeff() < 1e-6);
  std::remove(bp.c_str());

  Projector p = make_projector(b.U);
  const std::string pp = (fs::temp_directory_path() / "diamt_proj.bin").string();
  save_projector(p, pp);
  CHECK((load_projector(pp).P - p.P).cwiseAbs().maxCoeff() < 1e-6);
  std::remove(pp.c_str());
}
