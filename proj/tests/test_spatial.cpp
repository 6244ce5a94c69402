#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "phnn/spatial.hpp"

using namespace phnn;

namespace {

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

template <class F>
void expect_error(ErrorKind kind, F&& f) {
  try {
    f();
    FAIL() << "expected " << to_string(kind) << " error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(Grid, SpacingAndWeights) {
  const auto g = make_grid(4, 2.0);
  EXPECT_DOUBLE_EQ(g.h, 0.5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(g.kappa[i], 0.5);
  EXPECT_NEAR(make_grid(100, 20.0).h, 0.2, 1e-15);
  const auto g2 = make_grid(37, 6.0);
  EXPECT_NEAR(g2.h * g2.M, g2.P, 1e-14 * g2.P);
}

TEST(Grid, RejectsTooFewPoints) {
  expect_error(ErrorKind::invalid_grid, [] { make_grid(2, 1.0); });
  expect_error(ErrorKind::invalid_grid, [] { make_grid(8, 0.0); });
}

TEST(Kernel, ConstraintsAreChecked) {
  EXPECT_NO_THROW(ConvKernel({1, 2, 1}, KernelConstraint::symmetric));
  expect_error(ErrorKind::shape, [] { ConvKernel({1, 2, 3}, KernelConstraint::symmetric); });
  expect_error(ErrorKind::shape, [] { ConvKernel({-1, 0.5, 1}, KernelConstraint::skew); });
  expect_error(ErrorKind::shape, [] { ConvKernel({0, 1}, KernelConstraint::free); });
  EXPECT_EQ(ConvKernel::identity(1).at(0), 1.0);
  EXPECT_EQ(ConvKernel::identity(1).at(1), 0.0);
}

TEST(Stencil, Identity) {
  std::mt19937_64 rng(1);
  const Vector u = random_vector(9, rng);
  EXPECT_EQ(stencil_apply(ConvKernel::identity(1), u), u);
}

TEST(Stencil, CentralDifferenceOnFourPoints) {
  Vector u(4);
  u << 0, 1, 0, -1;
  Vector expect(4);
  expect << 1, 0, -1, 0;
  EXPECT_TRUE(stencil_apply(ConvKernel::central_difference(1.0), u).isApprox(expect, 1e-15));
}

TEST(Stencil, SecondDifferenceAnnihilatesConstants) {
  const Vector u = Vector::Constant(10, 3.7);
  EXPECT_LT(stencil_apply(ConvKernel::second_difference(0.1), u).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stencil, TooWide) {
  expect_error(ErrorKind::kernel_too_wide,
               [] { stencil_apply(ConvKernel({1, 1, 1, 1, 1}, KernelConstraint::symmetric), Vector::Ones(4)); });
}

TEST(Circulant, MatchesExampleSkewMatrix) {
  const double h = 0.25;
  const Matrix C = circulant_matrix(ConvKernel::central_difference(h), 6).dense();
  Matrix S = Matrix::Zero(6, 6);
  for (int i = 0; i < 6; ++i) {
    S(i, (i + 1) % 6) = 1.0 / (2 * h);
    S(i, (i + 5) % 6) = -1.0 / (2 * h);
  }
  EXPECT_EQ(C, S);
  EXPECT_EQ(C + C.transpose(), Matrix::Zero(6, 6));
}

TEST(Circulant, ZeroAndSymmetric) {
  EXPECT_EQ(circulant_matrix(ConvKernel::zero(1), 5).dense(), Matrix::Zero(5, 5));
  const Matrix C = circulant_matrix(ConvKernel({0.3, -1.1, 2.0, -1.1, 0.3}, KernelConstraint::symmetric), 7).dense();
  EXPECT_EQ(C, C.transpose());
}

TEST(Circulant, ProductMatchesStencil) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> mdist(0, 3), ndist(9, 30);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = mdist(rng), M = ndist(rng);
    const Vector w = random_vector(2 * m + 1, rng);
    const ConvKernel k(std::vector<double>(w.data(), w.data() + w.size()), KernelConstraint::free);
    const Vector u = random_vector(M, rng);
    const Vector a = circulant_matrix(k, M).apply(u), b = stencil_apply(k, u);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, b.cwiseAbs().maxCoeff()));
  }
}

TEST(Solve, IdentityAndRoundTrip) {
  std::mt19937_64 rng(3);
  const Vector b = random_vector(20, rng);
  EXPECT_EQ(solve_circulant(ConvKernel::identity(), b), b);
  const double h = 50.0 / 20;
  const double c = 1.0 / (h * h);
  const ConvKernel A({-c, 1 + 2 * c, -c}, KernelConstraint::symmetric);
  const Vector y = random_vector(20, rng);
  const Vector back = solve_circulant(A, stencil_apply(A, y));
  EXPECT_LE((back - y).norm(), 1e-10 * y.norm());
  const Vector x = solve_circulant(A, b);
  EXPECT_LE((stencil_apply(A, x) - b).norm(), 1e-10 * b.norm());
}

TEST(Solve, SingularKernelNamesOperator) {
  // eigenvalues cos(2 pi q / M) vanish at q = M/4
  const ConvKernel k({0.5, 0.0, 0.5}, KernelConstraint::symmetric);
  try {
    solve_circulant(k, Vector::Ones(8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_operator);
    EXPECT_NE(std::string(e.what()).find("symmetric[0.5,0,0.5]"), std::string::npos);
  }
  const auto lam = circulant_eigenvalues(k, 8);
  EXPECT_LT(std::abs(lam[2]), 1e-15);
  EXPECT_LT(std::abs(lam[6]), 1e-15);
  // direct eigendecomposition of the dense matrix
  Eigen::SelfAdjointEigenSolver<Matrix> es(circulant_matrix(k, 8).dense());
  EXPECT_LT(es.eigenvalues().cwiseAbs().minCoeff(), 1e-15);
}

TEST(Inner, Basics) {
  const auto g = make_grid(4, 2.0);
  EXPECT_DOUBLE_EQ(discrete_inner(Vector::Ones(4), Vector::Ones(4), g), 2.0);
  Vector alt(4);
  alt << 1, -1, 1, -1;
  EXPECT_EQ(discrete_inner(alt, Vector::Ones(4), g), 0.0);
  std::mt19937_64 rng(5);
  const Vector u = random_vector(4, rng), v = random_vector(4, rng);
  EXPECT_NEAR(discrete_inner(2 * u, v, g), 2 * discrete_inner(u, v, g), 1e-14);
  expect_error(ErrorKind::shape, [&] { discrete_inner(Vector::Ones(3), Vector::Ones(4), g); });
}

TEST(Properties, SkewAdjointAndSymmetric) {
  std::mt19937_64 rng(11);
  const auto g = make_grid(32, 20.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector u = random_vector(32, rng), v = random_vector(32, rng);
    const auto S = ConvKernel::central_difference(g.h);
    EXPECT_NEAR(discrete_inner(stencil_apply(S, u), v, g), -discrete_inner(u, stencil_apply(S, v), g), 1e-12);
    const auto R = ConvKernel::second_difference(g.h);
    EXPECT_NEAR(discrete_inner(stencil_apply(R, u), v, g), discrete_inner(u, stencil_apply(R, v), g), 1e-11);
  }
}

TEST(Properties, SecondOrderConvergence) {
  auto err = [](int M, bool second) {
    const double P = 3.0;
    const auto g = make_grid(M, P);
    const double k = 2 * std::numbers::pi / P;
    Vector u(M), exact(M);
    for (int i = 0; i < M; ++i) {
      u[i] = std::sin(k * g.x(i));
      exact[i] = second ? -k * k * u[i] : k * std::cos(k * g.x(i));
    }
    const auto K = second ? ConvKernel::second_difference(g.h) : ConvKernel::central_difference(g.h);
    return (stencil_apply(K, u) - exact).cwiseAbs().maxCoeff();
  };
  for (bool second : {false, true}) {
    const double order = std::log2(err(40, second) / err(80, second));
    EXPECT_NEAR(order, 2.0, 0.2);
  }
}
