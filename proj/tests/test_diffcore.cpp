#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "phnn/diffcore/finite_diff.hpp"
#include "phnn/diffcore/scalar_net.hpp"
#include "phnn/diffcore/tape.hpp"

using namespace phnn;
using namespace phnn::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

double scalar(const Tape& t, NodeId id) { return t.value(id)(0, 0); }

double rel_linf(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

// Parameter gradients of a scalar loss vs central differences (step 1e-5).
double param_gradient_error(Tape& tape, NodeId loss, ParamStore& store, const std::vector<Matrix>& inputs) {
  tape.forward(store, inputs);
  const auto g = tape.backward(loss);
  std::vector<double> fd(store.flat_size());
  auto flat = store.flat();
  const double eps = 1e-5;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + eps;
    tape.forward(store, inputs);
    const double up = scalar(tape, loss);
    flat[i] = keep - eps;
    tape.forward(store, inputs);
    const double down = scalar(tape, loss);
    flat[i] = keep;
    fd[i] = (up - down) / (2 * eps);
  }
  return rel_linf(g.params, fd);
}

double input_gradient_error(Tape& tape, NodeId loss, ParamStore& store, std::vector<Matrix> inputs,
                            std::size_t slot) {
  tape.forward(store, inputs);
  const Matrix ga = tape.backward(loss).inputs[slot];
  std::vector<double> a(ga.data(), ga.data() + ga.size()), fd(ga.size());
  const double eps = 1e-5;
  for (Eigen::Index i = 0; i < ga.size(); ++i) {
    double& x = inputs[slot].data()[i];
    const double keep = x;
    x = keep + eps;
    tape.forward(store, inputs);
    const double up = scalar(tape, loss);
    x = keep - eps;
    tape.forward(store, inputs);
    const double down = scalar(tape, loss);
    x = keep;
    fd[i] = (up - down) / (2 * eps);
  }
  return rel_linf(a, fd);
}

}  // namespace

TEST(Tape, EmptyPassthrough) {
  Tape t(4);
  const auto x = t.input(1, 4);
  ParamStore store;
  Matrix u(1, 4);
  u << 1, 2, 3, 4;
  std::vector<Matrix> in{u};
  t.forward(store, in);
  EXPECT_EQ(t.value(x), u);
}

TEST(Tape, ForwardExamples) {
  Tape t(5);
  const auto x = t.input(1, 5);
  const auto th = t.tanh(x);
  const auto s = t.sum(x);
  ParamStore store;
  std::vector<Matrix> in{Matrix::Zero(1, 5)};
  t.forward(store, in);
  EXPECT_EQ(t.value(th), Matrix::Zero(1, 5));
  in[0] = Matrix::Ones(1, 5);
  t.forward(store, in);
  EXPECT_EQ(scalar(t, s), 5.0);
}

TEST(Tape, BackwardExamples) {
  ParamStore store;
  {
    Tape t(6);
    const auto x = t.input(1, 6);
    const auto s = t.sum(x);
    std::vector<Matrix> in{Matrix::Constant(1, 6, 0.3)};
    t.forward(store, in);
    EXPECT_EQ(t.backward(s).inputs[0], Matrix::Ones(1, 6));
  }
  {
    Tape t(1);
    const auto x = t.input(1, 1);
    const auto s = t.sum(t.tanh(x));
    std::vector<Matrix> in{Matrix::Zero(1, 1)};
    t.forward(store, in);
    EXPECT_EQ(t.backward(s).inputs[0](0, 0), 1.0);
  }
  {
    Tape t(4);
    const auto x = t.input(1, 4);
    const auto s = t.mean_square(x);
    Matrix u(1, 4);
    u << 1, -2, 0.5, 3;
    std::vector<Matrix> in{u};
    t.forward(store, in);
    EXPECT_TRUE(t.backward(s).inputs[0].isApprox(2.0 * u / 4.0, 1e-15));
  }
}

TEST(Tape, Errors) {
  ParamStore store;
  Tape t(4);
  const auto x = t.input(1, 4);
  const auto s = t.sum(x);
  try {
    t.backward(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
  std::vector<Matrix> bad{Matrix::Zero(1, 3)};
  try {
    t.forward(store, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  try {
    t.add(x, t.input(2, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Tape, RepeatedForwardIsBitwiseIdentical) {
  std::mt19937_64 rng(2);
  ParamStore store;
  ScalarIntegralNet net{"H", 4, 6, 3};
  net.declare(store, rng);
  Tape t(8);
  const auto u = t.input(1, 16);
  const auto g = grad_input_scalar_net(t, store, net, u);
  const auto loss = t.mean_square(g);
  std::vector<Matrix> in{random_matrix(1, 16, rng)};
  t.forward(store, in);
  const Matrix first = t.value(g);
  const auto g1 = t.backward(loss);
  t.forward(store, in);
  EXPECT_EQ(t.value(g), first);
  EXPECT_EQ(t.backward(loss).params, g1.params);
}

TEST(ParamStoreTest, NamesAndFlatView) {
  ParamStore s;
  s.add("a", 2, 3);
  s.add("b", 1, 1, "symmetric");
  EXPECT_EQ(s.flat_size(), 7u);
  EXPECT_THROW(s.add("a", 1, 1), Error);
  s.view("a")(1, 2) = 4.0;
  EXPECT_EQ(s.flat()[5], 4.0);
}

TEST(FiniteDiff, Examples) {
  Vector u(2);
  u << 1, 2;
  const Vector g = finite_diff_gradient([](const Vector& v) { return v.squaredNorm(); }, u, 1e-6);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
  EXPECT_EQ(finite_diff_gradient([](const Vector&) { return 3.0; }, u, 1e-6), Vector::Zero(2));
  const Vector s = finite_diff_gradient([](const Vector& v) { return v.array().sin().sum(); }, Vector::Zero(3), 1e-6);
  EXPECT_LT((s - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(finite_diff_gradient([](const Vector&) { return 0.0; }, u, 0.0), Error);
}

TEST(ScalarNet, ZeroWeightsGiveZeroGradient) {
  ParamStore store;
  ScalarIntegralNet net{"H", 3, 5, 3};
  std::mt19937_64 rng(0);
  net.declare(store, rng);
  for (auto& v : store.flat()) v = 0.0;
  Tape t(8);
  const auto u = t.input(1, 8);
  const auto g = grad_input_scalar_net(t, store, net, u);
  std::vector<Matrix> in{random_matrix(1, 8, rng)};
  t.forward(store, in);
  EXPECT_EQ(t.value(g), Matrix::Zero(1, 8));
}

TEST(ScalarNet, LinearSumGivesOnes) {
  ParamStore store;
  ScalarIntegralNet net{"H", 1, 1, 3, Activation::identity, Activation::identity};
  std::mt19937_64 rng(0);
  net.declare(store, rng);
  store.view(net.conv_w()) << 0, 1, 0;
  store.view(net.l1_w())(0, 0) = 1;
  store.view(net.l2_w())(0, 0) = 1;
  Tape t(8);
  const auto u = t.input(1, 8);
  const auto g = grad_input_scalar_net(t, store, net, u);
  const auto H = net.emit_value(t, store, u);
  std::vector<Matrix> in{random_matrix(1, 8, rng)};
  t.forward(store, in);
  EXPECT_EQ(t.value(g), Matrix::Ones(1, 8));
  EXPECT_NEAR(t.value(H)(0, 0), in[0].sum(), 1e-14);
}

TEST(ScalarNet, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore store;
    ScalarIntegralNet net{"H", 4, 7, 3};
    net.declare(store, rng);
    for (auto& v : store.flat()) v += 0.1 * std::normal_distribution<double>()(rng);
    Tape t(8);
    const auto u = t.input(1, 8);
    const auto g = grad_input_scalar_net(t, store, net, u);
    const auto H = net.emit_value(t, store, u);
    const Vector u0 = random_matrix(8, 1, rng);
    std::vector<Matrix> in{u0.transpose()};
    t.forward(store, in);
    const Vector analytic = t.value(g).transpose();
    const Vector fd = finite_diff_gradient(
        [&](const Vector& v) {
          std::vector<Matrix> vin{v.transpose()};
          t.forward(store, vin);
          return t.value(H)(0, 0);
        },
        u0, 1e-5);
    EXPECT_LT((analytic - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial;
  }
}

TEST(ScalarNet, UnsupportedArchitecture) {
  ParamStore store;
  ScalarIntegralNet net{"H", 4, 7, 2};
  std::mt19937_64 rng(0);
  try {
    net.declare(store, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}

// Every primitive's reverse rule against finite differences, 20 random trials each.
class PrimitiveGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{1234};
};

TEST_F(PrimitiveGradients, ConvAffineTanhChain) {
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore s;
    s.add("k", 3, 2 * 5);
    s.add("b", 3, 1);
    s.add("W", 2, 3);
    s.add("c", 2, 1);
    for (auto& v : s.flat()) v = std::normal_distribution<double>(0, 0.5)(rng);
    Tape t(8);
    const auto x = t.input(2, 16);
    const auto z = t.tanh(t.conv(x, t.param(s, "k"), 5, t.param(s, "b")));
    const auto y = t.affine(t.param(s, "W"), z, t.param(s, "c"));
    const auto loss = t.add(t.mean_square(y), t.sum(t.mul(y, y)));
    std::vector<Matrix> in{random_matrix(2, 16, rng)};
    EXPECT_LT(param_gradient_error(t, loss, s, in), 1e-4);
    EXPECT_LT(input_gradient_error(t, loss, s, in, 0), 1e-4);
  }
}

TEST_F(PrimitiveGradients, TransposedOperators) {
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore s;
    s.add("k", 3, 2 * 3);
    s.add("W", 4, 3);
    for (auto& v : s.flat()) v = std::normal_distribution<double>(0, 0.5)(rng);
    Tape t(8);
    const auto x = t.input(4, 8);
    const auto a = t.affine_t(t.param(s, "W"), t.tanh_deriv(t.scale(t.tanh(x), 1.0)));
    const auto y = t.conv_t(t.sub(a, t.scale(a, 0.3)), t.param(s, "k"), 3);
    const auto loss = t.add(t.mean_square(y), t.mean_abs(t.segment_sum(y)));
    std::vector<Matrix> in{random_matrix(4, 8, rng)};
    EXPECT_LT(param_gradient_error(t, loss, s, in), 1e-4);
    EXPECT_LT(input_gradient_error(t, loss, s, in, 0), 1e-4);
  }
}

TEST_F(PrimitiveGradients, CirculantSolveWithEmbeddedKernel) {
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore s;
    s.add("w1", 1, 1, "symmetric");
    s.view("w1")(0, 0) = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    Tape t(8);
    const auto b = t.input(1, 24);
    Eigen::RowVectorXd offset(3);
    offset << 0, 1, 0;
    Matrix basis(3, 1);
    basis << 1, 0, 1;
    const auto k = t.embed(t.param(s, "w1"), offset, basis);
    const auto y = t.solve(k, b);
    const auto loss = t.sum(t.mul(y, t.tanh(y)));
    std::vector<Matrix> in{random_matrix(1, 24, rng)};
    EXPECT_LT(param_gradient_error(t, loss, s, in), 1e-4);
    EXPECT_LT(input_gradient_error(t, loss, s, in, 0), 1e-4);
  }
}

TEST_F(PrimitiveGradients, ThroughInputGradientOfScalarNet) {
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore s;
    ScalarIntegralNet net{"V", 3, 5, 3};
    net.declare(s, rng);
    for (auto& v : s.flat()) v += 0.1 * std::normal_distribution<double>()(rng);
    Tape t(8);
    const auto u0 = t.input(1, 16);
    const auto u1 = t.input(1, 16);
    const auto mid = t.scale(t.add(u0, u1), 0.5);
    const auto g = grad_input_scalar_net(t, s, net, mid);
    const auto res = t.sub(t.scale(t.sub(u1, u0), 10.0), g);
    const auto loss = t.mean_square(res);
    std::vector<Matrix> in{random_matrix(1, 16, rng), random_matrix(1, 16, rng)};
    EXPECT_LT(param_gradient_error(t, loss, s, in), 1e-4);
    EXPECT_LT(input_gradient_error(t, loss, s, in, 1), 1e-4);
  }
}

TEST(SolveNode, SingularKernelIsReported) {
  ParamStore s;
  Tape t(8);
  Matrix k(1, 3);
  k << 0.5, 0, 0.5;
  const auto y = t.solve(t.constant(k), t.input(1, 8), "R");
  (void)y;
  std::vector<Matrix> in{Matrix::Ones(1, 8)};
  try {
    t.forward(s, in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_operator);
    EXPECT_EQ(std::string(e.what()).rfind("operator R", 0), 0u);
  }
}
