#pragma once

// Periodic grids, finite-difference stencils as circular convolutions,
// circulant linear algebra and the quadrature inner product.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "phnn/error.hpp"

namespace phnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform periodic mesh on [0, P) with M nodes x_i = i*h.
struct PeriodicGrid {
  int M = 0;
  double P = 0.0;
  double h = 0.0;
  Vector kappa;

  double x(int i) const { return h * i; }

  Vector nodes() const {
    Vector out(M);
    for (int i = 0; i < M; ++i) out[i] = x(i);
    return out;
  }

  bool operator==(const PeriodicGrid& other) const {
    return M == other.M && P == other.P;
  }
};

inline PeriodicGrid make_grid(int M, double P) {
  if (M < 3) fail(ErrorKind::invalid_grid, "grid needs M >= 3, got " + std::to_string(M));
  if (!(P > 0.0) || !std::isfinite(P)) fail(ErrorKind::invalid_grid, "grid period must be positive");
  PeriodicGrid g;
  g.M = M;
  g.P = P;
  g.h = P / M;
  g.kappa = Vector::Constant(M, g.h);
  return g;
}

enum class KernelConstraint { free, symmetric, skew, zero, identity };

inline const char* to_string(KernelConstraint c) {
  switch (c) {
    case KernelConstraint::free: return "free";
    case KernelConstraint::symmetric: return "symmetric";
    case KernelConstraint::skew: return "skew";
    case KernelConstraint::zero: return "zero";
    case KernelConstraint::identity: return "identity";
  }
  return "free";
}

inline KernelConstraint kernel_constraint_from_string(const std::string& s) {
  if (s == "free") return KernelConstraint::free;
  if (s == "symmetric") return KernelConstraint::symmetric;
  if (s == "skew") return KernelConstraint::skew;
  if (s == "zero") return KernelConstraint::zero;
  if (s == "identity") return KernelConstraint::identity;
  fail(ErrorKind::config, "unknown kernel constraint '" + s + "'");
}

/// Odd-width stencil w_{-m..m} listed left to right; out_i = sum_j w_j u_{i+j}.
class ConvKernel {
 public:
  ConvKernel() : weights_{0.0}, constraint_(KernelConstraint::zero) {}

  ConvKernel(std::vector<double> weights, KernelConstraint constraint)
      : weights_(std::move(weights)), constraint_(constraint) {
    if (weights_.empty() || weights_.size() % 2 == 0)
      fail(ErrorKind::shape, "kernel width must be odd, got " + std::to_string(weights_.size()));
    validate();
  }

  static ConvKernel identity(int halfwidth = 0) {
    std::vector<double> w(2 * halfwidth + 1, 0.0);
    w[halfwidth] = 1.0;
    return {std::move(w), KernelConstraint::identity};
  }
  static ConvKernel zero(int halfwidth = 0) {
    return {std::vector<double>(2 * halfwidth + 1, 0.0), KernelConstraint::zero};
  }
  /// delta_c u_i = (u_{i+1} - u_{i-1}) / 2h
  static ConvKernel central_difference(double h) {
    return {{-1.0 / (2 * h), 0.0, 1.0 / (2 * h)}, KernelConstraint::skew};
  }
  /// delta_c^2 u_i = (u_{i+1} - 2u_i + u_{i-1}) / h^2
  static ConvKernel second_difference(double h) {
    const double s = 1.0 / (h * h);
    return {{s, -2.0 * s, s}, KernelConstraint::symmetric};
  }

  int halfwidth() const { return static_cast<int>(weights_.size() / 2); }
  int width() const { return static_cast<int>(weights_.size()); }
  KernelConstraint constraint() const { return constraint_; }
  const std::vector<double>& weights() const { return weights_; }
  /// Weight w_j for j in [-m, m].
  double at(int j) const { return weights_[j + halfwidth()]; }

  std::string describe() const {
    std::ostringstream os;
    os << to_string(constraint_) << "[";
    for (std::size_t i = 0; i < weights_.size(); ++i) os << (i ? "," : "") << weights_[i];
    os << "]";
    return os.str();
  }

 private:
  void validate() const {
    const int m = halfwidth();
    for (int j = -m; j <= m; ++j) {
      const double a = at(j), b = at(-j);
      bool ok = true;
      switch (constraint_) {
        case KernelConstraint::free: break;
        case KernelConstraint::symmetric: ok = a == b; break;
        case KernelConstraint::skew: ok = a == -b; break;
        case KernelConstraint::zero: ok = a == 0.0; break;
        case KernelConstraint::identity: ok = a == (j == 0 ? 1.0 : 0.0); break;
      }
      if (!ok)
        fail(ErrorKind::shape, std::string("kernel weights violate ") + to_string(constraint_) +
                                   " constraint");
    }
  }

  std::vector<double> weights_;
  KernelConstraint constraint_;
};

namespace detail {
inline void check_width(const ConvKernel& k, Eigen::Index M) {
  if (M < k.width())
    fail(ErrorKind::kernel_too_wide, "kernel of width " + std::to_string(k.width()) +
                                         " does not fit a periodic grid of " + std::to_string(M) +
                                         " points");
}
inline Eigen::Index wrap(Eigen::Index i, Eigen::Index M) {
  const Eigen::Index r = i % M;
  return r < 0 ? r + M : r;
}
}  // namespace detail

inline Vector stencil_apply(const ConvKernel& k, const Eigen::Ref<const Vector>& u) {
  const Eigen::Index M = u.size();
  detail::check_width(k, M);
  const int m = k.halfwidth();
  Vector out = Vector::Zero(M);
  for (int j = -m; j <= m; ++j) {
    const double w = k.at(j);
    if (w == 0.0) continue;
    for (Eigen::Index i = 0; i < M; ++i) out[i] += w * u[detail::wrap(i + j, M)];
  }
  return out;
}

/// Dense representation of the periodic stencil; row i holds w_j at column (i+j) mod M.
class CirculantMatrix {
 public:
  CirculantMatrix(const ConvKernel& k, int M) : kernel_(k), M_(M) { detail::check_width(k, M); }

  int size() const { return M_; }
  const ConvKernel& kernel() const { return kernel_; }

  Matrix dense() const {
    Matrix C = Matrix::Zero(M_, M_);
    const int m = kernel_.halfwidth();
    for (int i = 0; i < M_; ++i)
      for (int j = -m; j <= m; ++j) C(i, detail::wrap(i + j, M_)) += kernel_.at(j);
    return C;
  }

  Vector apply(const Eigen::Ref<const Vector>& u) const { return dense() * u; }

 private:
  ConvKernel kernel_;
  int M_;
};

inline CirculantMatrix circulant_matrix(const ConvKernel& k, int M) { return {k, M}; }

/// Eigenvalues lambda_q = sum_j w_j exp(2 pi i j q / M) of the circulant generated by k.
inline std::vector<std::complex<double>> circulant_eigenvalues(const ConvKernel& k, int M) {
  detail::check_width(k, M);
  std::vector<std::complex<double>> lam(M);
  const int m = k.halfwidth();
  for (int q = 0; q < M; ++q) {
    std::complex<double> s = 0.0;
    for (int j = -m; j <= m; ++j) {
      const double arg = 2.0 * std::numbers::pi * j * q / M;
      s += k.at(j) * std::complex<double>(std::cos(arg), std::sin(arg));
    }
    lam[q] = s;
  }
  return lam;
}

/// Factorizes a circulant once; solves many right-hand sides and their transposes.
class CirculantSolver {
 public:
  static constexpr double singular_tolerance = 1e-12;

  CirculantSolver(const ConvKernel& k, int M) : kernel_(k), M_(M) {
    const auto lam = circulant_eigenvalues(k, M);
    double lo = std::abs(lam[0]), hi = lo;
    for (const auto& l : lam) {
      lo = std::min(lo, std::abs(l));
      hi = std::max(hi, std::abs(l));
    }
    if (!(hi > 0.0) || lo < singular_tolerance * hi)
      fail(ErrorKind::singular_operator,
           "circulant operator " + k.describe() + " is singular on " + std::to_string(M) + " points");
    lu_.compute(CirculantMatrix(k, M).dense());
  }

  int size() const { return M_; }
  const ConvKernel& kernel() const { return kernel_; }

  /// Solves column-wise; each column of b is one periodic vector of length M.
  Matrix solve(const Eigen::Ref<const Matrix>& b) const {
    check(b.rows());
    return lu_.solve(b);
  }
  Matrix solve_transposed(const Eigen::Ref<const Matrix>& b) const {
    check(b.rows());
    return lu_.transpose().solve(b);
  }

 private:
  void check(Eigen::Index rows) const {
    if (rows != M_) fail(ErrorKind::shape, "right-hand side length does not match operator size");
  }

  ConvKernel kernel_;
  int M_;
  Eigen::PartialPivLU<Matrix> lu_;
};

inline Vector solve_circulant(const ConvKernel& k, const Eigen::Ref<const Vector>& b) {
  return CirculantSolver(k, static_cast<int>(b.size())).solve(b);
}

inline double discrete_inner(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v,
                             const PeriodicGrid& g) {
  if (u.size() != g.M || v.size() != g.M)
    fail(ErrorKind::shape, "inner product operands must have length M=" + std::to_string(g.M));
  double s = 0.0;
  for (int i = 0; i < g.M; ++i) s += g.kappa[i] * u[i] * v[i];
  return s;
}

}  // namespace phnn
