#pragma once

// Operator kernels of the composite model. Every family is parametrized by its
// free components only, so constraints hold after any optimizer step.

#include <string>

#include "phnn/diffcore/params.hpp"
#include "phnn/diffcore/tape.hpp"
#include "phnn/spatial.hpp"

namespace phnn {

enum class OperatorFamily {
  zero,            // size 0
  identity,        // size 1
  central_diff,    // fixed delta_c, size 3
  bbm_helmholtz,   // fixed 1 - delta_c^2, size 3
  neg_laplacian,   // fixed -delta_c^2, size 3
  sym3_trainable,  // [w1, 1, w1] with w1 learned, size 3
};

inline const char* to_string(OperatorFamily f) {
  switch (f) {
    case OperatorFamily::zero: return "zero";
    case OperatorFamily::identity: return "identity";
    case OperatorFamily::central_diff: return "central_diff";
    case OperatorFamily::bbm_helmholtz: return "bbm_helmholtz";
    case OperatorFamily::neg_laplacian: return "neg_laplacian";
    case OperatorFamily::sym3_trainable: return "sym3_trainable";
  }
  return "?";
}

inline OperatorFamily operator_family_from_string(const std::string& s) {
  for (auto f : {OperatorFamily::zero, OperatorFamily::identity, OperatorFamily::central_diff,
                 OperatorFamily::bbm_helmholtz, OperatorFamily::neg_laplacian, OperatorFamily::sym3_trainable})
    if (s == to_string(f)) return f;
  fail(ErrorKind::config, "unknown operator family '" + s + "'");
}

struct OperatorModel {
  std::string name;  // A, S or R
  OperatorFamily family = OperatorFamily::zero;

  int size() const {
    switch (family) {
      case OperatorFamily::zero: return 0;
      case OperatorFamily::identity: return 1;
      default: return 3;
    }
  }
  bool trainable() const { return family == OperatorFamily::sym3_trainable; }
  bool is_zero() const { return family == OperatorFamily::zero; }
  bool is_identity() const { return family == OperatorFamily::identity; }
  std::string param_name() const { return "op." + name + ".w1"; }

  /// Registers the free component; w1 = 0 so the operator starts as the identity.
  void declare(ad::ParamStore& store) const {
    if (trainable()) store.add(param_name(), 1, 1, "symmetric");
  }

  /// Concrete stencil on a grid of spacing h.
  ConvKernel kernel(const ad::ParamStore& store, double h) const {
    const double c = 1.0 / (h * h);
    switch (family) {
      case OperatorFamily::zero: return ConvKernel::zero();
      case OperatorFamily::identity: return ConvKernel::identity();
      case OperatorFamily::central_diff: return ConvKernel::central_difference(h);
      case OperatorFamily::bbm_helmholtz: return ConvKernel({-c, 1.0 + 2.0 * c, -c}, KernelConstraint::symmetric);
      case OperatorFamily::neg_laplacian: return ConvKernel({-c, 2.0 * c, -c}, KernelConstraint::symmetric);
      case OperatorFamily::sym3_trainable: {
        const double w1 = store.view(param_name())(0, 0);
        return ConvKernel({w1, 1.0, w1}, KernelConstraint::symmetric);
      }
    }
    return ConvKernel::zero();
  }

  /// Kernel row [1 x K] as a tape node; trainable kernels flow gradients into w1.
  ad::NodeId emit(ad::Tape& tape, const ad::ParamStore& store, double h) const {
    if (trainable()) {
      Eigen::RowVectorXd offset(3);
      offset << 0.0, 1.0, 0.0;
      Matrix basis(3, 1);
      basis << 1.0, 0.0, 1.0;
      return tape.embed(tape.param(store, param_name()), offset, basis);
    }
    const std::vector<double> w = kernel(store, h).weights();
    return tape.constant(Eigen::Map<const Matrix>(w.data(), 1, static_cast<Eigen::Index>(w.size())));
  }

  /// op * x, skipping the work for zero and identity.
  ad::NodeId apply(ad::Tape& tape, const ad::ParamStore& store, double h, ad::NodeId x) const {
    if (is_identity()) return x;
    return tape.conv(x, emit(tape, store, h), size());
  }
};

}  // namespace phnn
