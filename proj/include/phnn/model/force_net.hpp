#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "phnn/diffcore/params.hpp"
#include "phnn/diffcore/tape.hpp"
#include "phnn/pdezoo.hpp"

namespace phnn {

/// Per-sample inputs of every model graph, laid out as B segments of length M.
struct ModelInputs {
  ad::NodeId u;   // [1 x N]
  ad::NodeId xf;  // [2 x N]: sin(2 pi x / P), cos(2 pi x / P)
  ad::NodeId t;   // [1 x N]
};

/// Fourier features of node coordinates, repeated for `segments` samples.
inline Matrix fourier_features(const Vector& x, double P, Eigen::Index segments = 1) {
  const Eigen::Index M = x.size();
  Matrix f(2, M * segments);
  const double k = 2.0 * std::numbers::pi / P;
  for (Eigen::Index i = 0; i < M; ++i) {
    const double s = std::sin(k * x[i]), c = std::cos(k * x[i]);
    for (Eigen::Index b = 0; b < segments; ++b) {
      f(0, b * M + i) = s;
      f(1, b * M + i) = c;
    }
  }
  return f;
}

/// Pointwise force network: features -> W tanh -> W tanh -> 1.
struct ForceNet {
  std::string prefix = "f";
  ForceDeps deps;
  int width = 100;

  int n_features() const { return (deps.u ? 1 : 0) + (deps.x ? 2 : 0) + (deps.t ? 1 : 0); }
  bool enabled() const { return deps.any(); }

  std::string w(int l) const { return prefix + ".l" + std::to_string(l) + ".w"; }
  std::string b(int l) const { return prefix + ".l" + std::to_string(l) + ".b"; }

  template <class Rng>
  void declare(ad::ParamStore& store, Rng& rng) const {
    if (!enabled()) return;
    if (width < 1) fail(ErrorKind::config, "force width must be positive");
    const int fan[3] = {n_features(), width, width};
    const int out[3] = {width, width, 1};
    for (int l = 0; l < 3; ++l) {
      store.init_uniform(store.add(w(l + 1), out[l], fan[l]), fan[l], rng);
      store.add(b(l + 1), out[l], 1);
    }
  }

  /// f_hat at every position, [1 x N].
  ad::NodeId emit(ad::Tape& tape, const ad::ParamStore& store, const ModelInputs& in) const {
    if (!enabled()) fail(ErrorKind::usage, "force network has no inputs");
    std::optional<ad::NodeId> feat;
    auto push = [&](ad::NodeId n) { feat = feat ? tape.concat_rows(*feat, n) : n; };
    if (deps.u) push(in.u);
    if (deps.x) push(in.xf);
    if (deps.t) push(in.t);
    ad::NodeId a = *feat;
    for (int l = 1; l <= 3; ++l) {
      a = tape.affine(tape.param(store, w(l)), a, tape.param(store, b(l)));
      if (l < 3) a = tape.tanh(a);
    }
    return a;
  }
};

}  // namespace phnn
