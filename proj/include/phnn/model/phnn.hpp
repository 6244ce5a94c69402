#pragma once

// The pseudo-Hamiltonian composite
//
//   g(u, x, t) = A^{-1} ( S grad H(u) - R grad V(u) + k4 f(u, x, t) ),
//
// presets, leakage correction, ablation and regridding.

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "phnn/diffcore/scalar_net.hpp"
#include "phnn/model/model.hpp"
#include "phnn/model/operator.hpp"
#include "phnn/pdezoo.hpp"

namespace phnn {

struct ModelWidths {
  int channels = 20;      // conv channels of the integral nets
  int hidden = 100;       // hidden width of the integral nets
  int force_width = 100;  // hidden width of the force net
};

struct PhnnArchitecture {
  OperatorFamily A = OperatorFamily::identity;
  OperatorFamily S = OperatorFamily::zero;
  OperatorFamily R = OperatorFamily::zero;
  int k4 = 1;
  ForceDeps deps;
};

/// Operator families for kernel sizes k = (k1, k2, k3, k4).
inline PhnnArchitecture architecture_from_sizes(std::array<int, 4> k, ForceDeps deps) {
  PhnnArchitecture a;
  auto bad = [&](const std::string& what) -> void {
    fail(ErrorKind::config, "invalid kernel sizes: " + what);
  };
  switch (k[0]) {
    case 0: bad("k1 = 0 leaves A singular"); break;
    case 1: a.A = OperatorFamily::identity; break;
    case 3: a.A = OperatorFamily::sym3_trainable; break;
    default: bad("k1 must be 1 or 3");
  }
  switch (k[1]) {
    case 0: a.S = OperatorFamily::zero; break;
    case 3: a.S = OperatorFamily::central_diff; break;
    default: bad("k2 must be 0 or 3");
  }
  switch (k[2]) {
    case 0: a.R = OperatorFamily::zero; break;
    case 1: a.R = OperatorFamily::identity; break;
    case 3: a.R = OperatorFamily::sym3_trainable; break;
    default: bad("k3 must be 0, 1 or 3");
  }
  if (k[3] != 0 && k[3] != 1) bad("k4 must be 0 or 1");
  a.k4 = k[3];
  a.deps = deps;
  return a;
}

/// Accepts "general" or "phnn-general" and so on.
inline std::string canonical_preset(const std::string& name) {
  const std::string p = name.rfind("phnn-", 0) == 0 ? name.substr(5) : name;
  for (const char* known : {"general", "informed", "lean", "nodiss", "baseline"})
    if (p == known) return p;
  fail(ErrorKind::config, "unknown model preset '" + name + "'");
}

inline PhnnArchitecture phnn_preset(const std::string& preset, SystemName system) {
  const std::string p = canonical_preset(preset);
  const ForceDeps all{true, true, true};
  if (p == "general") return architecture_from_sizes({3, 3, 3, 1}, all);
  if (p == "lean") return architecture_from_sizes({1, 0, 3, 1}, all);
  if (p == "nodiss") return architecture_from_sizes({3, 3, 0, 1}, all);
  if (p == "baseline") fail(ErrorKind::usage, "baseline is not a composite preset");
  PhnnArchitecture a;
  a.deps = system_spec(system, make_grid(8, default_period(system))).force_deps;
  switch (system) {
    case SystemName::kdvburgers:
      a.S = OperatorFamily::central_diff;
      a.R = OperatorFamily::identity;
      break;
    case SystemName::bbm:
      a.A = OperatorFamily::bbm_helmholtz;
      a.S = OperatorFamily::central_diff;
      break;
    case SystemName::peronamalik: a.R = OperatorFamily::identity; break;
    case SystemName::cahnhilliard: a.R = OperatorFamily::neg_laplacian; break;
  }
  return a;
}

class PHNNModel final : public DynamicsModel {
 public:
  OperatorModel A{"A"}, S{"S"}, R{"R"};
  std::optional<ad::ScalarIntegralNet> H, V;
  ForceNet f;
  int k4 = 1;
  bool dissipation = true;  // false once the R-term has been ablated

  // Leakage correction: grad V := grad V - vshift, f := f - fshift.
  bool corrected = false;
  Vector vshift, fshift;

  template <class Rng>
  PHNNModel(std::string preset, SystemName system, const PeriodicGrid& grid, const PhnnArchitecture& arch,
            const ModelWidths& widths, Rng& rng)
      : preset_(std::move(preset)), system_(system) {
    grid_ = grid;
    if (arch.A == OperatorFamily::zero) fail(ErrorKind::config, "operator A must not be zero");
    if (arch.k4 != 0 && arch.k4 != 1) fail(ErrorKind::config, "k4 must be 0 or 1");
    A.family = arch.A;
    S.family = arch.S;
    R.family = arch.R;
    k4 = arch.k4;
    f.deps = arch.deps;
    f.width = widths.force_width;
    A.declare(params_);
    R.declare(params_);
    if (!S.is_zero()) H = ad::ScalarIntegralNet{"H", widths.channels, widths.hidden};
    if (!R.is_zero()) V = ad::ScalarIntegralNet{"V", widths.channels, widths.hidden};
    if (H) H->declare(params_, rng);
    if (V) V->declare(params_, rng);
    f.declare(params_, rng);
    vshift = Vector::Zero(grid.M);
    fshift = Vector::Zero(grid.M);
  }

  std::string kind() const override { return "phnn"; }
  std::string preset() const override { return preset_; }
  SystemName system() const { return system_; }
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<PHNNModel>(*this); }

  bool force_active() const { return k4 == 1 && f.enabled(); }
  bool dissipation_active() const { return dissipation && V.has_value(); }

  struct Parts {
    std::optional<ad::NodeId> grad_h, grad_v, force;  // grad_v and force include the correction shifts
    ad::NodeId g;
  };

  Parts emit_parts(ad::Tape& tape, const ModelInputs& in) const {
    const double h = grid_.h;
    const Eigen::Index segs = tape.cols(in.u) / grid_.M;
    Parts p;
    std::optional<ad::NodeId> sum;
    auto add = [&](ad::NodeId n, bool negate) {
      if (!sum)
        sum = negate ? tape.scale(n, -1.0) : n;
      else
        sum = negate ? tape.sub(*sum, n) : tape.add(*sum, n);
    };
    if (H) {
      p.grad_h = ad::grad_input_scalar_net(tape, params_, *H, in.u);
      add(S.apply(tape, params_, h, *p.grad_h), false);
    }
    if (dissipation_active()) {
      ad::NodeId gv = ad::grad_input_scalar_net(tape, params_, *V, in.u);
      if (corrected) gv = tape.sub(gv, tape.constant(tile(vshift, segs)));
      p.grad_v = gv;
      add(R.apply(tape, params_, h, gv), true);
    }
    if (force_active()) {
      ad::NodeId fv = f.emit(tape, params_, in);
      if (corrected) fv = tape.sub(fv, tape.constant(tile(fshift, segs)));
      p.force = fv;
      add(fv, false);
    }
    if (!sum) sum = tape.constant(Matrix::Zero(1, tape.cols(in.u)));
    p.g = A.is_identity() ? *sum : tape.solve(A.emit(tape, params_, h), *sum, "A");
    return p;
  }

  Emitted emit(ad::Tape& tape, const ModelInputs& in) const override {
    const Parts p = emit_parts(tape, in);
    return {p.g, p.force};
  }

  /// Concrete kernels on the model grid.
  ConvKernel kernel_A() const { return A.kernel(params_, grid_.h); }
  ConvKernel kernel_S() const { return S.kernel(params_, grid_.h); }
  ConvKernel kernel_R() const { return R.kernel(params_, grid_.h); }

  /// Re-expresses the model on another grid with the same period. Network
  /// weights are kept, operator kernels are rebuilt for the new spacing and the
  /// correction shifts are re-tiled.
  PHNNModel regridded(const PeriodicGrid& g) const {
    if (g.P != grid_.P) fail(ErrorKind::invalid_grid, "regridding must keep the period");
    PHNNModel m(*this);
    if (g.M == grid_.M) return m;
    m.grid_ = g;
    m.vshift = Vector::Constant(g.M, vshift.size() ? vshift.mean() : 0.0);
    m.fshift = stencil_apply(m.kernel_R(), m.vshift);
    if (R.is_zero() || !dissipation) m.fshift.setZero();
    return m;
  }

  static Matrix tile(const Vector& v, Eigen::Index segments) {
    return v.transpose().replicate(1, segments);
  }

 private:
  std::string preset_;
  SystemName system_;
};

template <class Rng>
PHNNModel build_phnn(std::array<int, 4> k, const ModelWidths& widths, ForceDeps deps, SystemName system,
                     const PeriodicGrid& grid, Rng& rng) {
  return PHNNModel("custom", system, grid, architecture_from_sizes(k, deps), widths, rng);
}

template <class Rng>
PHNNModel build_phnn_preset(const std::string& preset, SystemName system, const PeriodicGrid& grid,
                            const ModelWidths& widths, Rng& rng) {
  return PHNNModel(canonical_preset(preset), system, grid, phnn_preset(preset, system), widths, rng);
}

/// Values of the model terms at one state.
struct PhnnTerms {
  Vector g;
  std::optional<Vector> grad_h, grad_v, force;
};

inline PhnnTerms phnn_terms(const PHNNModel& m, const Vector& u, const Vector& x, double t) {
  const int M = m.grid().M;
  if (u.size() != M || x.size() != M) fail(ErrorKind::shape, "state length does not match grid");
  ad::Tape tape(M);
  ModelInputs in{tape.input(1, M), tape.input(2, M), tape.input(1, M)};
  const auto p = m.emit_parts(tape, in);
  const std::vector<Matrix> inputs{u.transpose(), fourier_features(x, m.grid().P), Matrix::Constant(1, M, t)};
  tape.forward(m.params(), inputs);
  auto get = [&](const std::optional<ad::NodeId>& n) -> std::optional<Vector> {
    if (!n) return std::nullopt;
    return Vector(tape.value(*n).transpose());
  };
  return {tape.value(p.g).transpose(), get(p.grad_h), get(p.grad_v), get(p.force)};
}

inline Vector phnn_forward(const PHNNModel& m, const Vector& u, const Vector& x, double t) {
  return phnn_terms(m, u, x, t).g;
}

/// A^{-1} k4 f at one state; zero when the force term is inactive.
inline Vector force_contribution(const PHNNModel& m, const Vector& u, const Vector& x, double t) {
  const auto terms = phnn_terms(m, u, x, t);
  if (!terms.force) return Vector::Zero(m.grid().M);
  if (m.A.is_identity()) return *terms.force;
  return solve_circulant(m.kernel_A(), *terms.force);
}

/// Moves the constant grad V(0) from the dissipation term into the force.
/// A no-op for models without both terms.
inline PHNNModel apply_leakage_correction(const PHNNModel& m) {
  PHNNModel out(m);
  out.corrected = true;
  if (!m.force_active() || !m.dissipation_active()) return out;
  const int M = m.grid().M;
  const Vector zero = Vector::Zero(M);
  const Vector d = *phnn_terms(m, zero, m.grid().nodes(), 0.0).grad_v;
  if (d.isZero(0.0)) return out;
  out.vshift = m.vshift + d;
  out.fshift = m.fshift + stencil_apply(m.kernel_R(), d);
  return out;
}

inline PHNNModel ablate(const PHNNModel& m, bool drop_force, bool drop_dissipation) {
  if ((drop_force || drop_dissipation) && !m.corrected)
    fail(ErrorKind::usage, "apply the leakage correction before removing model terms");
  PHNNModel out(m);
  if (drop_force) out.k4 = 0;
  if (drop_dissipation) out.dissipation = false;
  return out;
}

}  // namespace phnn
