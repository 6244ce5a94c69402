#pragma once

// Ground-truth discrete systems for the four benchmarks.
//
// Every system has the form  A u_t = S dH/du - R dV/du + f(u, x, t), with the
// discrete variational derivatives dH/du = grad H_p / h. Gradients of H_p and
// V_p are written out by hand so the zoo stays independent of the autodiff
// code it is used to check.

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "phnn/error.hpp"
#include "phnn/spatial.hpp"

namespace phnn {

enum class SystemName { kdvburgers, bbm, peronamalik, cahnhilliard };

inline const char* to_string(SystemName n) {
  switch (n) {
    case SystemName::kdvburgers: return "kdvburgers";
    case SystemName::bbm: return "bbm";
    case SystemName::peronamalik: return "peronamalik";
    case SystemName::cahnhilliard: return "cahnhilliard";
  }
  return "?";
}

inline SystemName system_from_string(const std::string& s) {
  if (s == "kdvburgers") return SystemName::kdvburgers;
  if (s == "bbm") return SystemName::bbm;
  if (s == "peronamalik") return SystemName::peronamalik;
  if (s == "cahnhilliard") return SystemName::cahnhilliard;
  fail(ErrorKind::config, "unknown system '" + s + "'");
}

inline double default_period(SystemName n) {
  switch (n) {
    case SystemName::kdvburgers: return 20.0;
    case SystemName::bbm: return 50.0;
    case SystemName::peronamalik: return 6.0;
    case SystemName::cahnhilliard: return 1.0;
  }
  return 1.0;
}

struct ForceDeps {
  bool u = false;
  bool x = false;
  bool t = false;

  bool any() const { return u || x || t; }
  bool operator==(const ForceDeps&) const = default;
};

struct SystemSpec {
  SystemName name = SystemName::kdvburgers;
  PeriodicGrid grid;
  std::map<std::string, double> params;
  ConvKernel A, S, R;
  ForceDeps force_deps;
  bool force_enabled = true;

  double param(const std::string& key) const {
    const auto it = params.find(key);
    if (it == params.end()) fail(ErrorKind::config, std::string("system ") + to_string(name) + " has no parameter '" + key + "'");
    return it->second;
  }
};

/// Builds a benchmark system. `overrides` may set physical parameters and
/// `force` (0 disables the external force).
inline SystemSpec system_spec(SystemName name, const PeriodicGrid& grid,
                              const std::map<std::string, double>& overrides = {}) {
  SystemSpec s;
  s.name = name;
  s.grid = grid;
  const double h = grid.h;
  switch (name) {
    case SystemName::kdvburgers:
      s.params = {{"eta", 6.0}, {"nu", 0.3}, {"gamma", 1.0}};
      s.A = ConvKernel::identity();
      s.S = ConvKernel::central_difference(h);
      s.R = ConvKernel::identity();
      s.force_deps = {false, true, true};
      break;
    case SystemName::bbm: {
      const double c = 1.0 / (h * h);
      s.A = ConvKernel({-c, 1.0 + 2.0 * c, -c}, KernelConstraint::symmetric);
      s.S = ConvKernel::central_difference(h);
      s.R = ConvKernel::zero();
      s.force_deps = {true, false, true};
      break;
    }
    case SystemName::peronamalik:
      s.A = ConvKernel::identity();
      s.S = ConvKernel::zero();
      s.R = ConvKernel::identity();
      s.force_deps = {false, true, false};
      break;
    case SystemName::cahnhilliard: {
      s.params = {{"nu", -1.0}, {"alpha", 1.0}, {"mu", -1.0 / 1000.0}};
      const double c = 1.0 / (h * h);
      s.A = ConvKernel::identity();
      s.S = ConvKernel::zero();
      s.R = ConvKernel({-c, 2.0 * c, -c}, KernelConstraint::symmetric);
      s.force_deps = {true, true, false};
      break;
    }
  }
  for (const auto& [key, value] : overrides) {
    if (key == "force") {
      s.force_enabled = value != 0.0;
      continue;
    }
    if (!s.params.contains(key))
      fail(ErrorKind::config, std::string("system ") + to_string(name) + " has no parameter '" + key + "'");
    s.params[key] = value;
  }
  return s;
}

namespace detail {
inline void check_state(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  if (u.size() != s.grid.M)
    fail(ErrorKind::shape, "state length " + std::to_string(u.size()) + " does not match M=" + std::to_string(s.grid.M));
}
// delta_f u_i = (u_{i+1} - u_i) / h
inline Vector forward_difference(const Eigen::Ref<const Vector>& u, double h) {
  const Eigen::Index M = u.size();
  Vector d(M);
  for (Eigen::Index i = 0; i < M; ++i) d[i] = (u[(i + 1) % M] - u[i]) / h;
  return d;
}
// delta_c^2 u_i = (u_{i+1} - 2 u_i + u_{i-1}) / h^2
inline Vector second_difference(const Eigen::Ref<const Vector>& u, double h) {
  const Eigen::Index M = u.size();
  Vector d(M);
  for (Eigen::Index i = 0; i < M; ++i) d[i] = (u[(i + 1) % M] - 2.0 * u[i] + u[(i + M - 1) % M]) / (h * h);
  return d;
}
}  // namespace detail

/// H_p(u).
inline double discrete_hamiltonian(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  detail::check_state(s, u);
  const double h = s.grid.h;
  switch (s.name) {
    case SystemName::kdvburgers: {
      const double eta = s.param("eta"), gamma = s.param("gamma");
      const Vector d = detail::forward_difference(u, h);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i)
        acc += eta / 6.0 * u[i] * u[i] * u[i] + gamma * gamma / 2.0 * d[i] * d[i];
      return -h * acc;
    }
    case SystemName::bbm: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) acc += u[i] * u[i] + u[i] * u[i] * u[i] / 3.0;
      return h / 2.0 * acc;
    }
    default: return 0.0;
  }
}

/// grad_u H_p(u).
inline Vector hamiltonian_gradient(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  detail::check_state(s, u);
  const double h = s.grid.h;
  switch (s.name) {
    case SystemName::kdvburgers: {
      const double eta = s.param("eta"), gamma = s.param("gamma");
      const Vector d2 = detail::second_difference(u, h);
      return -h * (eta / 2.0 * u.array().square().matrix() - gamma * gamma * d2);
    }
    case SystemName::bbm: return h * (u + 0.5 * u.array().square().matrix());
    default: return Vector::Zero(u.size());
  }
}

/// V_p(u).
inline double discrete_lyapunov(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  detail::check_state(s, u);
  const double h = s.grid.h;
  const Vector d = detail::forward_difference(u, h);
  switch (s.name) {
    case SystemName::kdvburgers: return s.param("nu") / 2.0 * h * d.squaredNorm();
    case SystemName::peronamalik: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) acc += std::log1p(d[i] * d[i]);
      return h / 2.0 * acc;
    }
    case SystemName::cahnhilliard: {
      const double nu = s.param("nu"), alpha = s.param("alpha"), mu = s.param("mu");
      double acc = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double u2 = u[i] * u[i];
        acc += nu * u2 + alpha / 2.0 * u2 * u2 - mu * d[i] * d[i];
      }
      return h / 2.0 * acc;
    }
    default: return 0.0;
  }
}

/// grad_u V_p(u).
inline Vector lyapunov_gradient(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  detail::check_state(s, u);
  const double h = s.grid.h;
  const Eigen::Index M = u.size();
  switch (s.name) {
    case SystemName::kdvburgers: return -h * s.param("nu") * detail::second_difference(u, h);
    case SystemName::peronamalik: {
      // V_p = h/2 sum ln(1 + d_i^2):  dV/du_k = phi(d_{k-1}) - phi(d_k), phi(s) = s / (1 + s^2)
      const Vector d = detail::forward_difference(u, h);
      Vector g(M);
      for (Eigen::Index k = 0; k < M; ++k) {
        const double a = d[(k + M - 1) % M], b = d[k];
        g[k] = a / (1.0 + a * a) - b / (1.0 + b * b);
      }
      return g;
    }
    case SystemName::cahnhilliard: {
      const double nu = s.param("nu"), alpha = s.param("alpha"), mu = s.param("mu");
      return h * (nu * u + alpha * u.array().cube().matrix() + mu * detail::second_difference(u, h));
    }
    default: return Vector::Zero(M);
  }
}

/// Nodewise external force; zero when the spec has the force disabled.
inline Vector external_force(const SystemSpec& s, const Eigen::Ref<const Vector>& u,
                             const Eigen::Ref<const Vector>& x, double t) {
  detail::check_state(s, u);
  if (x.size() != u.size()) fail(ErrorKind::shape, "force node coordinates must have length M");
  const Eigen::Index M = u.size();
  Vector f = Vector::Zero(M);
  if (!s.force_enabled) return f;
  const double P = s.grid.P;
  constexpr double pi = std::numbers::pi;
  for (Eigen::Index i = 0; i < M; ++i) {
    switch (s.name) {
      case SystemName::kdvburgers: f[i] = 0.6 * std::sin(4.0 * pi * x[i] / P - t); break;
      case SystemName::bbm: f[i] = 0.1 * std::sin(t) * u[i]; break;
      case SystemName::peronamalik: f[i] = 10.0 * std::sin(4.0 * pi * x[i] / P); break;
      case SystemName::cahnhilliard: f[i] = (x[i] > 0.3 && x[i] < 0.7) ? 30.0 * u[i] : 0.0; break;
    }
  }
  return f;
}

/// Right-hand side of the semi-discrete system with a cached A factorization.
class GroundTruth {
 public:
  explicit GroundTruth(SystemSpec spec) : spec_(std::move(spec)), x_(spec_.grid.nodes()) {
    if (spec_.A.constraint() != KernelConstraint::identity) solver_.emplace(spec_.A, spec_.grid.M);
  }

  const SystemSpec& spec() const { return spec_; }

  Vector operator()(const Eigen::Ref<const Vector>& u, double t) const {
    detail::check_state(spec_, u);
    const double h = spec_.grid.h;
    Vector rhs = external_force(spec_, u, x_, t);
    if (spec_.S.constraint() != KernelConstraint::zero)
      rhs += stencil_apply(spec_.S, hamiltonian_gradient(spec_, u) / h);
    if (spec_.R.constraint() != KernelConstraint::zero)
      rhs -= stencil_apply(spec_.R, lyapunov_gradient(spec_, u) / h);
    if (solver_) return solver_->solve(rhs);
    return rhs;
  }

 private:
  SystemSpec spec_;
  Vector x_;
  std::optional<CirculantSolver> solver_;
};

inline Vector ground_truth_rhs(const SystemSpec& s, const Eigen::Ref<const Vector>& u, double t) {
  return GroundTruth(s)(u, t);
}

// ---- initial conditions ---------------------------------------------------

namespace detail {
inline double centered_mod(double x, double shift, double P) {
  double r = std::fmod(x + P / 2.0 - shift, P);
  if (r < 0) r += P;
  return r - P / 2.0;
}
inline double sech2(double z) {
  const double c = std::cosh(z);
  return 1.0 / (c * c);
}
}  // namespace detail

/// Two periodic sech^2 waves of height 2 c_l^2 centred at d_l P.
inline Vector kdv_profile(const PeriodicGrid& g, double c1, double c2, double d1, double d2) {
  Vector u(g.M);
  for (int i = 0; i < g.M; ++i) {
    const double x = g.x(i);
    u[i] = 2.0 * (c1 * c1 * detail::sech2(c1 * detail::centered_mod(x, d1 * g.P, g.P)) +
                  c2 * c2 * detail::sech2(c2 * detail::centered_mod(x, d2 * g.P, g.P)));
  }
  return u;
}

/// Two periodic BBM solitary waves of amplitude 3 (c_l - 1).
inline Vector bbm_profile(const PeriodicGrid& g, double c1, double c2, double d1, double d2) {
  Vector u(g.M);
  auto wave = [&](double x, double c, double d) {
    return 3.0 * (c - 1.0) * detail::sech2(0.5 * std::sqrt(1.0 - 1.0 / c) * detail::centered_mod(x, d * g.P, g.P));
  };
  for (int i = 0; i < g.M; ++i) u[i] = wave(g.x(i), c1, d1) + wave(g.x(i), c2, d2);
  return u;
}

struct PeronaMalikIC {
  double a = 1, b = 30, c = 0.15, d1 = 1, d2 = 2, h1 = 1, h2 = 1, r = 2, s = 15;
};

/// Piecewise-flat image with two steps plus oscillatory noise.
inline Vector peronamalik_profile(const PeriodicGrid& g, const PeronaMalikIC& p) {
  Vector u(g.M);
  constexpr double pi = std::numbers::pi;
  const double P = g.P;
  for (int i = 0; i < g.M; ++i) {
    const double x = g.x(i);
    double v = p.a;
    v -= p.h1 * (std::tanh(p.b * (x - p.d1)) - std::tanh(p.b * (x - P + p.d1)));
    v -= p.h2 * (std::tanh(p.b * (x - p.d2)) - std::tanh(p.b * (x - P + p.d2)));
    const double sr = std::sin(p.r * pi * x);
    v += p.c * sr * sr * std::sin(p.s * pi * x);
    u[i] = v;
  }
  return u;
}

struct CahnHilliardIC {
  double a1 = 0, a2 = 0, b1 = 0, b2 = 0, c1 = 1, c2 = 1, d1 = 1, d2 = 1;
};

inline Vector cahnhilliard_profile(const PeriodicGrid& g, const CahnHilliardIC& p) {
  Vector u(g.M);
  const double k = 2.0 * std::numbers::pi / g.P;
  for (int i = 0; i < g.M; ++i) {
    const double x = g.x(i);
    u[i] = p.a1 * std::sin(p.c1 * k * x) + p.b1 * std::cos(p.d1 * k * x) + p.a2 * std::sin(p.c2 * k * x) +
           p.b2 * std::cos(p.d2 * k * x);
  }
  return u;
}

/// Samples one initial state from the benchmark's parameter distributions.
template <class Rng>
Vector sample_initial_condition(const SystemSpec& s, Rng& rng) {
  auto U = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  switch (s.name) {
    case SystemName::kdvburgers: {
      const double c1 = U(0.5, 2.0), c2 = U(0.5, 2.0), d1 = U(0.0, 1.0), d2 = U(0.0, 1.0);
      return kdv_profile(s.grid, c1, c2, d1, d2);
    }
    case SystemName::bbm: {
      const double c1 = U(1.0, 4.0), c2 = U(1.0, 4.0), d1 = U(0.0, 1.0), d2 = U(0.0, 1.0);
      return bbm_profile(s.grid, c1, c2, d1, d2);
    }
    case SystemName::peronamalik: {
      PeronaMalikIC p;
      p.a = U(-5.0, 5.0);
      p.b = U(20.0, 40.0);
      p.c = U(0.05, 0.15);
      p.d1 = U(0.3, 3.0);
      p.d2 = U(0.3, 3.0);
      p.h1 = U(0.5, 1.5);
      p.h2 = U(0.5, 1.5);
      p.r = U(0.5, 3.0);
      p.s = U(10.0, 20.0);
      return peronamalik_profile(s.grid, p);
    }
    case SystemName::cahnhilliard: {
      CahnHilliardIC p;
      p.a1 = U(0.0, 0.2);
      p.a2 = U(0.0, 0.2);
      p.b1 = U(0.0, 0.05);
      p.b2 = U(0.0, 0.05);
      p.c1 = U(1.0, 6.0);
      p.c2 = U(1.0, 6.0);
      p.d1 = U(1.0, 6.0);
      p.d2 = U(1.0, 6.0);
      return cahnhilliard_profile(s.grid, p);
    }
  }
  return Vector::Zero(s.grid.M);
}

}  // namespace phnn
