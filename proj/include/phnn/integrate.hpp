#pragma once

// Mono-implicit residuals, fixed-point implicit stepping, rollouts and the
// reference data generator.
//
// A right-hand side is any callable g(const Vector& u, double t) -> Vector.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "phnn/error.hpp"
#include "phnn/parallel.hpp"
#include "phnn/pdezoo.hpp"
#include "phnn/random.hpp"
#include "phnn/spatial.hpp"

namespace phnn {

enum class SchemeId { midpoint, srk4 };

inline const char* to_string(SchemeId s) { return s == SchemeId::midpoint ? "midpoint" : "srk4"; }

inline SchemeId scheme_from_string(const std::string& s) {
  if (s == "midpoint") return SchemeId::midpoint;
  if (s == "srk4") return SchemeId::srk4;
  fail(ErrorKind::config, "unknown integrator '" + s + "' (expected midpoint or srk4)");
}

/// (u1 - u0)/dt - g((u0 + u1)/2, t + dt/2)
template <class G>
Vector midpoint_residual(G&& g, const Vector& u0, const Vector& u1, double t, double dt) {
  const Vector mid = 0.5 * (u0 + u1);
  return (u1 - u0) / dt - g(mid, t + 0.5 * dt);
}

/// (u1 - u0)/dt - [g0 + 4 g(ub) + g1]/6,  ub = (u0 + u1)/2 - dt/8 (g1 - g0)
template <class G>
Vector srk4_residual(G&& g, const Vector& u0, const Vector& u1, double t, double dt) {
  const Vector g0 = g(u0, t);
  const Vector g1 = g(u1, t + dt);
  const Vector ub = 0.5 * (u0 + u1) - dt / 8.0 * (g1 - g0);
  const Vector gm = g(ub, t + 0.5 * dt);
  return (u1 - u0) / dt - (g0 + 4.0 * gm + g1) / 6.0;
}

template <class G>
Vector scheme_residual(SchemeId scheme, G&& g, const Vector& u0, const Vector& u1, double t, double dt) {
  return scheme == SchemeId::midpoint ? midpoint_residual(g, u0, u1, t, dt) : srk4_residual(g, u0, u1, t, dt);
}

struct StepOptions {
  double tol = 1e-10;
  int max_iter = 200;
  bool newton = false;  // fall back to Newton iterations when the fixed point fails
};

/// Evaluates g column by column; the default batch evaluator.
template <class G>
struct ColumnwiseBatch {
  G& g;
  Matrix operator()(const Matrix& U, double t) const {
    Matrix out(U.rows(), U.cols());
    for (Eigen::Index k = 0; k < U.cols(); ++k) out.col(k) = g(Vector(U.col(k)), t);
    return out;
  }
};

namespace detail {

/// dt * residual(u, V_k) for every column V_k; gb evaluates g on columns.
template <class G, class GB>
Matrix residual_increments(SchemeId scheme, G& g, GB& gb, const Vector& u, const Matrix& V, double t, double dt) {
  const Matrix U = u.replicate(1, V.cols());
  if (scheme == SchemeId::midpoint) return V - U - dt * gb(0.5 * (U + V), t + 0.5 * dt);
  const Vector g0 = g(u, t);
  const Matrix G0 = g0.replicate(1, V.cols());
  const Matrix G1 = gb(V, t + dt);
  const Matrix UB = 0.5 * (U + V) - dt / 8.0 * (G1 - G0);
  return V - U - dt / 6.0 * (G0 + 4.0 * gb(UB, t + 0.5 * dt) + G1);
}

/// Newton iterations on F(u1) = dt * residual(u, u1) from the guess v, with a
/// finite-difference Jacobian refreshed when the contraction stalls and step
/// halving on the squared residual. Returns false when no root was reached.
template <class G, class GB>
bool newton_solve(G& g, GB& gb, const Vector& u, Vector& v, double t, double dt, SchemeId scheme,
                  const StepOptions& opt, double& norm) {
  const Eigen::Index M = u.size();
  auto F = [&](const Vector& w) { return dt * scheme_residual(scheme, g, u, w, t, dt); };
  Vector f = F(v);
  double merit = f.squaredNorm();
  Eigen::PartialPivLU<Matrix> lu;
  bool fresh = false, have = false;
  for (int it = 0; it < opt.max_iter && std::isfinite(merit); ++it) {
    if (f.lpNorm<Eigen::Infinity>() <= opt.tol) break;
    if (!have) {
      const double eps = 1e-7 * std::max(1.0, v.lpNorm<Eigen::Infinity>());
      const Matrix V = v.replicate(1, M) + eps * Matrix::Identity(M, M);
      const Matrix J = (residual_increments(scheme, g, gb, u, V, t, dt) - f.replicate(1, M)) / eps;
      lu.compute(J);
      fresh = have = true;
    }
    const Vector d = lu.solve(f);
    bool accepted = false;
    for (double lam = 1.0; lam >= 1.0 / 64.0; lam *= 0.5) {
      const Vector w = v - lam * d;
      const Vector fw = F(w);
      const double mw = fw.squaredNorm();
      if (mw < merit) {
        if (mw > 0.25 * merit) have = false;
        v = w;
        f = fw;
        merit = mw;
        accepted = true;
        fresh = false;
        break;
      }
    }
    if (!accepted) {
      if (fresh) break;
      have = false;
    }
  }
  norm = f.lpNorm<Eigen::Infinity>();
  return norm <= opt.tol;
}

/// Newton from u1 = u; on failure the guess comes from two half steps (solved
/// the same way, at most four levels deep). The result always solves the full step.
template <class G, class GB>
Vector newton_step(G& g, GB& gb, const Vector& u, double t, double dt, SchemeId scheme, const StepOptions& opt,
                   int depth = 0) {
  Vector v = u;
  double norm = 0.0;
  if (newton_solve(g, gb, u, v, t, dt, scheme, opt, norm)) return v;
  if (depth < 4) {
    try {
      const Vector half = newton_step(g, gb, u, t, 0.5 * dt, scheme, opt, depth + 1);
      v = newton_step(g, gb, half, t + 0.5 * dt, 0.5 * dt, scheme, opt, depth + 1);
      double n2 = 0.0;
      if (newton_solve(g, gb, u, v, t, dt, scheme, opt, n2)) return v;
      norm = std::min(norm, n2);
    } catch (const NonConvergenceError&) {
    }
  }
  throw NonConvergenceError("Newton iteration did not converge (residual " + std::to_string(norm) + ")", norm);
}

}  // namespace detail

/// Solves residual(u, u1) = 0 for u1 by the fixed point u1 <- u1 - w dt residual,
/// starting at u1 = u with w = 1 and restarting at w = 1/2, 1/4 on divergence.
/// Converged when the increment dt * residual is below tol in max norm.
/// With opt.newton a failed fixed point hands over to Newton iterations; gb
/// evaluates g on the columns of a matrix (used for the Jacobian).
template <class G, class GB>
Vector implicit_step(G&& g, const Vector& u, double t, double dt, SchemeId scheme, StepOptions opt, GB&& gb) {
  if (!(opt.tol > 0.0)) fail(ErrorKind::config, "implicit step tolerance must be positive");
  if (opt.max_iter < 1) fail(ErrorKind::config, "implicit step needs max_iter >= 1");
  double last = std::numeric_limits<double>::infinity();
  for (const double damping : {1.0, 0.5, 0.25}) {
    Vector u1 = u;
    double first = -1.0, prev = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (int it = 0; it < opt.max_iter; ++it) {
      const Vector inc = dt * scheme_residual(scheme, g, u, u1, t, dt);
      const double norm = inc.lpNorm<Eigen::Infinity>();
      last = norm;
      if (!std::isfinite(norm)) break;
      if (norm <= opt.tol) return u1;
      if (first < 0.0) first = norm;
      rising = norm > prev ? rising + 1 : 0;
      if (rising >= 3 || norm > 1e6 * first) break;
      prev = norm;
      u1 -= damping * inc;
    }
  }
  if (opt.newton) return detail::newton_step(g, gb, u, t, dt, scheme, opt);
  throw NonConvergenceError("implicit step did not converge (residual " + std::to_string(last) + ")", last);
}

template <class G>
Vector implicit_step(G&& g, const Vector& u, double t, double dt, SchemeId scheme, StepOptions opt = {}) {
  ColumnwiseBatch<std::remove_reference_t<G>> gb{g};
  return implicit_step(g, u, t, dt, scheme, opt, gb);
}

struct Trajectory {
  Vector times;
  Matrix states;  // one row per time

  Eigen::Index steps() const { return times.size() - 1; }
  Vector state(Eigen::Index j) const { return states.row(j).transpose(); }
  Vector final_state() const { return state(states.rows() - 1); }
};

/// n macro steps of size dt, each split into `substeps` implicit steps; records macro states.
template <class G, class GB>
Trajectory rollout(G&& g, const Vector& u0, double t0, double dt, int n, SchemeId scheme, int substeps,
                   StepOptions opt, GB&& gb) {
  if (n < 0) fail(ErrorKind::config, "rollout needs n >= 0");
  if (substeps < 1) fail(ErrorKind::config, "rollout needs substeps >= 1");
  Trajectory tr;
  tr.times.resize(n + 1);
  tr.states.resize(n + 1, u0.size());
  tr.times[0] = t0;
  tr.states.row(0) = u0.transpose();
  Vector u = u0;
  const double h = dt / substeps;
  for (int j = 0; j < n; ++j) {
    const double tj = t0 + j * dt;
    for (int s = 0; s < substeps; ++s) {
      try {
        u = implicit_step(g, u, tj + s * h, h, scheme, opt, gb);
      } catch (const NonConvergenceError& e) {
        throw NonConvergenceError("rollout step " + std::to_string(j) + ": " + e.what(), e.residual());
      }
    }
    tr.times[j + 1] = t0 + (j + 1) * dt;
    tr.states.row(j + 1) = u.transpose();
  }
  return tr;
}

template <class G>
Trajectory rollout(G&& g, const Vector& u0, double t0, double dt, int n, SchemeId scheme, int substeps = 1,
                   StepOptions opt = {}) {
  ColumnwiseBatch<std::remove_reference_t<G>> gb{g};
  return rollout(g, u0, t0, dt, n, scheme, substeps, opt, gb);
}

inline int step_count(double T, double dt, const std::string& what) {
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::config, what + ": time step must be positive");
  if (!(T > 0.0)) fail(ErrorKind::config, what + ": horizon must be positive");
  const long n = std::lround(T / dt);
  if (n < 1 || std::abs(n * dt - T) > 1e-9 * T)
    fail(ErrorKind::config, what + ": horizon " + std::to_string(T) + " is not a multiple of dt " + std::to_string(dt));
  return static_cast<int>(n);
}

/// Reference trajectory of the ground-truth system; fourth-order substeps by
/// default, Newton iterations where the fixed point fails.
inline Trajectory reference_rollout(const GroundTruth& truth, const Vector& u0, double t0, double dt, int n,
                                    int substeps, SchemeId scheme = SchemeId::srk4) {
  StepOptions opt;
  opt.newton = true;
  return rollout([&truth](const Vector& u, double t) { return truth(u, t); }, u0, t0, dt, n, scheme, substeps, opt);
}

struct Dataset {
  SystemName system = SystemName::kdvburgers;
  PeriodicGrid grid;
  double dt = 0.0;
  std::uint64_t seed = 0;
  int substeps = 1;
  SchemeId scheme = SchemeId::srk4;
  std::vector<Trajectory> trajectories;

  std::size_t n_states() const {
    std::size_t n = 0;
    for (const auto& tr : trajectories) n += static_cast<std::size_t>(tr.times.size());
    return n;
  }
  std::size_t n_pairs() const {
    std::size_t n = 0;
    for (const auto& tr : trajectories) n += static_cast<std::size_t>(tr.steps());
    return n;
  }

  /// Consecutive pairs as columns: u0, u1 are [M x N], t has length N.
  struct Pairs {
    Matrix u0, u1;
    Vector t;
  };

  Pairs pairs() const {
    Pairs p;
    const auto N = static_cast<Eigen::Index>(n_pairs());
    p.u0.resize(grid.M, N);
    p.u1.resize(grid.M, N);
    p.t.resize(N);
    Eigen::Index c = 0;
    for (const auto& tr : trajectories)
      for (Eigen::Index j = 0; j < tr.steps(); ++j, ++c) {
        p.u0.col(c) = tr.states.row(j).transpose();
        p.u1.col(c) = tr.states.row(j + 1).transpose();
        p.t[c] = tr.times[j];
      }
    return p;
  }
};

/// Integrates n_traj sampled initial states to T and keeps states every dt_sample.
/// Trajectory i draws its initial state from the stream derive_seed(seed, i).
inline Dataset generate_dataset(const SystemSpec& spec, int n_traj, double dt_sample, double T, std::uint64_t seed,
                                int substeps, int jobs = 1, SchemeId scheme = SchemeId::srk4) {
  if (n_traj < 1) fail(ErrorKind::config, "n_traj must be at least 1");
  if (substeps < 1) fail(ErrorKind::config, "substeps must be at least 1");
  const int n = step_count(T, dt_sample, "dataset");
  Dataset d;
  d.system = spec.name;
  d.grid = spec.grid;
  d.dt = dt_sample;
  d.seed = seed;
  d.substeps = substeps;
  d.scheme = scheme;
  d.trajectories.resize(n_traj);
  const GroundTruth truth(spec);
  parallel_for(static_cast<std::size_t>(n_traj), jobs, [&](std::size_t i) {
    Rng rng = stream(seed, i);
    const Vector u0 = sample_initial_condition(spec, rng);
    try {
      d.trajectories[i] = reference_rollout(truth, u0, 0.0, dt_sample, n, substeps, scheme);
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError("trajectory " + std::to_string(i) + ": " + e.what(), e.residual());
    }
  });
  return d;
}

}  // namespace phnn
