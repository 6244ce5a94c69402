#pragma once

// Ensemble evaluation, rollouts on refined grids, the one-step error identity
// and pointwise ensemble bands.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "phnn/io/text.hpp"
#include "phnn/model/baseline.hpp"
#include "phnn/model/phnn.hpp"
#include "phnn/train.hpp"

namespace phnn {

struct EvalProtocol {
  int n_eval_ics = 10;
  double t_eval = 1.0;
  double dt = 0.05;
  std::uint64_t seed = 0;
  int reference_substeps = 100;
  SchemeId reference_scheme = SchemeId::srk4;
  RolloutOptions rollout;
  int jobs = 1;

  void check() const {
    if (n_eval_ics < 1) fail(ErrorKind::config, "evaluation needs at least one initial state");
    step_count(t_eval, dt, "evaluation horizon");
  }
};

/// Evaluation states come from their own stream range, disjoint from training
/// and validation.
inline HeldOutSet evaluation_set(const SystemSpec& spec, const EvalProtocol& p) {
  p.check();
  return make_held_out(spec, p.n_eval_ics, p.t_eval, p.dt, p.seed, evaluation_streams, p.reference_substeps,
                       p.reference_scheme, p.jobs);
}

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) fail(ErrorKind::usage, "statistics of an empty list");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

struct MetricsRow {
  std::string model_type;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_model;  // mean MSE over the evaluation states
  int failed_rollouts = 0;        // (model, state) pairs scored +inf
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  void write_csv(std::ostream& os) const {
    os << "model_type,mean,std\n";
    for (const auto& r : rows) os << r.model_type << ',' << io::fmt(r.mean) << ',' << io::fmt(r.std) << '\n';
  }

  void write_raw_csv(std::ostream& os) const {
    os << "model_type,member,mse\n";
    for (const auto& r : rows)
      for (std::size_t i = 0; i < r.per_model.size(); ++i)
        os << r.model_type << ',' << i << ',' << io::fmt(r.per_model[i]) << '\n';
  }
};

/// Scores every model on the held-out states: per-model mean MSE at the
/// horizon, then mean and std across models.
inline MetricsRow evaluate_ensemble(const std::string& type, const std::vector<const DynamicsModel*>& models,
                                    const HeldOutSet& states, const RolloutOptions& opt, int jobs = 1) {
  if (models.empty()) fail(ErrorKind::usage, "evaluation needs at least one model");
  for (const auto* m : models)
    if (!(m->grid() == models.front()->grid())) fail(ErrorKind::config, "models in one ensemble must share a grid");
  const std::size_t n_ic = states.initial.size();
  std::vector<double> err(models.size() * n_ic);
  parallel_for(err.size(), jobs, [&](std::size_t k) {
    const auto* m = models[k / n_ic];
    const std::size_t i = k % n_ic;
    HeldOutSet one;
    one.dt = states.dt;
    one.steps = states.steps;
    one.initial = {states.initial[i]};
    one.target = {states.target[i]};
    err[k] = held_out_errors(*m, one, opt)[0];
  });
  MetricsRow row;
  row.model_type = type;
  for (std::size_t j = 0; j < models.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_ic; ++i) {
      const double e = err[j * n_ic + i];
      if (!std::isfinite(e)) ++row.failed_rollouts;
      s += e;
    }
    row.per_model.push_back(s / static_cast<double>(n_ic));
  }
  std::tie(row.mean, row.std) = mean_std(row.per_model);
  return row;
}

inline MetricsRow evaluate_ensemble(const std::string& type, const std::vector<const DynamicsModel*>& models,
                                    const SystemSpec& spec, const EvalProtocol& p) {
  return evaluate_ensemble(type, models, evaluation_set(spec, p), p.rollout, p.jobs);
}

// ---- refined-grid rollouts --------------------------------------------------

/// Rolls an informed composite model out on the grid of u0 (same period, any
/// M). Only systems whose learned integrals have no derivative terms carry over.
inline Trajectory regrid_rollout(const DynamicsModel& model, const SystemSpec& spec, const Vector& u0, double t_end,
                                 double dt, const RolloutOptions& opt = {}) {
  const auto* m = dynamic_cast<const PHNNModel*>(&model);
  if (!m) fail(ErrorKind::unsupported, "regridding needs a composite model; " + model.kind() + " has no grid-free structure");
  if (m->preset() != "informed") fail(ErrorKind::unsupported, "regridding needs the informed preset, got " + m->preset());
  bool ok = false;
  switch (spec.name) {
    case SystemName::bbm: ok = true; break;
    case SystemName::kdvburgers: ok = spec.param("nu") == 0.0; break;
    case SystemName::cahnhilliard: ok = spec.param("mu") == 0.0; break;
    case SystemName::peronamalik: ok = false; break;
  }
  if (!ok)
    fail(ErrorKind::unsupported,
         std::string("learned integrals of ") + to_string(spec.name) + " depend on derivatives; regridding unsupported");
  if (u0.size() < 3) fail(ErrorKind::invalid_grid, "regridding needs at least 3 points");
  const PHNNModel fine = m->regridded(make_grid(static_cast<int>(u0.size()), m->grid().P));
  return model_rollout(fine, u0, 0.0, dt, step_count(t_end, dt, "regrid rollout"), opt);
}

// ---- one-step error identity ------------------------------------------------

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap() const { return std::abs(lhs - rhs); }
};

/// u^{j+1} = u^j + dt g(u^j) and teacher-forced predictions
/// v^{j+1} = u^j + dt g~(u^j). Returns
///   lhs = (dt sum_{j<N} |g(u^j) - g~(u^j)|_p^p)^{1/p}
///   rhs = (1/dt) (sum_{1<=j<=N} dt |u^j - v^j|_p^p)^{1/p}.
inline IdentityCheck theorem_identity_check(const std::function<Vector(const Vector&)>& g,
                                            const std::function<Vector(const Vector&)>& g_tilde, const Vector& u0,
                                            int N, double dt, double p) {
  if (N < 1) fail(ErrorKind::config, "identity check needs N >= 1");
  if (!(dt > 0.0)) fail(ErrorKind::config, "identity check needs dt > 0");
  if (!(p >= 1.0)) fail(ErrorKind::config, "identity check needs p >= 1");
  auto pnorm_p = [p](const Vector& v) { return v.array().abs().pow(p).sum(); };
  double a = 0.0, b = 0.0;
  Vector u = u0;
  for (int j = 0; j < N; ++j) {
    const Vector gu = g(u), gt = g_tilde(u);
    a += pnorm_p(gu - gt);
    const Vector next = u + dt * gu;
    const Vector pred = u + dt * gt;
    b += dt * pnorm_p(next - pred);
    u = next;
  }
  return {std::pow(dt * a, 1.0 / p), std::pow(b, 1.0 / p) / dt};
}

// ---- ensemble bands ---------------------------------------------------------

struct Band {
  Vector mean, std, min, max;
};

/// Pointwise statistics over row vectors (one per member).
inline Band band_of(const std::vector<Vector>& members) {
  if (members.size() < 2) fail(ErrorKind::usage, "a band needs at least two members");
  const Eigen::Index M = members.front().size();
  Band b{Vector::Zero(M), Vector::Zero(M), members.front(), members.front()};
  for (const auto& v : members) {
    b.mean += v;
    b.min = b.min.cwiseMin(v);
    b.max = b.max.cwiseMax(v);
  }
  b.mean /= static_cast<double>(members.size());
  for (const auto& v : members) b.std.array() += (v - b.mean).array().square();
  b.std = (b.std / static_cast<double>(members.size())).cwiseSqrt();
  return b;
}

inline Band ensemble_band(const std::vector<const DynamicsModel*>& models, const Vector& u0, double t_eval, double dt,
                          const RolloutOptions& opt = {}, int jobs = 1) {
  if (models.size() < 2) fail(ErrorKind::usage, "a band needs at least two members");
  const int n = step_count(t_eval, dt, "band horizon");
  std::vector<Vector> finals(models.size());
  parallel_for(models.size(), jobs,
               [&](std::size_t k) { finals[k] = model_rollout(*models[k], u0, 0.0, dt, n, opt).final_state(); });
  return band_of(finals);
}

/// One figure panel: reference and member statistics per node.
struct PlotPanel {
  std::string name;
  Vector x, reference;
  Band band;

  void write_csv(std::ostream& os) const {
    const Eigen::Index M = x.size();
    if (reference.size() != M || band.mean.size() != M || band.std.size() != M || band.min.size() != M ||
        band.max.size() != M)
      fail(ErrorKind::shape, "plot panel columns differ in length");
    os << "x,reference,model_mean,model_std,model_min,model_max\n";
    for (Eigen::Index i = 0; i < M; ++i)
      os << io::fmt(x[i]) << ',' << io::fmt(reference[i]) << ',' << io::fmt(band.mean[i]) << ','
         << io::fmt(band.std[i]) << ',' << io::fmt(band.min[i]) << ',' << io::fmt(band.max[i]) << '\n';
  }
};

/// Band of a single member or several; a single member has zero width.
inline Band band_or_single(const std::vector<Vector>& members) {
  if (members.size() == 1) {
    const Vector& v = members.front();
    return {v, Vector::Zero(v.size()), v, v};
  }
  return band_of(members);
}

}  // namespace phnn
