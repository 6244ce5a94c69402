#pragma once

// Residual losses of the mono-implicit schemes, the Adam optimizer, held-out
// validation and the training loop with best-snapshot selection.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phnn/integrate.hpp"
#include "phnn/io/text.hpp"
#include "phnn/model/phnn.hpp"
#include "phnn/random.hpp"

namespace phnn {

// ---- loss -------------------------------------------------------------------

/// Loss graph for batches of B pairs, built once and re-evaluated:
/// mean_sq(residual) + penalty * mean|f|.
class LossGraph {
 public:
  LossGraph(const DynamicsModel& model, Eigen::Index B, double dt, SchemeId scheme, double penalty = 0.0)
      : model_(&model), B_(B), dt_(dt), tape_(model.grid().M) {
    if (B < 1) fail(ErrorKind::usage, "loss batch must not be empty");
    if (!(dt != 0.0) || !std::isfinite(dt)) fail(ErrorKind::config, "loss needs a finite nonzero dt");
    const Eigen::Index M = model.grid().M, N = M * B;
    u0_ = tape_.input(1, N);
    u1_ = tape_.input(1, N);
    const auto xf = tape_.input(2, N);
    const auto t0 = tape_.input(1, N), tm = tape_.input(1, N), t1 = tape_.input(1, N);
    const auto diff = tape_.scale(tape_.sub(u1_, u0_), 1.0 / dt);
    const auto mid = tape_.scale(tape_.add(u0_, u1_), 0.5);
    ad::NodeId res;
    std::optional<ad::NodeId> force;
    if (scheme == SchemeId::midpoint) {
      const auto e = model.emit(tape_, {mid, xf, tm});
      res = tape_.sub(diff, e.g);
      force = e.force;
    } else {
      const auto e0 = model.emit(tape_, {u0_, xf, t0});
      const auto e1 = model.emit(tape_, {u1_, xf, t1});
      const auto ub = tape_.sub(mid, tape_.scale(tape_.sub(e1.g, e0.g), dt / 8.0));
      const auto em = model.emit(tape_, {ub, xf, tm});
      const auto avg = tape_.scale(tape_.add(tape_.add(e0.g, e1.g), tape_.scale(em.g, 4.0)), 1.0 / 6.0);
      res = tape_.sub(diff, avg);
      force = em.force;
    }
    loss_ = tape_.mean_square(res);
    if (penalty != 0.0 && force) loss_ = tape_.add(loss_, tape_.scale(tape_.mean_abs(*force), penalty));
    inputs_.resize(6);
    inputs_[2] = fourier_features(model.grid().nodes(), model.grid().P, B);
  }

  Eigen::Index batch() const { return B_; }

  /// U0, U1: [M x B] states, t: start times [B].
  double value(const Matrix& U0, const Matrix& U1, const Vector& t) {
    bind(U0, U1, t);
    tape_.forward(model_->params(), inputs_);
    return tape_.value(loss_)(0, 0);
  }

  /// Loss value; parameter gradient written to `grad` (flat store layout).
  double gradient(const Matrix& U0, const Matrix& U1, const Vector& t, std::vector<double>& grad) {
    const double v = value(U0, U1, t);
    grad = tape_.backward(loss_).params;
    return v;
  }

 private:
  void bind(const Matrix& U0, const Matrix& U1, const Vector& t) {
    const Eigen::Index M = model_->grid().M;
    if (U0.rows() != M || U1.rows() != M || U0.cols() != B_ || U1.cols() != B_ || t.size() != B_)
      fail(ErrorKind::shape, "loss batch shape does not match the graph");
    inputs_[0] = Eigen::Map<const Matrix>(U0.data(), 1, M * B_);
    inputs_[1] = Eigen::Map<const Matrix>(U1.data(), 1, M * B_);
    for (int k = 0; k < 3; ++k) inputs_[3 + k].resize(1, M * B_);
    for (Eigen::Index b = 0; b < B_; ++b) {
      inputs_[3].middleCols(b * M, M).setConstant(t[b]);
      inputs_[4].middleCols(b * M, M).setConstant(t[b] + 0.5 * dt_);
      inputs_[5].middleCols(b * M, M).setConstant(t[b] + dt_);
    }
  }

  const DynamicsModel* model_;
  Eigen::Index B_;
  double dt_;
  ad::Tape tape_;
  ad::NodeId u0_, u1_, loss_;
  std::vector<Matrix> inputs_;
};

inline double batch_loss(const DynamicsModel& model, const Matrix& U0, const Matrix& U1, const Vector& t, double dt,
                         SchemeId scheme, double penalty = 0.0) {
  if (U0.cols() == 0) fail(ErrorKind::usage, "loss batch must not be empty");
  LossGraph g(model, U0.cols(), dt, scheme, penalty);
  return g.value(U0, U1, t);
}

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> p, const std::vector<double>& g) {
    if (p.size() != m_.size() || g.size() != m_.size()) fail(ErrorKind::shape, "optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_), c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

// ---- rollouts of learned models and held-out scoring ------------------------

struct RolloutOptions {
  SchemeId scheme = SchemeId::midpoint;
  int substeps = 1;
  StepOptions step{1e-10, 200, true};
};

/// Model trajectory at the data interval dt.
inline Trajectory model_rollout(const DynamicsModel& m, const Vector& u0, double t0, double dt, int n,
                                const RolloutOptions& opt = {}) {
  ModelRhs rhs(m);
  if (!opt.step.newton) return rollout(rhs, u0, t0, dt, n, opt.scheme, opt.substeps, opt.step);
  // Jacobian columns are evaluated as one batch of M states
  ModelRhs wide(m, m.grid().M);
  auto gb = [&wide](const Matrix& U, double t) -> Matrix {
    if (U.cols() == wide.segments()) return wide.batch(U, Vector::Constant(U.cols(), t));
    fail(ErrorKind::shape, "batch width does not match the Jacobian evaluator");
  };
  return rollout(rhs, u0, t0, dt, n, opt.scheme, opt.substeps, opt.step, gb);
}

inline double nodewise_mse(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / a.size(); }

/// Initial states with reference states at t_end, from held-out random streams.
struct HeldOutSet {
  std::vector<Vector> initial, target;
  double dt = 0.0;
  int steps = 0;

  bool empty() const { return initial.empty(); }
};

inline HeldOutSet make_held_out(const SystemSpec& spec, int n, double t_end, double dt, std::uint64_t seed,
                                std::uint64_t stream_base, int substeps, SchemeId scheme = SchemeId::srk4,
                                int jobs = 1) {
  if (n < 1) fail(ErrorKind::config, "held-out set needs at least one initial state");
  HeldOutSet s;
  s.dt = dt;
  s.steps = step_count(t_end, dt, "held-out horizon");
  s.initial.resize(n);
  s.target.resize(n);
  const GroundTruth truth(spec);
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
    Rng rng = stream(seed, stream_base + i);
    s.initial[i] = sample_initial_condition(spec, rng);
    s.target[i] = reference_rollout(truth, s.initial[i], 0.0, dt, s.steps, substeps, scheme).final_state();
  });
  return s;
}

/// Per-state MSE at the horizon; +inf when the model rollout fails.
inline std::vector<double> held_out_errors(const DynamicsModel& m, const HeldOutSet& s, const RolloutOptions& opt,
                                           int jobs = 1) {
  if (s.empty()) fail(ErrorKind::usage, "validation needs at least one initial state");
  std::vector<double> err(s.initial.size());
  parallel_for(s.initial.size(), jobs, [&](std::size_t i) {
    try {
      const double e = nodewise_mse(model_rollout(m, s.initial[i], 0.0, s.dt, s.steps, opt).final_state(), s.target[i]);
      err[i] = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    } catch (const NonConvergenceError&) {
      err[i] = std::numeric_limits<double>::infinity();
    }
  });
  return err;
}

inline double validate(const DynamicsModel& m, const HeldOutSet& s, const RolloutOptions& opt = {}, int jobs = 1) {
  const auto err = held_out_errors(m, s, opt, jobs);
  return std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
}

// ---- training loop ------------------------------------------------------------

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 32;
  AdamConfig adam;
  SchemeId scheme = SchemeId::midpoint;
  int n_val = 5;
  double t_val = 1.0;
  double val_dt = 0.0;  // 0: use the data step
  int val_every = 1;
  double force_penalty = 0.0;
  std::uint64_t seed = 0;
  RolloutOptions rollout;
  int jobs = 1;

  void check() const {
    if (epochs < 1) fail(ErrorKind::config, "epochs must be at least 1");
    if (batch_size < 1) fail(ErrorKind::config, "batch_size must be at least 1");
    if (val_every < 1) fail(ErrorKind::config, "val_every must be at least 1");
    if (val_dt < 0.0) fail(ErrorKind::config, "val_dt must be non-negative");
    if (!(adam.learning_rate > 0.0)) fail(ErrorKind::config, "learning rate must be positive");
    if (force_penalty < 0.0) fail(ErrorKind::config, "force penalty must be non-negative");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_mse;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,val_mse\n";
    for (const auto& e : epochs)
      os << e.epoch << ',' << io::fmt(e.train_loss) << ',' << (e.val_mse ? io::fmt(*e.val_mse) : "") << '\n';
  }

  std::string summary() const {
    return "epochs " + std::to_string(epochs.size()) + ", best epoch " + std::to_string(best_epoch) +
           ", best val_mse " + io::fmt(best_val) + ", final train_loss " +
           (epochs.empty() ? std::string("nan") : io::fmt(epochs.back().train_loss));
  }
};

struct TrainResult {
  std::unique_ptr<DynamicsModel> model;
  TrainReport report;
};

/// Mini-batch training from `initial`. Validates every val_every epochs and on
/// the last one, returns the parameters with the lowest validation score;
/// composite models come back leakage-corrected.
inline TrainResult train(const DynamicsModel& initial, const Dataset& data, const HeldOutSet& val,
                         const TrainConfig& cfg) {
  cfg.check();
  if (data.n_pairs() == 0) fail(ErrorKind::usage, "training needs a non-empty dataset");
  if (!(data.grid == initial.grid())) fail(ErrorKind::config, "dataset grid does not match the model grid");
  if (val.empty()) fail(ErrorKind::usage, "validation needs at least one initial state");
  const auto start = std::chrono::steady_clock::now();

  auto model = initial.clone();
  const auto pairs = data.pairs();
  const Eigen::Index M = data.grid.M, n = pairs.t.size();
  const Eigen::Index B = std::min<Eigen::Index>(cfg.batch_size, n);
  std::map<Eigen::Index, LossGraph> graphs;
  auto graph = [&](Eigen::Index b) -> LossGraph& {
    auto it = graphs.find(b);
    if (it == graphs.end()) it = graphs.emplace(b, LossGraph(*model, b, data.dt, cfg.scheme, cfg.force_penalty)).first;
    return it->second;
  };

  Adam opt(model->params().flat_size(), cfg.adam);
  Rng rng = stream(cfg.seed, 0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> grad, best(model->params().flat().begin(), model->params().flat().end());
  Matrix U0, U1;
  Vector t;
  TrainResult out;
  auto& rep = out.report;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Eigen::Index s = 0; s < n; s += B) {
      const Eigen::Index b = std::min(B, n - s);
      U0.resize(M, b);
      U1.resize(M, b);
      t.resize(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const auto c = order[static_cast<std::size_t>(s + k)];
        U0.col(k) = pairs.u0.col(c);
        U1.col(k) = pairs.u1.col(c);
        t[k] = pairs.t[c];
      }
      const double loss = graph(b).gradient(U0, U1, t, grad);
      total += loss * static_cast<double>(b);
      if (std::isfinite(loss)) opt.step(model->params().flat(), grad);
    }
    EpochRecord rec{epoch, total / static_cast<double>(n), std::nullopt};
    if ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs) {
      rec.val_mse = validate(*model, val, cfg.rollout, cfg.jobs);
      if (*rec.val_mse < rep.best_val) {
        rep.best_val = *rec.val_mse;
        rep.best_epoch = epoch;
        best.assign(model->params().flat().begin(), model->params().flat().end());
      }
    }
    rep.epochs.push_back(rec);
  }
  if (rep.best_epoch < 0) {
    rep.best_epoch = cfg.epochs - 1;
  } else {
    std::copy(best.begin(), best.end(), model->params().flat().begin());
  }
  if (const auto* p = dynamic_cast<const PHNNModel*>(model.get()))
    model = std::make_unique<PHNNModel>(apply_leakage_correction(*p));
  out.model = std::move(model);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Validation states drawn from the held-out streams of the dataset seed.
inline HeldOutSet validation_set(const SystemSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  const double dt = cfg.val_dt > 0.0 ? cfg.val_dt : data.dt;
  const int substeps = std::max(1, static_cast<int>(std::lround(data.substeps * dt / data.dt)));
  return make_held_out(spec, cfg.n_val, cfg.t_val, dt, data.seed, validation_streams, substeps, data.scheme, cfg.jobs);
}

inline TrainResult train(const DynamicsModel& initial, const Dataset& data, const SystemSpec& spec,
                         const TrainConfig& cfg) {
  cfg.check();
  return train(initial, data, validation_set(spec, data, cfg), cfg);
}

}  // namespace phnn
