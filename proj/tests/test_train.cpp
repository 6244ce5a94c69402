#include <gtest/gtest.h>

#include <sstream>

#include "phnn/model/baseline.hpp"
#include "phnn/train.hpp"

using namespace phnn;

namespace {

// g(u) = theta * u, one shared parameter.
class ScalarDecay final : public DynamicsModel {
 public:
  explicit ScalarDecay(int M, double theta = 0.0) {
    grid_ = make_grid(M, 1.0);
    params_.add("theta", 1, 1);
    params_.view("theta")(0, 0) = theta;
  }
  std::string kind() const override { return "decay"; }
  std::string preset() const override { return "decay"; }
  Emitted emit(ad::Tape& tape, const ModelInputs& in) const override {
    return {tape.conv(in.u, tape.param(params_, "theta"), 1), std::nullopt};
  }
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<ScalarDecay>(*this); }
  double theta() const { return params_.view("theta")(0, 0); }
};

// g(u) = c, a fixed vector.
class ConstantRhs final : public DynamicsModel {
 public:
  explicit ConstantRhs(const Vector& c) : c_(c) { grid_ = make_grid(static_cast<int>(c.size()), 1.0); }
  std::string kind() const override { return "constant"; }
  std::string preset() const override { return "constant"; }
  Emitted emit(ad::Tape& tape, const ModelInputs& in) const override {
    const auto segs = tape.cols(in.u) / grid_.M;
    return {tape.constant(c_.transpose().replicate(1, segs)), std::nullopt};
  }
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<ConstantRhs>(*this); }

 private:
  Vector c_;
};

// Exact exponential decay data u(t) = u0 exp(-t) sampled every dt.
Dataset decay_data(int M, int n_traj, int steps, double dt, std::uint64_t seed) {
  Dataset d;
  d.grid = make_grid(M, 1.0);
  d.dt = dt;
  Rng rng(seed);
  std::uniform_real_distribution<double> amp(0.5, 2.0);
  for (int k = 0; k < n_traj; ++k) {
    Trajectory tr;
    tr.times.resize(steps + 1);
    tr.states.resize(steps + 1, M);
    Vector u0(M);
    for (auto& v : u0) v = amp(rng);
    for (int j = 0; j <= steps; ++j) {
      tr.times[j] = j * dt;
      tr.states.row(j) = (u0 * std::exp(-j * dt)).transpose();
    }
    d.trajectories.push_back(tr);
  }
  return d;
}

HeldOutSet decay_held_out(int M) {
  HeldOutSet s;
  s.dt = 0.1;
  s.steps = 10;
  s.initial = {Vector::Ones(M), Vector::LinSpaced(M, 0.5, 1.5)};
  for (const auto& u : s.initial) s.target.push_back(u * std::exp(-1.0));
  return s;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Loss, ConstantModel) {
  const Vector c = vec({1.0, -2.0, 0.5});
  const ConstantRhs m(c);
  Matrix U0(3, 1), U1(3, 1);
  U0 << 0.0, 1.0, 2.0;
  U1 << 0.3, 0.8, 2.2;
  const double dt = 0.1;
  const double expect = (((U1 - U0) / dt).col(0) - c).squaredNorm() / 3.0;
  for (auto scheme : {SchemeId::midpoint, SchemeId::srk4})
    EXPECT_NEAR(batch_loss(m, U0, U1, vec({0.0}), dt, scheme), expect, 1e-12);
}

TEST(Loss, ExactFlowGivesZero) {
  const double dt = 0.2, lam = -1.5;
  const ScalarDecay m(4, lam);
  Matrix U0 = Matrix::Random(4, 3);
  const double mid = (1 + lam * dt / 2) / (1 - lam * dt / 2);
  const double z = lam * dt, srk = (1 + z / 2 + z * z / 12) / (1 - z / 2 + z * z / 12);
  EXPECT_LT(batch_loss(m, U0, mid * U0, Vector::Zero(3), dt, SchemeId::midpoint), 1e-26);
  EXPECT_LT(batch_loss(m, U0, srk * U0, Vector::Zero(3), dt, SchemeId::srk4), 1e-26);
}

TEST(Loss, DuplicatedBatchUnchanged) {
  Rng rng(1);
  auto m = build_phnn_preset("general", SystemName::kdvburgers, make_grid(8, 20.0), ModelWidths{3, 5, 6}, rng);
  const Matrix U0 = Matrix::Random(8, 2), U1 = Matrix::Random(8, 2);
  const Vector t = vec({0.1, 0.3});
  Matrix D0(8, 4), D1(8, 4);
  D0 << U0, U0;
  D1 << U1, U1;
  for (auto scheme : {SchemeId::midpoint, SchemeId::srk4}) {
    const double a = batch_loss(m, U0, U1, t, 0.05, scheme, 0.1);
    const double b = batch_loss(m, D0, D1, vec({0.1, 0.3, 0.1, 0.3}), 0.05, scheme, 0.1);
    EXPECT_NEAR(a, b, 1e-12 * a);
  }
  EXPECT_THROW(batch_loss(m, Matrix(8, 0), Matrix(8, 0), Vector(0), 0.05, SchemeId::midpoint), Error);
  EXPECT_THROW(batch_loss(m, Matrix::Zero(6, 1), Matrix::Zero(6, 1), vec({0.0}), 0.05, SchemeId::midpoint), Error);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto m = build_phnn_preset("general", SystemName::bbm, make_grid(8, 50.0), ModelWidths{3, 5, 6}, rng);
  for (double& v : m.params().flat()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  const Matrix U0 = Matrix::Random(8, 3), U1 = U0 + 0.1 * Matrix::Random(8, 3);
  const Vector t = vec({0.0, 0.4, 0.8});
  for (auto scheme : {SchemeId::midpoint, SchemeId::srk4}) {
    LossGraph g(m, 3, 0.4, scheme, 0.01);
    std::vector<double> grad;
    g.gradient(U0, U1, t, grad);
    auto flat = m.params().flat();
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double keep = flat[i];
      flat[i] = keep + 1e-6;
      const double up = g.value(U0, U1, t);
      flat[i] = keep - 1e-6;
      const double down = g.value(U0, U1, t);
      flat[i] = keep;
      worst = std::max(worst, std::abs((up - down) / 2e-6 - grad[i]));
      scale = std::max(scale, std::abs(grad[i]));
    }
    EXPECT_LT(worst, 1e-4 * std::max(scale, 1.0)) << to_string(scheme);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(2, {});
  std::vector<double> p{1.0, -1.0};
  opt.step(p, {3.0, -0.5});
  EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(p[1], -1.0 + 1e-3, 1e-9);
}

// The midpoint loss on exact exponential data is minimized by
// theta* = -(2/dt) tanh(dt/2); a brute-force scan confirms the closed form.
TEST(Train, ScalarDecayReachesLossMinimizer) {
  const double dt = 0.1;
  const auto data = decay_data(4, 8, 10, dt, 3);
  const auto pairs = data.pairs();
  double best_theta = 0.0, best_loss = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 20000; ++k) {
    const double th = -1.1 + 2e-5 * k;
    const double l = batch_loss(ScalarDecay(4, th), pairs.u0, pairs.u1, pairs.t, dt, SchemeId::midpoint);
    if (l < best_loss) {
      best_loss = l;
      best_theta = th;
    }
  }
  const double closed = -(2.0 / dt) * std::tanh(dt / 2.0);
  EXPECT_NEAR(best_theta, closed, 2e-5);

  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.val_every = 50;
  cfg.seed = 4;
  const auto res = train(ScalarDecay(4), data, decay_held_out(4), cfg);
  const double theta = dynamic_cast<const ScalarDecay&>(*res.model).theta();
  EXPECT_NEAR(theta, -1.0, 1e-3);
  EXPECT_NEAR(theta, closed, 1e-3);
}

TEST(Train, SelectsBestSnapshotAndIsDeterministic) {
  const auto spec = system_spec(SystemName::kdvburgers, make_grid(16, 20.0));
  const auto data = generate_dataset(spec, 2, 0.05, 0.2, 9, 40);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 3;
  cfg.val_every = 2;
  cfg.n_val = 2;
  cfg.t_val = 0.1;
  cfg.seed = 5;
  cfg.rollout.substeps = 4;
  auto run = [&] {
    Rng rng(6);
    const auto m = build_phnn_preset("informed", SystemName::kdvburgers, spec.grid, ModelWidths{4, 8, 8}, rng);
    return train(m, data, spec, cfg);
  };
  const auto a = run();
  const auto b = run();
  std::ostringstream ca, cb;
  a.report.write_csv(ca);
  b.report.write_csv(cb);
  EXPECT_EQ(ca.str(), cb.str());
  ASSERT_EQ(a.report.epochs.size(), 6u);
  double lowest = std::numeric_limits<double>::infinity();
  int validated = 0;
  for (const auto& e : a.report.epochs)
    if (e.val_mse) {
      ++validated;
      lowest = std::min(lowest, *e.val_mse);
    }
  EXPECT_EQ(validated, 3);
  EXPECT_EQ(a.report.best_val, lowest);
  ASSERT_TRUE(a.report.epochs[a.report.best_epoch].val_mse);
  EXPECT_EQ(*a.report.epochs[a.report.best_epoch].val_mse, lowest);
  // the returned snapshot scores the recorded minimum (the correction keeps outputs)
  const auto held = validation_set(spec, data, cfg);
  EXPECT_NEAR(validate(*a.model, held, cfg.rollout), lowest, 1e-9 * lowest);
  EXPECT_TRUE(dynamic_cast<const PHNNModel&>(*a.model).corrected);
  EXPECT_LT(a.report.epochs.back().train_loss, a.report.epochs.front().train_loss);
}

TEST(Train, BaselineUsesSameLoop) {
  const auto spec = system_spec(SystemName::peronamalik, make_grid(12, 6.0));
  const auto data = generate_dataset(spec, 2, 0.001, 0.004, 2, 10);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.n_val = 1;
  cfg.t_val = 0.002;
  Rng rng(7);
  const BaselineModel b(spec.grid, {true, true, true}, {}, rng);
  const auto res = train(b, data, spec, cfg);
  EXPECT_EQ(res.model->kind(), "baseline");
  EXPECT_EQ(res.report.epochs.size(), 3u);
}

TEST(Train, RejectsBadInput) {
  const auto data = decay_data(4, 1, 2, 0.1, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(ScalarDecay(4), data, decay_held_out(4), cfg), Error);
  cfg.epochs = 1;
  EXPECT_THROW(train(ScalarDecay(4), Dataset{}, decay_held_out(4), cfg), Error);
  EXPECT_THROW(train(ScalarDecay(4), data, HeldOutSet{}, cfg), Error);
  EXPECT_THROW(train(ScalarDecay(5), data, decay_held_out(4), cfg), Error);
}

TEST(Validate, GroundTruthModelScoresZero) {
  const int M = 16;
  const auto grid = make_grid(M, 20.0);
  const auto spec = system_spec(SystemName::kdvburgers, grid, {{"eta", 0.0}, {"gamma", 0.0}, {"force", 0.0}});
  Rng rng(8);
  auto m = build_phnn_preset("informed", SystemName::kdvburgers, grid, ModelWidths{1, 1, 4}, rng);
  for (double& v : m.params().flat()) v = 0.0;
  m.V->act1 = ad::Activation::square;
  m.V->act2 = ad::Activation::identity;
  m.params().view("V.conv.w") << 0.0, -1.0 / grid.h, 1.0 / grid.h;
  m.params().view("V.l1.w")(0, 0) = 1.0;
  m.params().view("V.l2.w")(0, 0) = 0.15;
  const auto held = make_held_out(spec, 3, 0.5, 0.05, 11, validation_streams, 4);
  RolloutOptions opt;
  opt.substeps = 4;
  EXPECT_LT(validate(m, held, opt), 1e-10);
}

TEST(Validate, ZeroModelScoresDisplacement) {
  const auto spec = system_spec(SystemName::peronamalik, make_grid(16, 6.0));
  const auto held = make_held_out(spec, 3, 0.004, 0.002, 12, validation_streams, 10);
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) expect += nodewise_mse(held.initial[i], held.target[i]) / 3.0;
  EXPECT_GT(expect, 0.0);
  EXPECT_NEAR(validate(ConstantRhs(Vector::Zero(16)), held), expect, 1e-15);
  EXPECT_THROW(validate(ConstantRhs(Vector::Zero(16)), HeldOutSet{}), Error);
}

TEST(Validate, DivergentModelScoresInfinity) {
  HeldOutSet s = decay_held_out(4);
  EXPECT_EQ(validate(ScalarDecay(4, -5000.0), s, {SchemeId::midpoint, 1, {}}),
            std::numeric_limits<double>::infinity());
}

TEST(Validate, HeldOutStatesDifferFromTraining) {
  const auto spec = system_spec(SystemName::kdvburgers, make_grid(16, 20.0));
  const auto data = generate_dataset(spec, 2, 0.05, 0.1, 3, 10);
  const auto held = make_held_out(spec, 2, 0.1, 0.05, 3, validation_streams, 10);
  for (const auto& tr : data.trajectories)
    for (const auto& u : held.initial) EXPECT_FALSE(tr.state(0).isApprox(u));
}
