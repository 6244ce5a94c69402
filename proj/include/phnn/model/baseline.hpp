#pragma once

// Black-box comparison model: pointwise layers, one circular convolution,
// pointwise layers.

#include <memory>
#include <string>

#include "phnn/model/model.hpp"

namespace phnn {

struct BaselineWidths {
  int hidden1 = 20;    // stage 1 width, 5 layers
  int conv_width = 5;  // stage 2 kernel width
  int hidden2 = 100;   // stage 3 width
};

class BaselineModel final : public DynamicsModel {
 public:
  static constexpr int stage1_layers = 5;

  ForceDeps inputs;  // u is always an input; x and t follow the flags
  BaselineWidths widths;

  template <class Rng>
  BaselineModel(const PeriodicGrid& grid, ForceDeps in, const BaselineWidths& w, Rng& rng)
      : inputs(in), widths(w) {
    grid_ = grid;
    inputs.u = true;
    if (w.hidden1 < 1 || w.hidden2 < 1 || w.conv_width < 1 || w.conv_width % 2 == 0)
      fail(ErrorKind::config, "baseline widths must be positive with an odd kernel width");
    if (w.conv_width > grid.M) fail(ErrorKind::kernel_too_wide, "baseline kernel wider than the grid");
    int fan = n_features();
    for (int l = 1; l <= stage1_layers; ++l) {
      params_.init_uniform(params_.add(name(l, 'w'), w.hidden1, fan), fan, rng);
      params_.add(name(l, 'b'), w.hidden1, 1);
      fan = w.hidden1;
    }
    params_.init_uniform(params_.add("conv.w", w.hidden1, w.hidden1 * w.conv_width), w.hidden1 * w.conv_width,
                         rng);
    params_.add("conv.b", w.hidden1, 1);
    params_.init_uniform(params_.add("out1.w", w.hidden2, w.hidden1), w.hidden1, rng);
    params_.add("out1.b", w.hidden2, 1);
    params_.init_uniform(params_.add("out2.w", 1, w.hidden2), w.hidden2, rng);
    params_.add("out2.b", 1, 1);
  }

  int n_features() const { return 1 + (inputs.x ? 2 : 0) + (inputs.t ? 1 : 0); }

  std::string kind() const override { return "baseline"; }
  std::string preset() const override { return "baseline"; }
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<BaselineModel>(*this); }

  Emitted emit(ad::Tape& tape, const ModelInputs& in) const override {
    ad::NodeId a = in.u;
    if (inputs.x) a = tape.concat_rows(a, in.xf);
    if (inputs.t) a = tape.concat_rows(a, in.t);
    for (int l = 1; l <= stage1_layers; ++l)
      a = tape.tanh(tape.affine(tape.param(params_, name(l, 'w')), a, tape.param(params_, name(l, 'b'))));
    a = tape.tanh(tape.conv(a, tape.param(params_, "conv.w"), widths.conv_width, tape.param(params_, "conv.b")));
    a = tape.tanh(tape.affine(tape.param(params_, "out1.w"), a, tape.param(params_, "out1.b")));
    a = tape.affine(tape.param(params_, "out2.w"), a, tape.param(params_, "out2.b"));
    return {a, std::nullopt};
  }

  static std::string name(int layer, char kind) {
    return "in" + std::to_string(layer) + (kind == 'w' ? ".w" : ".b");
  }
};

inline Vector baseline_forward(const BaselineModel& m, const Vector& u, const Vector& x, double t) {
  return model_forward(m, u, x, t);
}

/// (x, t) -> g(u_ref, x, t) - g(u_ref, 0, 0): the part of the baseline output
/// explained by position and time.
class BaselineForce {
 public:
  explicit BaselineForce(const BaselineModel& m, std::optional<Vector> u_ref = std::nullopt)
      : model_(std::make_shared<BaselineModel>(m)),
        u_ref_(u_ref ? *u_ref : Vector::Zero(m.grid().M)) {
    if (u_ref_.size() != m.grid().M) fail(ErrorKind::shape, "reference state length does not match grid");
    rhs_ = std::make_shared<ModelRhs>(*model_);
    g00_ = (*rhs_)(u_ref_, Vector::Zero(m.grid().M), 0.0);
  }

  Vector operator()(const Vector& x, double t) const { return (*rhs_)(u_ref_, x, t) - g00_; }

 private:
  std::shared_ptr<BaselineModel> model_;
  std::shared_ptr<ModelRhs> rhs_;
  Vector u_ref_, g00_;
};

inline BaselineForce extract_baseline_force(const BaselineModel& m, std::optional<Vector> u_ref = std::nullopt) {
  return BaselineForce(m, std::move(u_ref));
}

}  // namespace phnn
