#pragma once

// Common interface of the learnable right-hand sides and a cached evaluator
// used for rollouts.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phnn/diffcore/params.hpp"
#include "phnn/diffcore/tape.hpp"
#include "phnn/model/force_net.hpp"
#include "phnn/spatial.hpp"

namespace phnn {

class DynamicsModel {
 public:
  struct Emitted {
    ad::NodeId g;                      // right-hand side, [1 x N]
    std::optional<ad::NodeId> force;  // learned force values, when the model has one
  };

  virtual ~DynamicsModel() = default;

  virtual std::string kind() const = 0;
  virtual std::string preset() const = 0;
  virtual Emitted emit(ad::Tape& tape, const ModelInputs& in) const = 0;
  virtual std::unique_ptr<DynamicsModel> clone() const = 0;

  const PeriodicGrid& grid() const { return grid_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 protected:
  DynamicsModel() = default;
  DynamicsModel(const DynamicsModel&) = default;
  DynamicsModel& operator=(const DynamicsModel&) = default;

  PeriodicGrid grid_;
  ad::ParamStore params_;
};

/// Builds the model graph once for a fixed number of segments and re-evaluates
/// it on new states. Holds a reference: the model must outlive the evaluator.
class ModelRhs {
 public:
  explicit ModelRhs(const DynamicsModel& model, Eigen::Index segments = 1)
      : model_(&model), segments_(segments), tape_(model.grid().M) {
    const Eigen::Index N = model.grid().M * segments;
    in_.u = tape_.input(1, N);
    in_.xf = tape_.input(2, N);
    in_.t = tape_.input(1, N);
    out_ = model.emit(tape_, in_);
    inputs_.resize(3);
    inputs_[1] = fourier_features(model.grid().nodes(), model.grid().P, segments);
    inputs_[2] = Matrix::Zero(1, N);
  }

  Eigen::Index segments() const { return segments_; }

  /// g(u, t) on the model grid.
  Vector operator()(const Vector& u, double t) {
    check_single();
    inputs_[0] = u.transpose();
    inputs_[2].setConstant(t);
    tape_.forward(model_->params(), inputs_);
    return tape_.value(out_.g).transpose();
  }

  /// g(u, t) with explicit node coordinates x.
  Vector operator()(const Vector& u, const Vector& x, double t) {
    check_single();
    inputs_[1] = fourier_features(x, model_->grid().P);
    const Vector g = (*this)(u, t);
    inputs_[1] = fourier_features(model_->grid().nodes(), model_->grid().P);
    return g;
  }

  /// Column-wise evaluation of B states [M x B] at times t [B].
  Matrix batch(const Matrix& U, const Vector& t) {
    const Eigen::Index M = model_->grid().M;
    if (U.rows() != M || U.cols() != segments_ || t.size() != segments_)
      fail(ErrorKind::shape, "batch evaluation shape mismatch");
    inputs_[0] = Eigen::Map<const Matrix>(U.data(), 1, M * segments_);
    for (Eigen::Index b = 0; b < segments_; ++b) inputs_[2].middleCols(b * M, M).setConstant(t[b]);
    tape_.forward(model_->params(), inputs_);
    const Matrix& g = tape_.value(out_.g);
    return Eigen::Map<const Matrix>(g.data(), M, segments_);
  }

 private:
  void check_single() const {
    if (segments_ != 1) fail(ErrorKind::usage, "single-state evaluation on a batched evaluator");
  }

  const DynamicsModel* model_;
  Eigen::Index segments_;
  ad::Tape tape_;
  ModelInputs in_{};
  DynamicsModel::Emitted out_{};
  std::vector<Matrix> inputs_;
};

/// One-off evaluation g(u, x, t).
inline Vector model_forward(const DynamicsModel& m, const Vector& u, const Vector& x, double t) {
  if (u.size() != m.grid().M || x.size() != m.grid().M) fail(ErrorKind::shape, "state length does not match grid");
  ModelRhs rhs(m);
  return rhs(u, x, t);
}

}  // namespace phnn
