#pragma once

#include <Eigen/Dense>

#include <random>
#include <span>
#include <string>
#include <vector>

#include "phnn/error.hpp"

namespace phnn::ad {

using Matrix = Eigen::MatrixXd;

/// Named parameter arrays over one contiguous flat buffer.
///
/// Arrays are stored column-major, so `view()` maps straight onto an Eigen
/// matrix. Constrained operator kernels register only their free components;
/// the constraint label is carried along for checkpoints.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::string constraint = "free";

    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  };

  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                  std::string constraint = "free") {
    if (contains(name)) fail(ErrorKind::config, "duplicate parameter name '" + name + "'");
    if (rows <= 0 || cols <= 0) fail(ErrorKind::shape, "parameter '" + name + "' has empty shape");
    Entry e{name, rows, cols, values_.size(), std::move(constraint)};
    values_.resize(values_.size() + e.size(), 0.0);
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    fail(ErrorKind::config, "unknown parameter '" + name + "'");
  }

  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }

  Eigen::Map<Matrix> view(std::size_t i) {
    const auto& e = entries_.at(i);
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<const Matrix> view(std::size_t i) const {
    const auto& e = entries_.at(i);
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<Matrix> view(const std::string& name) { return view(index(name)); }
  Eigen::Map<const Matrix> view(const std::string& name) const { return view(index(name)); }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t flat_size() const { return values_.size(); }

  /// Uniform in +-sqrt(1/fan_in).
  template <class Rng>
  void init_uniform(std::size_t i, Eigen::Index fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto v = view(i);
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, c) = dist(rng);
  }

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
};

}  // namespace phnn::ad
