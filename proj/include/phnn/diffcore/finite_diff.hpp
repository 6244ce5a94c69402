#pragma once

#include <Eigen/Dense>

#include "phnn/error.hpp"

namespace phnn::ad {

/// Central differences (f(u + eps e_i) - f(u - eps e_i)) / 2 eps.
template <class F>
Eigen::VectorXd finite_diff_gradient(F&& f, const Eigen::VectorXd& u, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::usage, "finite difference step must be positive");
  Eigen::VectorXd g(u.size());
  Eigen::VectorXd w = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    w[i] = u[i] + eps;
    const double fp = f(w);
    w[i] = u[i] - eps;
    const double fm = f(w);
    w[i] = u[i];
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace phnn::ad
