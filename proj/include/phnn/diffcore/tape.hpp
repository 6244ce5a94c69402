#pragma once

// Reverse-mode differentiation over a fixed set of array primitives.
//
// Every node value is a [rows x N] matrix where N = B*M: B periodic segments
// of length M laid side by side. Convolutions and circulant solves wrap
// inside each segment, pointwise layers act on all columns at once.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phnn/diffcore/params.hpp"
#include "phnn/error.hpp"
#include "phnn/spatial.hpp"

namespace phnn::ad {

/// tanh through the vectorized exp. Absolute error ~1e-16; relative accuracy
/// degrades only for |x| < 1e-3, where it does not matter for the layers.
inline Matrix fast_tanh(const Matrix& x) {
  const auto a = x.array();
  const Eigen::ArrayXXd e = (-2.0 * a.abs().min(20.0)).exp();
  return (a.sign() * (1.0 - e) / (1.0 + e)).matrix();
}

struct NodeId {
  std::uint32_t index = 0;
  bool operator==(const NodeId&) const = default;
};

enum class Op : std::uint8_t {
  input,
  constant,
  param,
  add,
  sub,
  mul,
  scale,
  conv,         // circular convolution, kernel operand [Cout x Cin*K]
  conv_t,       // transposed circular convolution with the same kernel
  affine,       // W x + b over channels, per column
  affine_t,     // W^T x
  tanh,
  tanh_deriv,   // 1 - tanh(x)^2
  one_minus_sq, // 1 - y^2, i.e. tanh' from an existing tanh output
  sum,          // all entries -> 1x1
  segment_sum,  // [r x B*M] -> [r x B]
  mean_square,  // sum x^2 / count -> 1x1
  mean_abs,     // sum |x| / count -> 1x1
  solve,        // circulant solve, kernel operand [1 x K]
  embed,        // offset + (basis * p)^T, maps free kernel components to weights
  concat_rows,
};

struct Gradients {
  std::vector<double> params;  // flat, ParamStore layout
  std::vector<Matrix> inputs;  // one per declared input slot
};

class Tape {
 public:
  static constexpr std::uint32_t none = ~std::uint32_t{0};

  explicit Tape(Eigen::Index segment) : segment_(segment) {
    if (segment < 1) fail(ErrorKind::shape, "segment length must be positive");
  }

  Eigen::Index segment() const { return segment_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t input_count() const { return input_shapes_.size(); }

  // ---- graph construction -------------------------------------------------

  NodeId input(Eigen::Index rows, Eigen::Index cols) {
    Node n{Op::input};
    n.slot = input_shapes_.size();
    input_shapes_.push_back({rows, cols});
    return push(n, rows, cols);
  }

  NodeId constant(Matrix value) {
    Node n{Op::constant};
    const auto r = value.rows(), c = value.cols();
    n.data = std::make_shared<const Matrix>(std::move(value));
    return push(n, r, c);
  }

  NodeId param(const ParamStore& store, const std::string& name) {
    Node n{Op::param};
    n.slot = store.index(name);
    const auto& e = store.entry(n.slot);
    return push(n, e.rows, e.cols);
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }

  NodeId scale(NodeId a, double s) {
    Node n{Op::scale};
    n.a = a.index;
    n.scalar = s;
    return push(n, rows(a), cols(a));
  }

  NodeId conv(NodeId x, NodeId kernel, int width, std::optional<NodeId> bias = std::nullopt) {
    check_width(width);
    const auto cin = rows(x);
    if (cols(kernel) != cin * width)
      fail(ErrorKind::shape, "conv kernel columns must equal in_channels * width");
    check_segmented(x);
    Node n{Op::conv};
    n.a = x.index;
    n.b = kernel.index;
    n.width = width;
    if (bias) {
      if (rows(*bias) != rows(kernel) || cols(*bias) != 1)
        fail(ErrorKind::shape, "conv bias must be [out_channels x 1]");
      n.c = bias->index;
    }
    return push(n, rows(kernel), cols(x));
  }

  NodeId conv_t(NodeId x, NodeId kernel, int width) {
    check_width(width);
    if (rows(x) != rows(kernel)) fail(ErrorKind::shape, "conv_t input must have out_channels rows");
    if (cols(kernel) % width != 0) fail(ErrorKind::shape, "conv_t kernel width mismatch");
    check_segmented(x);
    Node n{Op::conv_t};
    n.a = x.index;
    n.b = kernel.index;
    n.width = width;
    return push(n, cols(kernel) / width, cols(x));
  }

  NodeId affine(NodeId W, NodeId x, std::optional<NodeId> bias = std::nullopt) {
    if (cols(W) != rows(x)) fail(ErrorKind::shape, "affine weight columns must match input rows");
    Node n{Op::affine};
    n.a = W.index;
    n.b = x.index;
    if (bias) {
      if (rows(*bias) != rows(W) || cols(*bias) != 1)
        fail(ErrorKind::shape, "affine bias must be [out x 1]");
      n.c = bias->index;
    }
    return push(n, rows(W), cols(x));
  }

  NodeId affine_t(NodeId W, NodeId x) {
    if (rows(W) != rows(x)) fail(ErrorKind::shape, "affine_t weight rows must match input rows");
    Node n{Op::affine_t};
    n.a = W.index;
    n.b = x.index;
    return push(n, cols(W), cols(x));
  }

  NodeId tanh(NodeId a) { return unary(Op::tanh, a, rows(a), cols(a)); }
  NodeId tanh_deriv(NodeId a) { return unary(Op::tanh_deriv, a, rows(a), cols(a)); }
  NodeId one_minus_square(NodeId a) { return unary(Op::one_minus_sq, a, rows(a), cols(a)); }
  NodeId sum(NodeId a) { return unary(Op::sum, a, 1, 1); }
  NodeId mean_square(NodeId a) { return unary(Op::mean_square, a, 1, 1); }
  NodeId mean_abs(NodeId a) { return unary(Op::mean_abs, a, 1, 1); }

  NodeId segment_sum(NodeId a) {
    check_segmented(a);
    return unary(Op::segment_sum, a, rows(a), cols(a) / segment_);
  }

  /// Solves C(kernel) y = b on every segment of b.
  NodeId solve(NodeId kernel, NodeId b, std::string label = "A") {
    if (rows(kernel) != 1 || cols(kernel) % 2 == 0)
      fail(ErrorKind::shape, "solve kernel must be a single odd-width row");
    if (rows(b) != 1) fail(ErrorKind::shape, "solve right-hand side must be a single row");
    check_segmented(b);
    if (cols(kernel) > segment_)
      fail(ErrorKind::kernel_too_wide, "solve kernel wider than the periodic segment");
    Node n{Op::solve};
    n.a = kernel.index;
    n.b = b.index;
    n.label = std::move(label);
    return push(n, 1, cols(b));
  }

  /// Kernel row [1 x K] = offset + (basis * p)^T with p an [n x 1] node.
  NodeId embed(NodeId p, const Eigen::RowVectorXd& offset, const Matrix& basis) {
    if (basis.rows() != offset.cols() || basis.cols() != rows(p) || cols(p) != 1)
      fail(ErrorKind::shape, "embed basis does not match parameter or offset shape");
    Node n{Op::embed};
    n.a = p.index;
    Matrix packed(basis.rows(), basis.cols() + 1);
    packed.col(0) = offset.transpose();
    packed.rightCols(basis.cols()) = basis;
    n.data = std::make_shared<const Matrix>(std::move(packed));
    return push(n, 1, offset.cols());
  }

  NodeId concat_rows(NodeId a, NodeId b) {
    if (cols(a) != cols(b)) fail(ErrorKind::shape, "concat_rows needs equal column counts");
    Node n{Op::concat_rows};
    n.a = a.index;
    n.b = b.index;
    return push(n, rows(a) + rows(b), cols(a));
  }

  Eigen::Index rows(NodeId id) const { return nodes_.at(id.index).rows; }
  Eigen::Index cols(NodeId id) const { return nodes_.at(id.index).cols; }

  // ---- evaluation ---------------------------------------------------------

  void forward(const ParamStore& params, std::span<const Matrix> inputs) {
    if (inputs.size() != input_shapes_.size())
      fail(ErrorKind::shape, "expected " + std::to_string(input_shapes_.size()) + " inputs, got " +
                                 std::to_string(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i].rows() != input_shapes_[i].first || inputs[i].cols() != input_shapes_[i].second)
        fail(ErrorKind::shape, "input " + std::to_string(i) + " has the wrong shape");
    values_.resize(nodes_.size());  // storage is reused across forwards
    solvers_.assign(nodes_.size(), nullptr);
    offsets_.clear();
    for (const auto& e : params.entries()) offsets_.push_back(e.offset);
    for (std::size_t i = 0; i < nodes_.size(); ++i) eval(i, params, inputs);
    params_size_ = params.flat_size();
    evaluated_ = true;
  }

  bool evaluated() const { return evaluated_; }

  const Matrix& value(NodeId id) const {
    if (!evaluated_) fail(ErrorKind::usage, "tape value requested before forward");
    return values_.at(id.index);
  }

  /// One reverse sweep from `output` seeded with `cotangent`.
  Gradients backward(NodeId output, const Matrix& cotangent) const {
    if (!evaluated_) fail(ErrorKind::usage, "backward called before forward");
    if (cotangent.rows() != rows(output) || cotangent.cols() != cols(output))
      fail(ErrorKind::shape, "cotangent shape does not match output");
    std::vector<Matrix> adj(nodes_.size());
    adj[output.index] = cotangent;
    Gradients g;
    g.params.assign(params_size_, 0.0);
    g.inputs.resize(input_shapes_.size());
    for (std::size_t i = 0; i < input_shapes_.size(); ++i)
      g.inputs[i] = Matrix::Zero(input_shapes_[i].first, input_shapes_[i].second);
    for (std::size_t i = output.index + 1; i-- > 0;) {
      if (adj[i].size() == 0) continue;
      propagate(i, adj, g);
    }
    return g;
  }

  /// Convenience for scalar outputs.
  Gradients backward(NodeId output) const { return backward(output, Matrix::Ones(1, 1)); }

 private:
  struct Node {
    explicit Node(Op o) : op(o) {}
    Op op;
    std::uint32_t a = none, b = none, c = none;
    double scalar = 0.0;
    int width = 0;
    std::size_t slot = 0;
    Eigen::Index rows = 0, cols = 0;
    std::shared_ptr<const Matrix> data;
    std::string label;
  };

  NodeId push(Node n, Eigen::Index r, Eigen::Index c) {
    n.rows = r;
    n.cols = c;
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      fail(ErrorKind::shape, "elementwise operands differ in shape");
    Node n{op};
    n.a = a.index;
    n.b = b.index;
    return push(n, rows(a), cols(a));
  }

  NodeId unary(Op op, NodeId a, Eigen::Index r, Eigen::Index c) {
    Node n{op};
    n.a = a.index;
    return push(n, r, c);
  }

  void check_width(int width) const {
    if (width < 1 || width % 2 == 0) fail(ErrorKind::shape, "convolution width must be odd");
    if (width > segment_) fail(ErrorKind::kernel_too_wide, "convolution wider than periodic segment");
  }

  void check_segmented(NodeId x) const {
    if (cols(x) % segment_ != 0)
      fail(ErrorKind::shape, "column count is not a multiple of the segment length");
  }

  // (S_s X)[:, seg*M + i] = X[:, seg*M + (i - s) mod M]
  Matrix shift(const Matrix& X, int s) const {
    const Eigen::Index M = segment_;
    const Eigen::Index r = detail::wrap(s, M);
    if (r == 0) return X;
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index base = 0; base < X.cols(); base += M) {
      out.middleCols(base + r, M - r) = X.middleCols(base, M - r);
      out.middleCols(base, r) = X.middleCols(base + M - r, r);
    }
    return out;
  }

  // W_j as [Cout x Cin] from a kernel laid out [Cout x Cin*K].
  static Matrix tap(const Matrix& kernel, int width, int jj) {
    const Eigen::Index cin = kernel.cols() / width;
    Matrix W(kernel.rows(), cin);
    for (Eigen::Index ci = 0; ci < cin; ++ci) W.col(ci) = kernel.col(ci * width + jj);
    return W;
  }

  static void accumulate(Matrix& slot, const Matrix& v) {
    if (slot.size() == 0)
      slot = v;
    else
      slot += v;
  }

  void eval(std::size_t i, const ParamStore& params, std::span<const Matrix> inputs) {
    const Node& n = nodes_[i];
    Matrix& out = values_[i];
    auto A = [&]() -> const Matrix& { return values_[n.a]; };
    auto B = [&]() -> const Matrix& { return values_[n.b]; };
    switch (n.op) {
      case Op::input: out = inputs[n.slot]; break;
      case Op::constant: out = *n.data; break;
      case Op::param: {
        const auto v = params.view(n.slot);
        if (v.rows() != n.rows || v.cols() != n.cols)
          fail(ErrorKind::shape, "parameter shape changed since the tape was built");
        out = v;
        break;
      }
      case Op::add: out = A() + B(); break;
      case Op::sub: out = A() - B(); break;
      case Op::mul: out = A().cwiseProduct(B()); break;
      case Op::scale: out = n.scalar * A(); break;
      case Op::conv: {
        const int m = n.width / 2;
        out = Matrix::Zero(n.rows, n.cols);
        for (int j = -m; j <= m; ++j) out.noalias() += tap(B(), n.width, j + m) * shift(A(), -j);
        if (n.c != none) out.colwise() += values_[n.c].col(0);
        break;
      }
      case Op::conv_t: {
        const int m = n.width / 2;
        out = Matrix::Zero(n.rows, n.cols);
        for (int j = -m; j <= m; ++j)
          out.noalias() += tap(B(), n.width, j + m).transpose() * shift(A(), j);
        break;
      }
      case Op::affine:
        out.noalias() = A() * B();
        if (n.c != none) out.colwise() += values_[n.c].col(0);
        break;
      case Op::affine_t: out.noalias() = A().transpose() * B(); break;
      case Op::tanh: out = fast_tanh(A()); break;
      case Op::tanh_deriv: out = (1.0 - fast_tanh(A()).array().square()).matrix(); break;
      case Op::one_minus_sq: out = (1.0 - A().array().square()).matrix(); break;
      case Op::sum: out = Matrix::Constant(1, 1, A().sum()); break;
      case Op::segment_sum: {
        const Matrix& x = A();
        out.resize(n.rows, n.cols);
        for (Eigen::Index s = 0; s < n.cols; ++s)
          out.col(s) = x.middleCols(s * segment_, segment_).rowwise().sum();
        break;
      }
      case Op::mean_square:
        out = Matrix::Constant(1, 1, A().squaredNorm() / static_cast<double>(A().size()));
        break;
      case Op::mean_abs:
        out = Matrix::Constant(1, 1, A().cwiseAbs().sum() / static_cast<double>(A().size()));
        break;
      case Op::solve: {
        const Matrix& k = A();
        std::vector<double> w(k.data(), k.data() + k.size());
        std::shared_ptr<CirculantSolver> solver;
        try {
          solver = std::make_shared<CirculantSolver>(ConvKernel(std::move(w), KernelConstraint::free),
                                                     static_cast<int>(segment_));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::singular_operator) throw;
          fail(ErrorKind::singular_operator, "operator " + n.label + ": " + e.what());
        }
        Eigen::Map<const Matrix> rhs(B().data(), segment_, B().cols() / segment_);
        Matrix y = solver->solve(rhs);
        out = Eigen::Map<const Matrix>(y.data(), 1, n.cols);
        solvers_[i] = std::move(solver);
        break;
      }
      case Op::embed: {
        const Matrix& packed = *n.data;
        out = (packed.col(0) + packed.rightCols(packed.cols() - 1) * A()).transpose();
        break;
      }
      case Op::concat_rows:
        out.resize(n.rows, n.cols);
        out.topRows(A().rows()) = A();
        out.bottomRows(B().rows()) = B();
        break;
    }
  }

  void propagate(std::size_t i, std::vector<Matrix>& adj, Gradients& g) const {
    const Node& n = nodes_[i];
    const Matrix& bar = adj[i];
    auto val = [&](std::uint32_t k) -> const Matrix& { return values_[k]; };
    switch (n.op) {
      case Op::input: g.inputs[n.slot] += bar; break;
      case Op::constant: break;
      case Op::param: {
        // Param views are column-major; flat offsets follow the store layout.
        const std::size_t off = param_offset(n.slot);
        for (Eigen::Index c = 0; c < bar.cols(); ++c)
          for (Eigen::Index r = 0; r < bar.rows(); ++r)
            g.params[off + static_cast<std::size_t>(c * bar.rows() + r)] += bar(r, c);
        break;
      }
      case Op::add:
        accumulate(adj[n.a], bar);
        accumulate(adj[n.b], bar);
        break;
      case Op::sub:
        accumulate(adj[n.a], bar);
        accumulate(adj[n.b], -bar);
        break;
      case Op::mul:
        accumulate(adj[n.a], bar.cwiseProduct(val(n.b)));
        accumulate(adj[n.b], bar.cwiseProduct(val(n.a)));
        break;
      case Op::scale: accumulate(adj[n.a], n.scalar * bar); break;
      case Op::conv: {
        const int m = n.width / 2;
        const Matrix& x = val(n.a);
        const Matrix& k = val(n.b);
        const Eigen::Index cin = x.rows();
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        Matrix dk = Matrix::Zero(k.rows(), k.cols());
        for (int j = -m; j <= m; ++j) {
          const Matrix Wj = tap(k, n.width, j + m);
          dx.noalias() += shift(Wj.transpose() * bar, j);
          const Matrix dW = bar * shift(x, -j).transpose();
          for (Eigen::Index ci = 0; ci < cin; ++ci) dk.col(ci * n.width + j + m) += dW.col(ci);
        }
        accumulate(adj[n.a], dx);
        accumulate(adj[n.b], dk);
        if (n.c != none) accumulate(adj[n.c], bar.rowwise().sum());
        break;
      }
      case Op::conv_t: {
        const int m = n.width / 2;
        const Matrix& x = val(n.a);  // [Cout x N]
        const Matrix& k = val(n.b);
        const Eigen::Index cin = n.rows;
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        Matrix dk = Matrix::Zero(k.rows(), k.cols());
        for (int j = -m; j <= m; ++j) {
          const Matrix Wj = tap(k, n.width, j + m);
          dx.noalias() += shift(Wj * bar, -j);
          const Matrix dW = shift(x, j) * bar.transpose();  // [Cout x Cin]
          for (Eigen::Index ci = 0; ci < cin; ++ci) dk.col(ci * n.width + j + m) += dW.col(ci);
        }
        accumulate(adj[n.a], dx);
        accumulate(adj[n.b], dk);
        break;
      }
      case Op::affine: {
        accumulate(adj[n.a], bar * val(n.b).transpose());
        accumulate(adj[n.b], val(n.a).transpose() * bar);
        if (n.c != none) accumulate(adj[n.c], bar.rowwise().sum());
        break;
      }
      case Op::affine_t: {
        accumulate(adj[n.a], val(n.b) * bar.transpose());
        accumulate(adj[n.b], val(n.a) * bar);
        break;
      }
      case Op::tanh: {
        const auto y = values_[i].array();
        accumulate(adj[n.a], (bar.array() * (1.0 - y.square())).matrix());
        break;
      }
      case Op::tanh_deriv: {
        // d/dx (1 - tanh^2) = -2 tanh (1 - tanh^2)
        const Eigen::ArrayXXd t = fast_tanh(val(n.a)).array();
        accumulate(adj[n.a], (bar.array() * (-2.0 * t * (1.0 - t.square()))).matrix());
        break;
      }
      case Op::one_minus_sq:
        accumulate(adj[n.a], (-2.0 * bar.array() * val(n.a).array()).matrix());
        break;
      case Op::sum:
        accumulate(adj[n.a], Matrix::Constant(rows_of(n.a), cols_of(n.a), bar(0, 0)));
        break;
      case Op::segment_sum: {
        Matrix d(rows_of(n.a), cols_of(n.a));
        for (Eigen::Index s = 0; s < n.cols; ++s)
          d.middleCols(s * segment_, segment_) = bar.col(s).replicate(1, segment_);
        accumulate(adj[n.a], d);
        break;
      }
      case Op::mean_square: {
        const Matrix& x = val(n.a);
        accumulate(adj[n.a], (2.0 * bar(0, 0) / static_cast<double>(x.size())) * x);
        break;
      }
      case Op::mean_abs: {
        const Matrix& x = val(n.a);
        accumulate(adj[n.a], (bar(0, 0) / static_cast<double>(x.size())) * x.cwiseSign());
        break;
      }
      case Op::solve: {
        // y = C^{-1} b:  b_bar = C^{-T} y_bar,  w_j_bar = -sum_i b_bar_i y_{i+j}
        const auto& solver = *solvers_[i];
        const Eigen::Index M = segment_;
        const Eigen::Index segs = n.cols / M;
        Eigen::Map<const Matrix> ybar(bar.data(), M, segs);
        Matrix bbar = solver.solve_transposed(ybar);
        const Matrix& y = values_[i];
        const Matrix& k = val(n.a);
        const int m = static_cast<int>(k.cols() / 2);
        Matrix dk = Matrix::Zero(1, k.cols());
        for (Eigen::Index s = 0; s < segs; ++s)
          for (int j = -m; j <= m; ++j) {
            double acc = 0.0;
            for (Eigen::Index r = 0; r < M; ++r) acc += bbar(r, s) * y(0, s * M + detail::wrap(r + j, M));
            dk(0, j + m) -= acc;
          }
        accumulate(adj[n.a], dk);
        accumulate(adj[n.b], Eigen::Map<const Matrix>(bbar.data(), 1, n.cols));
        break;
      }
      case Op::embed: {
        const Matrix& packed = *n.data;
        accumulate(adj[n.a], packed.rightCols(packed.cols() - 1).transpose() * bar.transpose());
        break;
      }
      case Op::concat_rows: {
        const Eigen::Index ra = rows_of(n.a);
        accumulate(adj[n.a], bar.topRows(ra));
        accumulate(adj[n.b], bar.bottomRows(bar.rows() - ra));
        break;
      }
    }
  }

  Eigen::Index rows_of(std::uint32_t k) const { return nodes_[k].rows; }
  Eigen::Index cols_of(std::uint32_t k) const { return nodes_[k].cols; }

  std::size_t param_offset(std::size_t slot) const {
    if (slot >= offsets_.size()) fail(ErrorKind::usage, "tape parameter offsets not bound");
    return offsets_[slot];
  }

  Eigen::Index segment_;
  std::vector<Node> nodes_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> input_shapes_;
  std::vector<Matrix> values_;
  std::vector<std::shared_ptr<const CirculantSolver>> solvers_;
  std::vector<std::size_t> offsets_;
  std::size_t params_size_ = 0;
  bool evaluated_ = false;
};

}  // namespace phnn::ad
