#pragma once

// The conv -> affine -> affine -> sum network used for the learned integrals,
// and its input gradient expanded into first-order tape primitives.

#include <string>

#include "phnn/diffcore/params.hpp"
#include "phnn/diffcore/tape.hpp"

namespace phnn::ad {

/// identity and square only exist so tests can embed closed-form integrals.
enum class Activation { tanh, identity, square };

struct ScalarIntegralNet {
  std::string prefix;
  int channels = 20;
  int hidden = 100;
  int width = 3;
  Activation act1 = Activation::tanh;
  Activation act2 = Activation::tanh;

  std::string conv_w() const { return prefix + ".conv.w"; }
  std::string conv_b() const { return prefix + ".conv.b"; }
  std::string l1_w() const { return prefix + ".l1.w"; }
  std::string l1_b() const { return prefix + ".l1.b"; }
  std::string l2_w() const { return prefix + ".l2.w"; }
  std::string l2_b() const { return prefix + ".l2.b"; }

  void validate() const {
    if (channels < 1 || hidden < 1 || width < 1 || width % 2 == 0)
      fail(ErrorKind::unsupported, "scalar net '" + prefix + "' needs an odd conv width and positive widths");
  }

  /// Registers parameters; weights uniform in +-sqrt(1/fan_in), biases zero.
  template <class Rng>
  void declare(ParamStore& store, Rng& rng) const {
    validate();
    store.init_uniform(store.add(conv_w(), channels, width), width, rng);
    store.add(conv_b(), channels, 1);
    store.init_uniform(store.add(l1_w(), hidden, channels), channels, rng);
    store.add(l1_b(), hidden, 1);
    store.init_uniform(store.add(l2_w(), 1, hidden), hidden, rng);
    store.add(l2_b(), 1, 1);
  }

  struct Trace {
    NodeId z1, a1, z2, a2, out;
  };

  /// Pre-activations, activations and (optionally) the per-position output o_i;
  /// the integral is sum_i o_i.
  Trace emit_trace(Tape& tape, const ParamStore& store, NodeId u, bool with_output = true) const {
    validate();
    if (tape.rows(u) != 1) fail(ErrorKind::shape, "scalar net input must be a single row");
    Trace tr{};
    tr.z1 = tape.conv(u, tape.param(store, conv_w()), width, tape.param(store, conv_b()));
    tr.a1 = activate(tape, tr.z1, act1);
    tr.z2 = tape.affine(tape.param(store, l1_w()), tr.a1, tape.param(store, l1_b()));
    tr.a2 = activate(tape, tr.z2, act2);
    tr.out = with_output ? tape.affine(tape.param(store, l2_w()), tr.a2, tape.param(store, l2_b())) : tr.a2;
    return tr;
  }

  /// Integral value per segment, [1 x B].
  NodeId emit_value(Tape& tape, const ParamStore& store, NodeId u) const {
    return tape.segment_sum(emit_trace(tape, store, u).out);
  }

  static NodeId activate(Tape& tape, NodeId z, Activation a) {
    switch (a) {
      case Activation::tanh: return tape.tanh(z);
      case Activation::identity: return z;
      case Activation::square: return tape.mul(z, z);
    }
    return z;
  }

  /// Multiplies the incoming gradient by the activation derivative at z (a = act(z)).
  static NodeId backprop(Tape& tape, NodeId z, NodeId a_out, NodeId grad, Activation a) {
    switch (a) {
      case Activation::tanh: return tape.mul(tape.one_minus_square(a_out), grad);
      case Activation::identity: return grad;
      case Activation::square: return tape.mul(tape.scale(z, 2.0), grad);
    }
    return grad;
  }
};

/// Emits grad_u of the integral network as tape nodes, [1 x N].
///
/// The result is an ordinary node, so one further backward sweep gives
/// parameter gradients of any loss built on top of it.
inline NodeId grad_input_scalar_net(Tape& tape, const ParamStore& store, const ScalarIntegralNet& net,
                                    NodeId u) {
  const auto tr = net.emit_trace(tape, store, u, false);
  const NodeId ones = tape.constant(Matrix::Ones(1, tape.cols(u)));
  NodeId g = tape.affine_t(tape.param(store, net.l2_w()), ones);
  g = ScalarIntegralNet::backprop(tape, tr.z2, tr.a2, g, net.act2);
  g = tape.affine_t(tape.param(store, net.l1_w()), g);
  g = ScalarIntegralNet::backprop(tape, tr.z1, tr.a1, g, net.act1);
  return tape.conv_t(g, tape.param(store, net.conv_w()), net.width);
}

}  // namespace phnn::ad
