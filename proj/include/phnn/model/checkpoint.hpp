#pragma once

// Text checkpoints. Values are written with 17 significant digits, so a
// save/load round trip reproduces every parameter bit for bit.

#include <memory>
#include <ostream>
#include <string>

#include "phnn/io/text.hpp"
#include "phnn/model/baseline.hpp"
#include "phnn/model/phnn.hpp"
#include "phnn/random.hpp"

namespace phnn {

namespace detail {

inline void write_vector(std::ostream& os, const char* key, const Vector& v) {
  os << key << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << io::fmt(v[i]);
  os << '\n';
}

inline Vector read_vector(io::TokenReader& r, const char* key) {
  r.expect(key);
  const long n = r.integer();
  if (n < 0) fail(ErrorKind::io, std::string("negative length for ") + key);
  Vector v(n);
  for (long i = 0; i < n; ++i) v[i] = r.number();
  return v;
}

inline void write_deps(std::ostream& os, const char* key, const ForceDeps& d) {
  os << key << ' ' << d.u << ' ' << d.x << ' ' << d.t << '\n';
}

inline ForceDeps read_deps(io::TokenReader& r, const char* key) {
  r.expect(key);
  ForceDeps d;
  d.u = r.integer() != 0;
  d.x = r.integer() != 0;
  d.t = r.integer() != 0;
  return d;
}

inline void write_params(std::ostream& os, const ad::ParamStore& s) {
  os << "params " << s.count() << '\n';
  for (std::size_t i = 0; i < s.count(); ++i) {
    const auto& e = s.entry(i);
    os << "param " << e.name << ' ' << e.rows << ' ' << e.cols << ' ' << e.constraint << '\n';
    const auto v = s.view(i);
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      for (Eigen::Index rr = 0; rr < v.rows(); ++rr) os << (c + rr ? " " : "") << io::fmt(v(rr, c));
    os << '\n';
  }
}

inline void read_params(io::TokenReader& r, ad::ParamStore& s) {
  r.expect("params");
  const long n = r.integer();
  if (n != static_cast<long>(s.count()))
    fail(ErrorKind::io, "checkpoint lists " + std::to_string(n) + " parameters, model has " +
                            std::to_string(s.count()));
  for (std::size_t i = 0; i < s.count(); ++i) {
    const auto& e = s.entry(i);
    r.expect("param");
    const std::string name = r.word();
    const long rows = r.integer(), cols = r.integer();
    const std::string constraint = r.word();
    if (name != e.name || rows != e.rows || cols != e.cols || constraint != e.constraint)
      fail(ErrorKind::io, "checkpoint parameter '" + name + "' does not match model parameter '" + e.name + "'");
    auto v = s.view(i);
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      for (Eigen::Index rr = 0; rr < v.rows(); ++rr) v(rr, c) = r.number();
  }
}

}  // namespace detail

inline void save_checkpoint(const DynamicsModel& model, std::ostream& os) {
  os << "phnn-checkpoint 1\n";
  os << "kind " << model.kind() << '\n';
  os << "grid " << model.grid().M << ' ' << io::fmt(model.grid().P) << '\n';
  if (const auto* m = dynamic_cast<const PHNNModel*>(&model)) {
    os << "preset " << m->preset() << '\n';
    os << "system " << to_string(m->system()) << '\n';
    os << "operators " << to_string(m->A.family) << ' ' << to_string(m->S.family) << ' '
       << to_string(m->R.family) << '\n';
    os << "k4 " << m->k4 << '\n';
    os << "dissipation " << m->dissipation << '\n';
    detail::write_deps(os, "force_deps", m->f.deps);
    const int channels = m->H ? m->H->channels : m->V ? m->V->channels : ModelWidths{}.channels;
    const int hidden = m->H ? m->H->hidden : m->V ? m->V->hidden : ModelWidths{}.hidden;
    os << "widths " << channels << ' ' << hidden << ' ' << m->f.width << '\n';
    os << "corrected " << m->corrected << '\n';
    detail::write_vector(os, "vshift", m->vshift);
    detail::write_vector(os, "fshift", m->fshift);
  } else if (const auto* b = dynamic_cast<const BaselineModel*>(&model)) {
    detail::write_deps(os, "inputs", b->inputs);
    os << "widths " << b->widths.hidden1 << ' ' << b->widths.conv_width << ' ' << b->widths.hidden2 << '\n';
  } else {
    fail(ErrorKind::unsupported, "cannot checkpoint model kind '" + model.kind() + "'");
  }
  detail::write_params(os, model.params());
  os << "end\n";
  if (!os) fail(ErrorKind::io, "failed writing checkpoint");
}

inline void save_checkpoint(const DynamicsModel& model, const std::string& path) {
  auto f = io::open_out(path);
  save_checkpoint(model, f);
}

inline std::unique_ptr<DynamicsModel> load_checkpoint(std::istream& is, const std::string& source = "checkpoint") {
  io::TokenReader r(is, source);
  r.expect("phnn-checkpoint");
  if (r.integer() != 1) fail(ErrorKind::io, source + ": unsupported checkpoint version");
  r.expect("kind");
  const std::string kind = r.word();
  r.expect("grid");
  const long M = r.integer();
  const double P = r.number();
  const PeriodicGrid grid = make_grid(static_cast<int>(M), P);
  Rng rng(0);
  std::unique_ptr<DynamicsModel> out;
  if (kind == "phnn") {
    r.expect("preset");
    const std::string preset = r.word();
    r.expect("system");
    const SystemName system = system_from_string(r.word());
    r.expect("operators");
    PhnnArchitecture arch;
    arch.A = operator_family_from_string(r.word());
    arch.S = operator_family_from_string(r.word());
    arch.R = operator_family_from_string(r.word());
    r.expect("k4");
    arch.k4 = static_cast<int>(r.integer());
    r.expect("dissipation");
    const bool dissipation = r.integer() != 0;
    arch.deps = detail::read_deps(r, "force_deps");
    r.expect("widths");
    ModelWidths w;
    w.channels = static_cast<int>(r.integer());
    w.hidden = static_cast<int>(r.integer());
    w.force_width = static_cast<int>(r.integer());
    auto m = std::make_unique<PHNNModel>(preset, system, grid, arch, w, rng);
    m->dissipation = dissipation;
    r.expect("corrected");
    m->corrected = r.integer() != 0;
    m->vshift = detail::read_vector(r, "vshift");
    m->fshift = detail::read_vector(r, "fshift");
    if (m->vshift.size() != M || m->fshift.size() != M)
      fail(ErrorKind::io, source + ": correction shifts do not match the grid");
    detail::read_params(r, m->params());
    out = std::move(m);
  } else if (kind == "baseline") {
    const ForceDeps in = detail::read_deps(r, "inputs");
    r.expect("widths");
    BaselineWidths w;
    w.hidden1 = static_cast<int>(r.integer());
    w.conv_width = static_cast<int>(r.integer());
    w.hidden2 = static_cast<int>(r.integer());
    auto m = std::make_unique<BaselineModel>(grid, in, w, rng);
    detail::read_params(r, m->params());
    out = std::move(m);
  } else {
    fail(ErrorKind::io, source + ": unknown model kind '" + kind + "'");
  }
  r.expect("end");
  return out;
}

inline std::unique_ptr<DynamicsModel> load_checkpoint(const std::string& path) {
  auto f = io::open_in(path);
  return load_checkpoint(f, path);
}

}  // namespace phnn
