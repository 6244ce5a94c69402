#pragma once

// Run configuration: flat "key = value" entries grouped in [sections].
// A file may name a profile under [run]; its values are applied first and
// every other entry overrides them.

#include <array>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "phnn/analysis.hpp"
#include "phnn/io/text.hpp"
#include "phnn/model/baseline.hpp"
#include "phnn/model/phnn.hpp"
#include "phnn/pdezoo.hpp"
#include "phnn/train.hpp"

namespace phnn {

struct RunConfig {
  std::string profile = "kdvburgers-desk";
  SystemName system = SystemName::kdvburgers;
  std::map<std::string, double> overrides;  // physical parameters and `force`
  std::uint64_t seed = 0;
  std::string out = "run";

  int M = 50;
  double P = 20.0;

  int n_traj = 5;
  double dt = 0.05;
  double T = 2.0;
  int substeps = 100;
  SchemeId data_scheme = SchemeId::srk4;

  std::string preset = "informed";
  std::optional<std::array<int, 4>> k;  // overrides the preset's operator sizes
  ModelWidths widths;
  BaselineWidths baseline;
  ForceDeps baseline_inputs{true, true, true};

  TrainConfig train;
  EvalProtocol eval;

  PeriodicGrid grid() const { return make_grid(M, P); }
  SystemSpec spec() const { return system_spec(system, grid(), overrides); }
  bool is_baseline() const { return preset == "baseline"; }

  void check() const {
    grid();
    spec();
    if (n_traj < 1) fail(ErrorKind::config, "n_traj must be at least 1");
    if (substeps < 1) fail(ErrorKind::config, "substeps must be at least 1");
    step_count(T, dt, "dataset");
    if (!is_baseline()) canonical_preset(preset);
    if (k) architecture_from_sizes(*k, {});
    if (widths.channels < 1 || widths.hidden < 1 || widths.force_width < 1)
      fail(ErrorKind::config, "network widths must be positive");
    if (baseline.hidden1 < 1 || baseline.hidden2 < 1 || baseline.conv_width < 1 || baseline.conv_width % 2 == 0)
      fail(ErrorKind::config, "baseline widths must be positive and the convolution width odd");
    train.check();
    eval.check();
    if (train.rollout.substeps < 1) fail(ErrorKind::config, "rollout substeps must be at least 1");
  }
};

/// Initial model for a run. Weights come from the training seed.
inline std::unique_ptr<DynamicsModel> initial_model(const RunConfig& c) {
  Rng rng = stream(c.train.seed, 1);
  if (c.is_baseline()) return std::make_unique<BaselineModel>(c.grid(), c.baseline_inputs, c.baseline, rng);
  if (c.k) {
    const auto deps = phnn_preset(c.preset, c.system).deps;
    return std::make_unique<PHNNModel>(build_phnn(*c.k, c.widths, deps, c.system, c.grid(), rng));
  }
  return std::make_unique<PHNNModel>(build_phnn_preset(c.preset, c.system, c.grid(), c.widths, rng));
}

namespace detail {

struct ConfigField {
  std::string key;  // section.name
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string bool_str(bool b) { return b ? "1" : "0"; }

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  fail(ErrorKind::config, key + ": expected 0 or 1, got '" + s + "'");
}

inline int to_int(const std::string& s, const std::string& key) {
  try {
    return static_cast<int>(io::parse_int(s, key));
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

inline double to_double(const std::string& s, const std::string& key) {
  try {
    return io::parse_double(s, key);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

inline std::uint64_t to_u64(const std::string& s, const std::string& key) {
  try {
    return io::parse_u64(s, key);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

inline const std::vector<ConfigField>& config_fields() {
  using C = RunConfig;
  using S = const std::string&;
  auto I = [](int C::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return std::to_string(c.*m); },
                       [m, key](C& c, S v) { c.*m = to_int(v, key); }};
  };
  auto D = [](double C::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return io::fmt_short(c.*m); },
                       [m, key](C& c, S v) { c.*m = to_double(v, key); }};
  };
  auto TI = [](int TrainConfig::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return std::to_string(c.train.*m); },
                       [m, key](C& c, S v) { c.train.*m = to_int(v, key); }};
  };
  auto TD = [](double TrainConfig::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return io::fmt_short(c.train.*m); },
                       [m, key](C& c, S v) { c.train.*m = to_double(v, key); }};
  };
  auto AD = [](double AdamConfig::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return io::fmt_short(c.train.adam.*m); },
                       [m, key](C& c, S v) { c.train.adam.*m = to_double(v, key); }};
  };
  auto SCH = [](SchemeId C::*m, std::string key) {
    return ConfigField{key, [m](const C& c) { return std::string(to_string(c.*m)); },
                       [m](C& c, S v) { c.*m = scheme_from_string(v); }};
  };
  static const std::vector<ConfigField> fields = {
      {"run.profile", [](const C& c) { return c.profile; }, [](C& c, S v) { c.profile = v; }},
      {"run.system", [](const C& c) { return std::string(to_string(c.system)); },
       [](C& c, S v) { c.system = system_from_string(v); }},
      {"run.seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, S v) { c.seed = c.train.seed = c.eval.seed = to_u64(v, "run.seed"); }},
      {"run.out", [](const C& c) { return c.out; }, [](C& c, S v) { c.out = v; }},
      I(&C::M, "grid.M"),
      D(&C::P, "grid.P"),
      I(&C::n_traj, "data.n_traj"),
      D(&C::dt, "data.dt"),
      D(&C::T, "data.T"),
      I(&C::substeps, "data.substeps"),
      SCH(&C::data_scheme, "data.scheme"),
      {"model.preset", [](const C& c) { return c.preset; },
       [](C& c, S v) { c.preset = v == "baseline" ? v : canonical_preset(v); }},
      {"model.k",
       [](const C& c) {
         if (!c.k) return std::string("auto");
         const auto& k = *c.k;
         return std::to_string(k[0]) + " " + std::to_string(k[1]) + " " + std::to_string(k[2]) + " " +
                std::to_string(k[3]);
       },
       [](C& c, S v) {
         if (v == "auto") {
           c.k.reset();
           return;
         }
         const auto tok = io::split(v);
         if (tok.size() != 4) fail(ErrorKind::config, "model.k: expected four integers or 'auto'");
         std::array<int, 4> k{};
         for (int i = 0; i < 4; ++i) k[i] = to_int(tok[i], "model.k");
         c.k = k;
       }},
      {"model.channels", [](const C& c) { return std::to_string(c.widths.channels); },
       [](C& c, S v) { c.widths.channels = to_int(v, "model.channels"); }},
      {"model.hidden", [](const C& c) { return std::to_string(c.widths.hidden); },
       [](C& c, S v) { c.widths.hidden = to_int(v, "model.hidden"); }},
      {"model.force_width", [](const C& c) { return std::to_string(c.widths.force_width); },
       [](C& c, S v) { c.widths.force_width = to_int(v, "model.force_width"); }},
      {"model.baseline_hidden1", [](const C& c) { return std::to_string(c.baseline.hidden1); },
       [](C& c, S v) { c.baseline.hidden1 = to_int(v, "model.baseline_hidden1"); }},
      {"model.baseline_conv_width", [](const C& c) { return std::to_string(c.baseline.conv_width); },
       [](C& c, S v) { c.baseline.conv_width = to_int(v, "model.baseline_conv_width"); }},
      {"model.baseline_hidden2", [](const C& c) { return std::to_string(c.baseline.hidden2); },
       [](C& c, S v) { c.baseline.hidden2 = to_int(v, "model.baseline_hidden2"); }},
      {"model.baseline_inputs",
       [](const C& c) {
         const auto& d = c.baseline_inputs;
         return bool_str(d.u) + " " + bool_str(d.x) + " " + bool_str(d.t);
       },
       [](C& c, S v) {
         const auto tok = io::split(v);
         if (tok.size() != 3) fail(ErrorKind::config, "model.baseline_inputs: expected three flags (u x t)");
         c.baseline_inputs = {parse_bool(tok[0], "model.baseline_inputs"), parse_bool(tok[1], "model.baseline_inputs"),
                              parse_bool(tok[2], "model.baseline_inputs")};
       }},
      TI(&TrainConfig::epochs, "train.epochs"),
      TI(&TrainConfig::batch_size, "train.batch_size"),
      AD(&AdamConfig::learning_rate, "train.learning_rate"),
      AD(&AdamConfig::beta1, "train.beta1"),
      AD(&AdamConfig::beta2, "train.beta2"),
      AD(&AdamConfig::eps, "train.eps"),
      {"train.scheme", [](const C& c) { return std::string(to_string(c.train.scheme)); },
       [](C& c, S v) { c.train.scheme = scheme_from_string(v); }},
      TI(&TrainConfig::n_val, "train.n_val"),
      TD(&TrainConfig::t_val, "train.t_val"),
      TD(&TrainConfig::val_dt, "train.val_dt"),
      TI(&TrainConfig::val_every, "train.val_every"),
      TD(&TrainConfig::force_penalty, "train.force_penalty"),
      {"train.seed", [](const C& c) { return std::to_string(c.train.seed); },
       [](C& c, S v) { c.train.seed = to_u64(v, "train.seed"); }},
      {"rollout.scheme", [](const C& c) { return std::string(to_string(c.train.rollout.scheme)); },
       [](C& c, S v) { c.eval.rollout.scheme = c.train.rollout.scheme = scheme_from_string(v); }},
      {"rollout.substeps", [](const C& c) { return std::to_string(c.train.rollout.substeps); },
       [](C& c, S v) { c.eval.rollout.substeps = c.train.rollout.substeps = to_int(v, "rollout.substeps"); }},
      {"rollout.tol", [](const C& c) { return io::fmt_short(c.train.rollout.step.tol); },
       [](C& c, S v) { c.eval.rollout.step.tol = c.train.rollout.step.tol = to_double(v, "rollout.tol"); }},
      {"rollout.max_iter", [](const C& c) { return std::to_string(c.train.rollout.step.max_iter); },
       [](C& c, S v) { c.eval.rollout.step.max_iter = c.train.rollout.step.max_iter = to_int(v, "rollout.max_iter"); }},
      {"rollout.newton", [](const C& c) { return bool_str(c.train.rollout.step.newton); },
       [](C& c, S v) { c.eval.rollout.step.newton = c.train.rollout.step.newton = parse_bool(v, "rollout.newton"); }},
      {"eval.n_ics", [](const C& c) { return std::to_string(c.eval.n_eval_ics); },
       [](C& c, S v) { c.eval.n_eval_ics = to_int(v, "eval.n_ics"); }},
      {"eval.t_eval", [](const C& c) { return io::fmt_short(c.eval.t_eval); },
       [](C& c, S v) { c.eval.t_eval = to_double(v, "eval.t_eval"); }},
      {"eval.dt", [](const C& c) { return io::fmt_short(c.eval.dt); }, [](C& c, S v) { c.eval.dt = to_double(v, "eval.dt"); }},
      {"eval.reference_substeps", [](const C& c) { return std::to_string(c.eval.reference_substeps); },
       [](C& c, S v) { c.eval.reference_substeps = to_int(v, "eval.reference_substeps"); }},
      {"eval.reference_scheme", [](const C& c) { return std::string(to_string(c.eval.reference_scheme)); },
       [](C& c, S v) { c.eval.reference_scheme = scheme_from_string(v); }},
      {"eval.seed", [](const C& c) { return std::to_string(c.eval.seed); },
       [](C& c, S v) { c.eval.seed = to_u64(v, "eval.seed"); }},
  };
  return fields;
}

inline const ConfigField* find_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace detail

inline std::vector<std::string> profile_names() {
  std::vector<std::string> out;
  for (const char* s : {"kdvburgers", "bbm", "peronamalik", "cahnhilliard"})
    for (const char* scale : {"desk", "paper"}) out.push_back(std::string(s) + "-" + scale);
  return out;
}

/// Named defaults. Desk profiles shrink grids and epoch counts; paper profiles
/// follow the published protocols.
inline RunConfig profile_config(const std::string& name) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) fail(ErrorKind::config, "unknown profile '" + name + "'");
  const std::string scale = name.substr(dash + 1);
  if (scale != "desk" && scale != "paper") fail(ErrorKind::config, "unknown profile '" + name + "'");
  const bool paper = scale == "paper";
  RunConfig c;
  c.profile = name;
  c.system = system_from_string(name.substr(0, dash));
  c.P = default_period(c.system);
  c.M = paper ? 100 : 50;
  c.train.rollout = RolloutOptions{};
  switch (c.system) {
    case SystemName::kdvburgers:
      c.n_traj = paper ? 10 : 5;
      c.dt = 0.05;
      c.T = 2.0;
      c.substeps = 1;
      c.data_scheme = SchemeId::midpoint;
      c.train.scheme = SchemeId::midpoint;
      c.train.epochs = paper ? 20000 : 2000;
      c.train.n_val = 3;
      c.train.t_val = 1.0;
      c.train.val_every = paper ? 1 : 50;
      c.eval.t_eval = 1.0;
      c.eval.dt = 0.05;
      break;
    case SystemName::bbm:
      c.n_traj = 10;
      c.dt = 0.4;
      c.T = 10.0;
      c.substeps = 1;
      c.data_scheme = SchemeId::midpoint;
      c.train.scheme = SchemeId::midpoint;
      c.train.epochs = paper ? 50000 : 2000;
      c.train.n_val = 3;
      c.train.t_val = 1.2;
      c.train.val_every = paper ? 1 : 50;
      c.eval.t_eval = 2.0;
      c.eval.dt = 0.4;
      break;
    case SystemName::peronamalik:
      c.n_traj = 10;
      c.dt = 0.02;
      c.T = 0.02;
      c.substeps = 100;
      c.train.scheme = SchemeId::srk4;
      c.train.epochs = 1000;
      c.train.n_val = 3;
      c.train.t_val = 0.02;
      c.train.val_every = paper ? 1 : 10;
      c.eval.t_eval = 0.02;
      c.eval.dt = 0.02;
      c.train.rollout.scheme = SchemeId::srk4;
      break;
    case SystemName::cahnhilliard:
      c.n_traj = paper ? 100 : 20;
      c.dt = 0.004;
      c.T = 0.008;
      c.substeps = paper ? 2000 : 200;
      c.train.scheme = SchemeId::midpoint;
      c.train.epochs = paper ? 5000 : 1000;
      c.train.n_val = 5;
      c.train.t_val = 0.008;
      c.train.val_every = paper ? 1 : 20;
      c.eval.t_eval = 0.02;
      c.eval.dt = 0.004;
      break;
  }
  c.eval.reference_substeps = c.substeps;
  c.eval.reference_scheme = c.data_scheme;
  c.eval.rollout = c.train.rollout;
  return c;
}

/// key -> value pairs from an INI-like stream; section names prefix keys.
inline std::vector<std::pair<std::string, std::string>> parse_config_entries(std::istream& is,
                                                                             const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line, section;
  for (int n = 1; std::getline(is, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(n);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::config, where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, where + ": expected 'key = value'");
    if (section.empty()) fail(ErrorKind::config, where + ": entry outside a section");
    out.emplace_back(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

/// Applies one "section.key" entry. [system] keys are physical overrides.
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key.rfind("system.", 0) == 0) {
    const std::string name = key.substr(7);
    c.overrides[name] = detail::to_double(value, key);
    return;
  }
  const auto* f = detail::find_field(key);
  if (!f) fail(ErrorKind::config, "unknown config key '" + key + "'");
  f->set(c, value);
}

inline RunConfig load_config(std::istream& is, const std::string& source = "config") {
  const auto entries = parse_config_entries(is, source);
  std::string profile = RunConfig{}.profile;
  bool named = false;
  for (const auto& [k, v] : entries)
    if (k == "run.profile") profile = v, named = true;
  if (!named)
    for (const auto& [k, v] : entries)
      if (k == "run.system") profile = v + "-desk";
  RunConfig c = profile_config(profile);
  // run.* first so a [train] or [eval] seed overrides the master seed
  for (const auto& [k, v] : entries)
    if (k.rfind("run.", 0) == 0 && k != "run.profile") apply_config_entry(c, k, v);
  for (const auto& [k, v] : entries)
    if (k.rfind("run.", 0) != 0) apply_config_entry(c, k, v);
  c.check();
  return c;
}

inline RunConfig load_config_file(const std::string& path) {
  auto f = io::open_in(path);
  return load_config(f, path);
}

/// Writes every key; the output loads back to the same configuration.
inline void print_config(const RunConfig& c, std::ostream& os) {
  std::string section;
  for (const auto& f : detail::config_fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << f.key.substr(dot + 1) << " = " << f.get(c) << '\n';
    if (f.key == "run.out") {
      os << "\n[system]\n";
      const SystemSpec spec = system_spec(c.system, make_grid(8, c.P), c.overrides);
      for (const auto& [k, v] : spec.params) os << k << " = " << io::fmt_short(v) << '\n';
      os << "force = " << (spec.force_enabled ? 1 : 0) << '\n';
    }
  }
}

}  // namespace phnn
