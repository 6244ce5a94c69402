// phnn: data generation, training, evaluation and diagnostics.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "phnn/phnn.hpp"

namespace fs = std::filesystem;
using namespace phnn;

namespace {

struct Common {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> preset;
  std::optional<std::string> integrator;
  std::optional<int> epochs;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run configuration file");
  app->add_option("--profile", c.profile, "Named profile (when no config file is given)");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--preset", c.preset, "Model preset: informed, general, lean, nodiss or baseline");
  app->add_option("--integrator", c.integrator, "Training scheme")->check(CLI::IsMember({"midpoint", "srk4"}));
  app->add_option("--epochs", c.epochs, "Training epochs");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    if (!c.profile.empty()) fail(ErrorKind::usage, "give either --config or --profile");
    cfg = load_config_file(c.config);
  } else {
    cfg = profile_config(c.profile.empty() ? RunConfig{}.profile : c.profile);
  }
  if (c.seed) apply_config_entry(cfg, "run.seed", std::to_string(*c.seed));
  if (c.out) cfg.out = *c.out;
  if (c.jobs) cfg.train.jobs = cfg.eval.jobs = *c.jobs;
  if (c.preset) apply_config_entry(cfg, "model.preset", *c.preset);
  if (c.integrator) cfg.train.scheme = scheme_from_string(*c.integrator);
  if (c.epochs) cfg.train.epochs = *c.epochs;
  cfg.check();
  return cfg;
}

fs::path out_dir(const RunConfig& c) {
  const fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory '" + c.out + "': " + ec.message());
  return p;
}

std::string model_type(const DynamicsModel& m) {
  if (m.kind() == "baseline") return "baseline";
  return "phnn-" + m.preset();
}

std::string run_name(const RunConfig& c) {
  return (c.is_baseline() ? std::string("baseline") : "phnn-" + c.preset) + "-seed" + std::to_string(c.train.seed);
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  auto f = io::open_out(p.string());
  body(f);
  if (!f) fail(ErrorKind::io, "failed writing '" + p.string() + "'");
}

// ---- subcommands ------------------------------------------------------------

int cmd_print_config(const RunConfig& c) {
  print_config(c, std::cout);
  return 0;
}

int cmd_generate_data(const RunConfig& c) {
  const auto dir = out_dir(c);
  const Dataset d =
      generate_dataset(c.spec(), c.n_traj, c.dt, c.T, c.seed, c.substeps, c.train.jobs, c.data_scheme);
  write_dataset(d, (dir / "data.txt").string());
  std::cout << "samples " << d.n_states() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, std::string data_path) {
  const auto dir = out_dir(c);
  if (data_path.empty()) data_path = (dir / "data.txt").string();
  const Dataset data = read_dataset(data_path);
  if (data.system != c.system || !(data.grid == c.grid()))
    fail(ErrorKind::config, "dataset '" + data_path + "' does not match the configured system and grid");
  const auto initial = initial_model(c);
  const auto res = train(*initial, data, c.spec(), c.train);
  const std::string name = run_name(c);
  save_checkpoint(*res.model, (dir / (name + ".ckpt")).string());
  write_file(dir / (name + "-report.csv"), [&](std::ostream& os) { res.report.write_csv(os); });
  std::cout << res.report.summary() << '\n';
  return 0;
}

std::vector<std::unique_ptr<DynamicsModel>> load_all(const std::vector<std::string>& paths) {
  std::vector<std::unique_ptr<DynamicsModel>> out;
  for (const auto& p : paths) out.push_back(load_checkpoint(p));
  for (const auto& m : out)
    if (!(m->grid() == out.front()->grid())) fail(ErrorKind::config, "checkpoints were trained on different grids");
  return out;
}

SystemSpec spec_without(const SystemSpec& s, bool force, bool dissipation) {
  SystemSpec out = s;
  if (force) out.force_enabled = false;
  if (dissipation) out.R = ConvKernel::zero();
  return out;
}

int cmd_evaluate(const RunConfig& c, const std::vector<std::string>& paths) {
  if (paths.empty()) fail(ErrorKind::usage, "evaluate needs at least one checkpoint");
  const auto models = load_all(paths);
  if (!(models.front()->grid() == c.grid()))
    fail(ErrorKind::config, "checkpoints do not match the configured grid");
  const auto dir = out_dir(c);
  const SystemSpec spec = c.spec();
  const HeldOutSet states = evaluation_set(spec, c.eval);

  std::map<std::string, std::vector<const DynamicsModel*>> groups;
  for (const auto& m : models) groups[model_type(*m)].push_back(m.get());

  MetricsTable table;
  for (const auto& [type, members] : groups)
    table.rows.push_back(evaluate_ensemble(type, members, states, c.eval.rollout, c.eval.jobs));
  write_file(dir / "metrics.csv", [&](std::ostream& os) { table.write_csv(os); });
  write_file(dir / "metrics_raw.csv", [&](std::ostream& os) { table.write_raw_csv(os); });

  // panels from the first evaluation state
  const Vector& u0 = states.initial.front();
  const Vector x = c.grid().nodes();
  const double t_end = c.eval.t_eval;
  auto reference = [&](const SystemSpec& s) {
    return reference_rollout(GroundTruth(s), u0, 0.0, states.dt, states.steps, c.eval.reference_substeps,
                             c.eval.reference_scheme)
        .final_state();
  };
  auto rollout_final = [&](const DynamicsModel& m) {
    try {
      return model_rollout(m, u0, 0.0, states.dt, states.steps, c.eval.rollout).final_state();
    } catch (const NonConvergenceError&) {
      return Vector(Vector::Constant(u0.size(), std::nan("")));
    }
  };
  auto panel = [&](const std::string& type, const std::string& name, const Vector& ref,
                   const std::vector<Vector>& members) {
    PlotPanel p{name, x, ref, band_or_single(members)};
    write_file(dir / ("panel_" + type + "_" + name + ".csv"), [&](std::ostream& os) { p.write_csv(os); });
  };

  const Vector ref_full = reference(spec);
  const Vector true_force = external_force(spec, ref_full, x, t_end);
  for (const auto& [type, members] : groups) {
    std::vector<Vector> full, force, no_force, no_both;
    for (const auto* m : members) {
      full.push_back(rollout_final(*m));
      if (const auto* b = dynamic_cast<const BaselineModel*>(m)) {
        force.push_back(extract_baseline_force(*b, ref_full)(x, t_end));
      } else if (const auto* p = dynamic_cast<const PHNNModel*>(m)) {
        const auto terms = phnn_terms(*p, ref_full, x, t_end);
        force.push_back(terms.force ? *terms.force : Vector::Zero(x.size()));
        no_force.push_back(rollout_final(ablate(*p, true, false)));
        no_both.push_back(rollout_final(ablate(*p, true, true)));
      }
    }
    panel(type, "full", ref_full, full);
    panel(type, "force", true_force, force);
    if (!no_force.empty()) {
      panel(type, "force_removed", reference(spec_without(spec, true, false)), no_force);
      panel(type, "force_dissipation_removed", reference(spec_without(spec, true, true)), no_both);
    }
  }
  table.write_csv(std::cout);
  return 0;
}

int cmd_rollout(const RunConfig& c, const std::string& ckpt, int ic) {
  const auto m = load_checkpoint(ckpt);
  const auto dir = out_dir(c);
  EvalProtocol p = c.eval;
  p.n_eval_ics = ic + 1;
  const HeldOutSet states = evaluation_set(c.spec(), p);
  const Trajectory tr = model_rollout(*m, states.initial[ic], 0.0, states.dt, states.steps, c.eval.rollout);
  const fs::path path = dir / "rollout.csv";
  write_file(path, [&](std::ostream& os) {
    os << 't';
    for (int i = 0; i < m->grid().M; ++i) os << ",u" << i;
    os << '\n';
    for (Eigen::Index j = 0; j < tr.times.size(); ++j) {
      os << io::fmt(tr.times[j]);
      for (Eigen::Index i = 0; i < tr.states.cols(); ++i) os << ',' << io::fmt(tr.states(j, i));
      os << '\n';
    }
  });
  std::cout << "mse " << io::fmt(nodewise_mse(tr.final_state(), states.target[ic])) << '\n';
  return 0;
}

int cmd_ablate(const std::string& ckpt, bool drop_force, bool drop_dissipation, std::string out) {
  const auto m = load_checkpoint(ckpt);
  const auto* p = dynamic_cast<const PHNNModel*>(m.get());
  if (!p) fail(ErrorKind::unsupported, "the baseline has no separable terms to remove");
  if (!drop_force && !drop_dissipation) fail(ErrorKind::usage, "nothing to remove; pass --drop-force and/or --drop-dissipation");
  if (out.empty()) out = fs::path(ckpt).replace_extension("").string() + "-ablated.ckpt";
  save_checkpoint(ablate(*p, drop_force, drop_dissipation), out);
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_regrid(const RunConfig& c, const std::string& ckpt, int M_new, double t_end) {
  const auto m = load_checkpoint(ckpt);
  const auto dir = out_dir(c);
  const SystemSpec fine = system_spec(c.system, make_grid(M_new, m->grid().P), c.overrides);
  Rng rng = stream(c.eval.seed, evaluation_streams);
  const Vector u0 = sample_initial_condition(fine, rng);
  const Trajectory tr = regrid_rollout(*m, fine, u0, t_end, c.eval.dt, c.eval.rollout);
  const Vector ref = reference_rollout(GroundTruth(fine), u0, 0.0, c.eval.dt, step_count(t_end, c.eval.dt, "regrid"),
                                       c.eval.reference_substeps, c.eval.reference_scheme)
                         .final_state();
  const Vector x = fine.grid.nodes(), u = tr.final_state();
  write_file(dir / ("regrid_M" + std::to_string(M_new) + ".csv"), [&](std::ostream& os) {
    os << "x,reference,model\n";
    for (int i = 0; i < M_new; ++i) os << io::fmt(x[i]) << ',' << io::fmt(ref[i]) << ',' << io::fmt(u[i]) << '\n';
  });
  std::cout << "mse " << io::fmt(nodewise_mse(u, ref)) << '\n';
  return 0;
}

int cmd_theorem_check(int dims, int N, double dt, double p, std::uint64_t seed) {
  if (dims < 1) fail(ErrorKind::config, "dims must be at least 1");
  Rng rng = stream(seed, 0);
  std::normal_distribution<double> n01;
  auto randn = [&](int r, int c) {
    Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = n01(rng);
    return m;
  };
  const Matrix W = randn(dims, dims) / std::sqrt(double(dims)), V = randn(dims, dims) / std::sqrt(double(dims));
  const Vector b = randn(dims, 1), u0 = randn(dims, 1);
  const auto g = [&](const Vector& u) { return Vector((W * u + b).array().tanh()); };
  const auto gt = [&](const Vector& u) { return Vector(V * u); };
  const IdentityCheck r = theorem_identity_check(g, gt, u0, N, dt, p);
  const double tol = 1e-10 * std::max(r.lhs, 1.0);
  std::printf("lhs %.17g\nrhs %.17g\ngap %.3e\n%s\n", r.lhs, r.rhs, r.gap(), r.gap() <= tol ? "PASS" : "FAIL");
  return r.gap() <= tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-Hamiltonian neural networks for 1-D periodic PDEs"};
  app.require_subcommand(1);
  Common common;

  auto* print = app.add_subcommand("print-config", "Print the resolved configuration");
  add_common(print, common);

  auto* gen = app.add_subcommand("generate-data", "Generate a training dataset");
  add_common(gen, common);

  auto* tr = app.add_subcommand("train", "Train one model");
  add_common(tr, common);
  std::string data_path;
  tr->add_option("--data", data_path, "Dataset file (default <out>/data.txt)");

  auto* ev = app.add_subcommand("evaluate", "Score checkpoints and export plot data");
  add_common(ev, common);
  std::vector<std::string> ckpts;
  ev->add_option("checkpoints", ckpts, "Checkpoint files")->required();

  auto* ro = app.add_subcommand("rollout", "Roll a checkpoint out from an evaluation state");
  add_common(ro, common);
  std::string ckpt;
  int ic = 0;
  ro->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  ro->add_option("--ic", ic, "Evaluation state index")->check(CLI::NonNegativeNumber);

  auto* ab = app.add_subcommand("ablate", "Remove the force and/or dissipation term");
  std::string ab_out;
  bool drop_force = false, drop_diss = false;
  ab->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  ab->add_flag("--drop-force", drop_force, "Remove the external force");
  ab->add_flag("--drop-dissipation", drop_diss, "Remove the dissipation term");
  ab->add_option("--out", ab_out, "Output checkpoint");

  auto* rg = app.add_subcommand("regrid", "Roll an informed model out on another grid");
  add_common(rg, common);
  int M_new = 0;
  double t_end = 1.0;
  rg->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  rg->add_option("--M", M_new, "Grid size")->required();
  rg->add_option("--t-end", t_end, "Final time");

  auto* th = app.add_subcommand("theorem-check", "Check the one-step error identity on a random instance");
  int dims = 8, N = 20;
  double dt = 0.1, p = 2.0;
  std::uint64_t th_seed = 0;
  th->add_option("--dims", dims, "State dimension");
  th->add_option("--N", N, "Number of steps");
  th->add_option("--dt", dt, "Step size");
  th->add_option("--p", p, "Norm exponent");
  th->add_option("--seed", th_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*th) return cmd_theorem_check(dims, N, dt, p, th_seed);
    if (*ab) return cmd_ablate(ckpt, drop_force, drop_diss, ab_out);
    const RunConfig cfg = resolve(common);
    if (*print) return cmd_print_config(cfg);
    if (*gen) return cmd_generate_data(cfg);
    if (*tr) return cmd_train(cfg, data_path);
    if (*ev) return cmd_evaluate(cfg, ckpts);
    if (*ro) return cmd_rollout(cfg, ckpt, ic);
    if (*rg) return cmd_regrid(cfg, ckpt, M_new, t_end);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
