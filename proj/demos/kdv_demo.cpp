// Trains an informed PHNN and a baseline on KdV-Burgers data, scores both on
// held-out initial states and prints the final profiles of one rollout.
//
//   demo_kdv [epochs] [M]

#include <cstdlib>
#include <iostream>

#include "phnn/phnn.hpp"

using namespace phnn;

namespace {

std::string label(const DynamicsModel& m) { return m.kind() == "baseline" ? "baseline" : "phnn-" + m.preset(); }

}  // namespace

int main(int argc, char** argv) {
  RunConfig c = profile_config("kdvburgers-desk");
  c.train.epochs = argc > 1 ? std::atoi(argv[1]) : 200;
  if (argc > 2) c.M = std::atoi(argv[2]);
  c.train.val_every = std::max(1, c.train.epochs / 10);

  try {
    const SystemSpec spec = c.spec();
    const Dataset data = generate_dataset(spec, c.n_traj, c.dt, c.T, c.seed, c.substeps, 1, c.data_scheme);
    std::cout << "data: " << c.n_traj << " trajectories, M " << c.M << ", dt " << c.dt << '\n';

    const HeldOutSet held = evaluation_set(spec, c.eval);
    MetricsTable table;
    std::vector<std::unique_ptr<DynamicsModel>> models;
    for (const std::string preset : {"informed", "baseline"}) {
      c.preset = preset;
      auto res = train(*initial_model(c), data, spec, c.train);
      std::cout << preset << ": " << res.report.summary() << '\n';
      table.rows.push_back(evaluate_ensemble(label(*res.model), {res.model.get()}, held, c.eval.rollout));
      models.push_back(std::move(res.model));
    }
    table.write_csv(std::cout);

    const Vector& u0 = held.initial.front();
    std::cout << "x,u0,truth";
    for (const auto& m : models) std::cout << ',' << label(*m);
    std::cout << '\n';
    std::vector<Vector> finals;
    for (const auto& m : models)
      finals.push_back(model_rollout(*m, u0, 0.0, held.dt, held.steps, c.eval.rollout).final_state());
    for (Eigen::Index i = 0; i < u0.size(); ++i) {
      std::cout << io::fmt_short(spec.grid.x(static_cast<int>(i))) << ',' << io::fmt_short(u0(i)) << ','
                << io::fmt_short(held.target.front()(i));
      for (const auto& f : finals) std::cout << ',' << io::fmt_short(f(i));
      std::cout << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  }
  return 0;
}
