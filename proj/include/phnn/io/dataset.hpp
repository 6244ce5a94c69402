#pragma once

// Dataset files: a text manifest followed by one CSV row per state.

#include <istream>
#include <ostream>
#include <string>

#include "phnn/integrate.hpp"
#include "phnn/io/text.hpp"

namespace phnn {

inline void write_dataset(const Dataset& d, std::ostream& os) {
  os << "phnn-dataset 1\n";
  os << "system " << to_string(d.system) << '\n';
  os << "M " << d.grid.M << '\n';
  os << "P " << io::fmt(d.grid.P) << '\n';
  os << "dt " << io::fmt(d.dt) << '\n';
  os << "n_samples " << d.n_states() << '\n';
  os << "n_traj " << d.trajectories.size() << '\n';
  os << "seed " << d.seed << '\n';
  os << "substeps " << d.substeps << '\n';
  os << "scheme " << to_string(d.scheme) << '\n';
  os << "trajectory_id,t";
  for (int i = 0; i < d.grid.M; ++i) os << ",u" << i;
  os << '\n';
  for (std::size_t k = 0; k < d.trajectories.size(); ++k) {
    const auto& tr = d.trajectories[k];
    for (Eigen::Index j = 0; j < tr.times.size(); ++j) {
      os << k << ',' << io::fmt(tr.times[j]);
      for (Eigen::Index i = 0; i < tr.states.cols(); ++i) os << ',' << io::fmt(tr.states(j, i));
      os << '\n';
    }
  }
  if (!os) fail(ErrorKind::io, "failed writing dataset");
}

inline void write_dataset(const Dataset& d, const std::string& path) {
  auto f = io::open_out(path);
  write_dataset(d, f);
}

inline Dataset read_dataset(std::istream& is, const std::string& source = "dataset") {
  std::string line;
  int line_no = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(is, line)) fail(ErrorKind::io, source + ": unexpected end of file");
    ++line_no;
    return io::split(line);
  };
  auto field = [&](const char* key) {
    const auto tok = next();
    if (tok.size() != 2 || tok[0] != key)
      fail(ErrorKind::io, source + ":" + std::to_string(line_no) + ": expected '" + key + " <value>'");
    return tok[1];
  };
  const auto head = next();
  if (head.size() != 2 || head[0] != "phnn-dataset") fail(ErrorKind::io, source + ": not a dataset file");
  if (head[1] != "1") fail(ErrorKind::io, source + ": unsupported dataset version " + head[1]);
  Dataset d;
  d.system = system_from_string(field("system"));
  const long M = io::parse_int(field("M"), source);
  const double P = io::parse_double(field("P"), source);
  d.grid = make_grid(static_cast<int>(M), P);
  d.dt = io::parse_double(field("dt"), source);
  const long n_samples = io::parse_int(field("n_samples"), source);
  const long n_traj = io::parse_int(field("n_traj"), source);
  d.seed = io::parse_u64(field("seed"), source);
  d.substeps = static_cast<int>(io::parse_int(field("substeps"), source));
  d.scheme = scheme_from_string(field("scheme"));
  if (n_samples < 0 || n_traj < 0) fail(ErrorKind::io, source + ": negative counts");

  std::getline(is, line);
  ++line_no;
  std::vector<std::vector<double>> times(n_traj);
  std::vector<std::vector<Vector>> rows(n_traj);
  for (long s = 0; s < n_samples; ++s) {
    if (!std::getline(is, line)) fail(ErrorKind::io, source + ": fewer rows than n_samples");
    ++line_no;
    const auto tok = io::split(line, ',');
    const std::string where = source + ":" + std::to_string(line_no);
    if (static_cast<long>(tok.size()) != M + 2) fail(ErrorKind::io, where + ": expected " + std::to_string(M + 2) + " columns");
    const long k = io::parse_int(tok[0], where);
    if (k < 0 || k >= n_traj) fail(ErrorKind::io, where + ": trajectory id out of range");
    times[k].push_back(io::parse_double(tok[1], where));
    Vector u(M);
    for (long i = 0; i < M; ++i) u[i] = io::parse_double(tok[i + 2], where);
    rows[k].push_back(std::move(u));
  }
  for (long k = 0; k < n_traj; ++k) {
    Trajectory tr;
    const auto n = static_cast<Eigen::Index>(times[k].size());
    if (n < 2) fail(ErrorKind::io, source + ": trajectory " + std::to_string(k) + " has fewer than two states");
    tr.times = Eigen::Map<const Vector>(times[k].data(), n);
    tr.states.resize(n, M);
    for (Eigen::Index j = 0; j < n; ++j) tr.states.row(j) = rows[k][j].transpose();
    d.trajectories.push_back(std::move(tr));
  }
  return d;
}

inline Dataset read_dataset(const std::string& path) {
  auto f = io::open_in(path);
  return read_dataset(f, path);
}

}  // namespace phnn
