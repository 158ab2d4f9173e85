#pragma once

#include "fuelgrid/config.hpp"
#include "fuelgrid/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fuelgrid {

/// A problem together with the lattice and start point it is meant to be
/// solved on. `config` is the JSON the problem was built from.
struct BenchmarkInstance {
  std::string name;
  Json config;
  ProblemSpec spec;
  LatticeSpec lattice;
  Vector x0;
  double z0 = 0.0;
};

/// Build an instance from a run-config style object with "problem",
/// "lattice" and "initial" blocks.
BenchmarkInstance instance_from_json(const Json& j, const std::string& name);

/// stopping_only, pure_drift_follower, finite_fuel_follower, exit_domain.
std::vector<BenchmarkInstance> benchmark_gallery();
BenchmarkInstance gallery_instance(const std::string& name);

/// Small random instance for exhaustive oracles: 1-D, 4 time steps, 7 states,
/// at most 3 fuel levels and 2 actions.
BenchmarkInstance random_oracle_instance(std::uint64_t seed);

struct RefinementLevel {
  double h = 0.0;
  double dt = 0.0;
  int n_steps = 0;
  double value = 0.0;   // v at the start node
  double change = 0.0;  // |v - v at the previous level|, 0 on the first
  double seconds = 0.0;
};

struct RefinementStudy {
  std::vector<RefinementLevel> levels;
  double extrapolated = 0.0;  // 2 v_finest - v_previous
  double constant = 0.0;      // max |v_h - extrapolated| / (h + dt) over the coarser levels
  bool shrinking = false;     // every change strictly smaller than the one before
};

/// Solve on lattices with spacing h and time step dt = dt_ratio * h^2
/// (rounded to an integer step count) for each h, coarse to fine.
RefinementStudy refinement_study(const BenchmarkInstance& instance, const std::vector<double>& spacings,
                                 double dt_ratio);

void write_refinement_csv(std::ostream& os, const RefinementStudy& study);

}  // namespace fuelgrid
