#pragma once

#include "fuelgrid/controls.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace fuelgrid {

/// One simulated trajectory.
struct PathRecord {
  Matrix noise;              // d' x n, increments already scaled by sqrt(dt)
  Matrix states;             // d x (n+1)
  std::vector<double> fuel;  // n+1
  std::vector<int> actions;  // n
  BVControlPath control;
  EtaPath eta;
  int tau_step = 0;
  int rho_step = 0;
};

struct PathBundle {
  TimeGrid grid;
  std::uint64_t seed = 0;
  std::vector<PathRecord> paths;

  std::size_t n_paths() const { return paths.size(); }
};

enum class NoiseConstruction {
  Direct,          // iid Gaussian increments
  BrownianBridge,  // endpoint first, then recursive midpoint refinement
};

struct SimulationOptions {
  NoiseConstruction construction = NoiseConstruction::Direct;
  bool antithetic = false;  // odd paths reuse the previous path's noise, negated
  TruncationMode truncation = TruncationMode::Strict;
  int threads = 1;
};

/// Noise increments for one path. Each path owns a substream keyed by
/// (seed, path index, construction), so results do not depend on threading.
Matrix generate_noise(int noise_dim, const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                      const SimulationOptions& options = {});

/// First step k with (X[k], Z[k]) outside the domain, or n_steps.
int exit_step(const ProblemSpec& spec, const Matrix& states, const std::vector<double>& fuel);
std::vector<int> exit_time(const PathBundle& bundle, const ProblemSpec& spec);

/// Simulate one path on given noise. `path_index` only labels errors.
PathRecord simulate_path(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                         const TimeGrid& grid, Matrix noise, TruncationMode truncation, std::size_t path_index = 0);

/// Euler-Maruyama simulation of the controlled state with left-point controls.
PathBundle simulate_paths(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                          const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options = {});

/// Streaming variant: paths are handed to `visit` in index order and not kept.
void for_each_path(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                   const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options,
                   const std::function<void(std::size_t, const PathRecord&)>& visit);

/// Long format: one row per (path, step).
void write_paths_csv(std::ostream& os, const PathBundle& bundle);
/// One row per path: path, tau_step, rho_step, tau, rho, terminal state and fuel.
void write_path_summary_csv(std::ostream& os, const PathBundle& bundle);

/// Little-endian dump, layout in docs/formats.md.
void write_bundle_binary(std::ostream& os, const PathBundle& bundle);
PathBundle read_bundle_binary(std::istream& is);

}  // namespace fuelgrid
