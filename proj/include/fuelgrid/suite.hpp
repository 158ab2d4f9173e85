#pragma once

#include "fuelgrid/benchmarks.hpp"
#include "fuelgrid/verify.hpp"

#include <cstdint>
#include <vector>

namespace fuelgrid {

/// Knobs of the verification suite. Statistical levels and tolerances are
/// the defaults the acceptance tests use.
struct SuiteSettings {
  std::uint64_t seed = 1;
  int threads = 1;
  SolverOptions solver;

  double tol_residual = 1e-12;    // one-step residual, martingale gaps
  double tol_dpp = 1e-9;          // multi-step and hitting-time DPP
  double tol_identity = 1e-12;    // Gamma = Lambda
  double z_level = 3.0;           // Monte Carlo checks use z_level standard errors
  double ks_alpha = 0.01;
  double mc_bias = 0.5;           // Monte Carlo martingale check allows mc_bias * (h + dt) of drift

  std::size_t random_policies = 100;
  std::size_t mc_paths = 10'000;
  std::size_t invariance_paths = 10'000;
  std::size_t continuity_paths = 2'000;
  std::size_t concatenation_paths = 20'000;
  std::vector<int> concatenation_m{10, 100};
  std::uint64_t max_tree_nodes = 20'000'000;
};

/// Solve the instance, then run every applicable check on it.
VerificationSuiteReport run_verification_suite(const BenchmarkInstance& instance, const SuiteSettings& settings);

/// Bins of consecutive interior nodes at one step: blocks of `state_width`
/// nodes per axis and `fuel_width` fuel levels. The representative is the
/// block's middle state at its highest fuel level.
struct NodeBins {
  std::vector<std::vector<NodeRef>> bins;
  std::vector<NodeRef> representatives;
};
NodeBins block_bins(const Lattice& lattice, int state_width, int fuel_width);

}  // namespace fuelgrid
