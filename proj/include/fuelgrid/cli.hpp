#pragma once

#include "fuelgrid/benchmarks.hpp"
#include "fuelgrid/simulate.hpp"
#include "fuelgrid/suite.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fuelgrid {

enum class RunMode { Solve, Simulate, Verify, Bench };

RunMode parse_mode(const std::string& name);
std::string to_string(RunMode mode);

struct PolicySource {
  std::string type = "extracted";  // extracted | zero | stop_at_step | file
  int step = 0;
  std::string path;
};

struct SimulationSettings {
  std::size_t n_paths = 10'000;
  SimulationOptions options;
  std::size_t csv_paths = 1'000;    // paths written to the long-format CSV
  std::size_t mtrace_paths = 100;   // paths written to the M-trace CSV
  bool binary = false;
};

struct BenchSettings {
  std::vector<std::string> instances;  // empty means the whole gallery
  std::string refinement_instance = "stopping_only";
  std::vector<double> spacings{0.2, 0.1, 0.05, 0.025};
  double dt_ratio = 2.0;
  std::size_t n_paths = 10'000;
};

/// Everything one run needs; built from the JSON config plus CLI overrides.
struct RunConfig {
  RunMode mode = RunMode::Solve;
  std::optional<BenchmarkInstance> instance;  // absent only in bench mode
  SolverOptions solver;
  SimulationSettings simulation;
  PolicySource policy;
  SuiteSettings verify;
  BenchSettings bench;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Throws ConfigError naming the offending field.
RunConfig parse_run_config(const Json& j, RunMode mode);

/// Exit status: 0 success, 1 verification failure, 2 config error, 3 numerical or runtime failure.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// `fuelgrid <mode> --config <path> [--out <dir>] [--seed N] [--threads N]`
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace fuelgrid
