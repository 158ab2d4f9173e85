#include "fuelgrid/cli.hpp"

#include "fuelgrid/io.hpp"
#include "fuelgrid/payoff.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fuelgrid {

namespace fs = std::filesystem;
using namespace config;

RunMode parse_mode(const std::string& name) {
  if (name == "solve") return RunMode::Solve;
  if (name == "simulate") return RunMode::Simulate;
  if (name == "verify") return RunMode::Verify;
  if (name == "bench") return RunMode::Bench;
  throw ConfigError("mode: unknown mode '" + name + "' (solve, simulate, verify, bench)");
}

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Solve: return "solve";
    case RunMode::Simulate: return "simulate";
    case RunMode::Verify: return "verify";
    case RunMode::Bench: return "bench";
  }
  return "?";
}

namespace {

std::size_t count_field(const Json& obj, const char* key, std::size_t fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const long long v = integer(obj[key], where + "." + key);
  if (v < 0) throw ConfigError(where + "." + key + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

double positive(const Json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const double v = number(obj[key], where + "." + key);
  if (!(v > 0.0)) throw ConfigError(where + "." + key + ": must be > 0");
  return v;
}

SimulationSettings simulation_from(const Json& j) {
  const std::string w = "simulation";
  SimulationSettings s;
  if (j.is_null()) return s;
  allow_keys(j, {"n_paths", "construction", "antithetic", "truncation", "csv_paths", "mtrace_paths", "binary"}, w);
  s.n_paths = count_field(j, "n_paths", s.n_paths, w);
  if (s.n_paths < 2) throw ConfigError(w + ".n_paths: need at least 2 paths");
  s.csv_paths = count_field(j, "csv_paths", s.csv_paths, w);
  s.mtrace_paths = count_field(j, "mtrace_paths", s.mtrace_paths, w);
  if (j.contains("binary")) s.binary = boolean(j["binary"], w + ".binary");
  if (j.contains("antithetic")) s.options.antithetic = boolean(j["antithetic"], w + ".antithetic");
  if (j.contains("construction")) {
    const std::string c = string(j["construction"], w + ".construction");
    if (c == "direct")
      s.options.construction = NoiseConstruction::Direct;
    else if (c == "brownian_bridge")
      s.options.construction = NoiseConstruction::BrownianBridge;
    else
      throw ConfigError(w + ".construction: expected 'direct' or 'brownian_bridge'");
  }
  if (j.contains("truncation")) {
    const std::string t = string(j["truncation"], w + ".truncation");
    if (t == "strict")
      s.options.truncation = TruncationMode::Strict;
    else if (t == "clip")
      s.options.truncation = TruncationMode::Clip;
    else
      throw ConfigError(w + ".truncation: expected 'strict' or 'clip'");
  }
  return s;
}

PolicySource policy_from(const Json& j) {
  const std::string w = "policy";
  PolicySource p;
  if (j.is_null()) return p;
  if (j.is_string()) {
    p.type = j.get<std::string>();
  } else {
    allow_keys(j, {"type", "step", "path"}, w);
    p.type = string(require(j, "type", w), w + ".type");
    if (j.contains("step")) p.step = static_cast<int>(integer(j["step"], w + ".step"));
    if (j.contains("path")) p.path = string(j["path"], w + ".path");
  }
  if (p.type != "extracted" && p.type != "zero" && p.type != "stop_at_step" && p.type != "file")
    throw ConfigError(w + ".type: expected extracted, zero, stop_at_step or file");
  if (p.type == "file" && p.path.empty()) throw ConfigError(w + ".path: required for a file policy");
  if (p.step < 0) throw ConfigError(w + ".step: must be >= 0");
  return p;
}

SuiteSettings verify_from(const Json& j) {
  const std::string w = "verify";
  SuiteSettings s;
  if (j.is_null()) return s;
  allow_keys(j,
             {"tol_residual", "tol_dpp", "tol_identity", "z_level", "ks_alpha", "mc_bias", "random_policies", "mc_paths",
              "invariance_paths", "continuity_paths", "concatenation_paths", "concatenation_m", "max_tree_nodes"},
             w);
  s.tol_residual = positive(j, "tol_residual", s.tol_residual, w);
  s.tol_dpp = positive(j, "tol_dpp", s.tol_dpp, w);
  s.tol_identity = positive(j, "tol_identity", s.tol_identity, w);
  s.z_level = positive(j, "z_level", s.z_level, w);
  s.ks_alpha = positive(j, "ks_alpha", s.ks_alpha, w);
  if (j.contains("mc_bias")) s.mc_bias = number(j["mc_bias"], w + ".mc_bias");
  if (s.mc_bias < 0.0) throw ConfigError(w + ".mc_bias: must be >= 0");
  if (s.ks_alpha >= 1.0) throw ConfigError(w + ".ks_alpha: must be below 1");
  s.random_policies = count_field(j, "random_policies", s.random_policies, w);
  s.mc_paths = std::max<std::size_t>(2, count_field(j, "mc_paths", s.mc_paths, w));
  s.invariance_paths = std::max<std::size_t>(2, count_field(j, "invariance_paths", s.invariance_paths, w));
  s.continuity_paths = std::max<std::size_t>(2, count_field(j, "continuity_paths", s.continuity_paths, w));
  s.concatenation_paths = std::max<std::size_t>(2, count_field(j, "concatenation_paths", s.concatenation_paths, w));
  s.max_tree_nodes = count_field(j, "max_tree_nodes", s.max_tree_nodes, w);
  if (j.contains("concatenation_m")) {
    const Json& m = j["concatenation_m"];
    if (!m.is_array()) throw ConfigError(w + ".concatenation_m: expected an array of integers");
    s.concatenation_m.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const long long v = integer(m[i], w + ".concatenation_m[" + std::to_string(i) + "]");
      if (v < 1) throw ConfigError(w + ".concatenation_m[" + std::to_string(i) + "]: must be >= 1");
      s.concatenation_m.push_back(static_cast<int>(v));
    }
  }
  return s;
}

BenchSettings bench_from(const Json& j) {
  const std::string w = "bench";
  BenchSettings b;
  if (j.is_null()) return b;
  allow_keys(j, {"instances", "refinement", "n_paths"}, w);
  if (j.contains("instances")) {
    const Json& a = j["instances"];
    if (!a.is_array()) throw ConfigError(w + ".instances: expected an array of names");
    for (std::size_t i = 0; i < a.size(); ++i) {
      b.instances.push_back(string(a[i], w + ".instances[" + std::to_string(i) + "]"));
      gallery_instance(b.instances.back());
    }
  }
  b.n_paths = std::max<std::size_t>(2, count_field(j, "n_paths", b.n_paths, w));
  if (j.contains("refinement")) {
    const Json& r = j["refinement"];
    const std::string wr = w + ".refinement";
    allow_keys(r, {"instance", "spacings", "dt_ratio"}, wr);
    if (r.contains("instance")) b.refinement_instance = string(r["instance"], wr + ".instance");
    if (r.contains("spacings")) {
      const Vector h = vector(r["spacings"], wr + ".spacings");
      if (h.size() < 2 || (h.array() <= 0.0).any())
        throw ConfigError(wr + ".spacings: need at least two positive spacings");
      b.spacings.assign(h.data(), h.data() + h.size());
    }
    b.dt_ratio = positive(r, "dt_ratio", b.dt_ratio, wr);
  }
  return b;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

// Where neighbouring nodes along an axis take different kinds of decision.
void write_decision_boundaries(std::ostream& os, const LatticeModel& model, const PolicyField& policy) {
  const Lattice& L = model.lattice;
  io::write_csv_row(os, {"step", "time", "z", "coordinate", "x_low", "x_high", "decision_low", "decision_high"});
  for (int k = 0; k < L.n_times(); ++k)
    for (int j = 0; j < L.n_fuel(); ++j)
      for (int s = 0; s < L.n_states(); ++s)
        for (int i = 0; i < L.dim(); ++i) {
          const auto up = L.neighbour(s, i, +1);
          if (!up) continue;
          const NodeDecision& a = policy.decisions[L.node(k, s, j)];
          const NodeDecision& b = policy.decisions[L.node(k, *up, j)];
          if (a.kind == b.kind && a.sign == b.sign) continue;
          io::write_csv_row(os, {std::to_string(k), io::format_number(L.grid().time(k)), io::format_number(L.fuel_at(j)),
                                 std::to_string(i), io::format_number(L.point(s)(i)),
                                 io::format_number(L.point(*up)(i)), to_string(a), to_string(b)});
        }
}

Json lattice_json(const LatticeModel& model) {
  const Lattice& L = model.lattice;
  return {{"n_states", L.n_states()},
          {"n_fuel", L.n_fuel()},
          {"n_steps", L.grid().n_steps()},
          {"dt", L.grid().dt()},
          {"shrink_count", model.diagnostics.shrink_count},
          {"max_first_moment_error", model.diagnostics.max_first_moment_error},
          {"max_second_moment_error", model.diagnostics.max_second_moment_error},
          {"min_stay_probability", model.diagnostics.min_stay_probability}};
}

struct Solved {
  LatticeModel model;
  Solution solution;
};

Solved solve_instance(const RunConfig& cfg) {
  const BenchmarkInstance& inst = *cfg.instance;
  LatticeModel model = build_lattice(inst.spec, inst.lattice);
  Solution sol = solve_backward(inst.spec, model, cfg.solver);
  return Solved{std::move(model), std::move(sol)};
}

int run_solve(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const BenchmarkInstance& inst = *cfg.instance;
  const Solved s = solve_instance(cfg);
  const double elapsed = seconds_since(start);
  const double root = lookup_value(s.model, s.solution.value, 0, inst.x0, inst.z0);
  {
    auto os = open_output(out / "value.csv");
    write_value_csv(os, s.model, s.solution.value, s.solution.policy);
  }
  {
    auto os = open_output(out / "value.bin");
    write_value_binary(os, s.model, s.solution.value, s.solution.policy);
  }
  {
    auto os = open_output(out / "decision_boundaries.csv");
    write_decision_boundaries(os, s.model, s.solution.policy);
  }
  const auto& d = s.solution.value.diagnostics;
  Json report{{"instance", inst.name},
              {"value_field_id", s.solution.value.id()},
              {"root", {{"x0", vector_json(inst.x0)}, {"z0", inst.z0}, {"value", root}}},
              {"lattice", lattice_json(s.model)},
              {"solver",
               {{"slice_iterations", d.slice_iterations},
                {"max_slice_iterations", d.max_slice_iterations},
                {"max_final_change", d.max_final_change}}},
              {"metadata", {{"timestamp", timestamp_utc()}, {"runtime_seconds", elapsed}}}};
  auto os = open_output(out / "solve.json");
  os << report.dump(2) << '\n';
  log << "solve: " << inst.name << " v(root) = " << io::format_number(root) << " on "
      << s.model.lattice.size() << " nodes, artifacts in " << out.string() << '\n';
  return 0;
}

int run_simulate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const BenchmarkInstance& inst = *cfg.instance;
  const ProblemSpec& spec = inst.spec;
  std::optional<Solved> solved;
  NoiseFunctionalPolicy policy;
  TimeGrid grid(spec.start_time, spec.horizon, inst.lattice.n_steps);
  if (cfg.policy.type == "extracted") {
    solved = solve_instance(cfg);
  } else if (cfg.policy.type == "file") {
    std::ifstream in(cfg.policy.path, std::ios::binary);
    if (!in) throw ConfigError("policy.path: cannot open " + cfg.policy.path);
    ValueSnapshot snap = read_value_binary(in);
    LatticeModel model = build_lattice(spec, inst.lattice);
    if (snap.value.lattice_hash != model.lattice.fingerprint() || snap.value.spec_hash != spec_fingerprint(spec))
      throw ConfigError("policy.path: value snapshot was solved for a different problem or lattice");
    solved = Solved{std::move(model), Solution{std::move(snap.value), std::move(snap.policy)}};
  } else if (cfg.policy.type == "zero") {
    policy = zero_policy();
  } else {
    if (cfg.policy.step > grid.n_steps()) throw ConfigError("policy.step: beyond the last grid step");
    policy = stop_at_step_policy(cfg.policy.step);
  }
  if (solved) {
    policy = lattice_feedback_policy(spec, solved->model, solved->solution.policy);
    grid = solved->model.lattice.grid();
  }

  const SimulationSettings& sim = cfg.simulation;
  SimulationOptions opt = sim.options;
  opt.threads = cfg.threads;
  PathBundle kept{grid, cfg.seed, {}};
  MeanAccumulator J;
  double identity_gap = 0.0;
  const std::size_t trace_rows = solved ? std::min(sim.mtrace_paths, sim.n_paths) : 0;
  MTrace trace{Matrix(static_cast<Eigen::Index>(trace_rows), grid.n_steps() + 1),
               Matrix(static_cast<Eigen::Index>(trace_rows), grid.n_steps() + 1), Vector(), Vector(), 0,
               solved ? solved->solution.value.id() : ""};
  std::ofstream summary = open_output(out / "path_summary.csv");
  std::optional<std::ofstream> binary;
  if (sim.binary) binary = open_output(out / "paths.bin");
  std::vector<std::string> header{"path", "tau_step", "rho_step", "tau", "rho"};
  for (int i = 0; i < spec.dims.state; ++i) header.push_back("x_T_" + std::to_string(i));
  header.push_back("z_T");
  header.push_back("payoff");
  io::write_csv_row(summary, header);
  PathBundle chunk{grid, cfg.seed, {}};
  for_each_path(spec, policy, inst.x0, inst.z0, grid, sim.n_paths, cfg.seed, opt,
                [&](std::size_t i, const PathRecord& r) {
                  const double g = evaluate_gamma(spec, r);
                  if (!std::isfinite(g)) throw NumericalError("non-finite payoff on path " + std::to_string(i));
                  J.add(g);
                  identity_gap = std::max(identity_gap, std::abs(g - evaluate_lambda(spec, r)));
                  std::vector<std::string> row{std::to_string(i), std::to_string(r.tau_step),
                                               std::to_string(r.rho_step), io::format_number(grid.time(r.tau_step)),
                                               io::format_number(grid.time(r.rho_step))};
                  for (int c = 0; c < spec.dims.state; ++c) row.push_back(io::format_number(r.states(c, grid.n_steps())));
                  row.push_back(io::format_number(r.fuel.back()));
                  row.push_back(io::format_number(g));
                  io::write_csv_row(summary, row);
                  if (i < trace_rows) {
                    const auto p = static_cast<Eigen::Index>(i);
                    path_m_process(spec, r, solved->model, solved->solution.value, trace.N.row(p), trace.M.row(p),
                                   &trace.extension_count);
                  }
                  if (i < sim.csv_paths) kept.paths.push_back(r);
                  if (binary) chunk.paths.push_back(r);
                  if (binary && (chunk.paths.size() == 1024 || i + 1 == sim.n_paths)) {
                    // one header per chunk keeps memory bounded
                    write_bundle_binary(*binary, chunk);
                    chunk.paths.clear();
                  }
                });
  {
    auto os = open_output(out / "paths.csv");
    write_paths_csv(os, kept);
  }
  Json report{{"instance", inst.name},
              {"policy", cfg.policy.type},
              {"n_paths", sim.n_paths},
              {"n_steps", grid.n_steps()},
              {"seed", cfg.seed},
              {"J", {{"mean", J.mean()}, {"std_error", J.estimate().std_error}}},
              {"gamma_lambda_max_gap", identity_gap}};
  if (solved) {
    {
      auto os = open_output(out / "mtrace.csv");
      write_mtrace_csv(os, trace, grid);
    }
    report["value_field_id"] = solved->solution.value.id();
    report["lattice_value"] = lookup_value(solved->model, solved->solution.value, 0, inst.x0, inst.z0);
    report["mtrace_off_box_lookups"] = trace.extension_count;
  }
  report["metadata"] = {{"timestamp", timestamp_utc()}, {"runtime_seconds", seconds_since(start)}};
  auto os = open_output(out / "simulate.json");
  os << report.dump(2) << '\n';
  log << "simulate: " << inst.name << " J = " << io::format_number(J.mean()) << " +- "
      << io::format_number(J.estimate().std_error) << " over " << sim.n_paths << " paths\n";
  return 0;
}

int run_verify(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  SuiteSettings s = cfg.verify;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  s.solver = cfg.solver;
  const VerificationSuiteReport report = run_verification_suite(*cfg.instance, s);
  {
    auto os = open_output(out / "verify.json");
    write_suite_json(os, report, timestamp_utc());
  }
  {
    auto os = open_output(out / "verify.txt");
    write_suite_table(os, report);
  }
  write_suite_table(log, report);
  return report.passed() ? 0 : 1;
}

int run_bench(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const BenchSettings& b = cfg.bench;
  std::vector<BenchmarkInstance> gallery;
  if (b.instances.empty()) {
    gallery = benchmark_gallery();
  } else {
    for (const auto& name : b.instances) gallery.push_back(gallery_instance(name));
  }
  std::ofstream table = open_output(out / "bench.csv");
  io::write_csv_row(table, {"instance", "n_states", "n_fuel", "n_steps", "value", "one_step_residual", "J",
                            "J_std_error"});
  Json runtimes = Json::object();
  SimulationOptions opt;
  opt.threads = cfg.threads;
  for (const auto& inst : gallery) {
    const auto start = std::chrono::steady_clock::now();
    const LatticeModel model = build_lattice(inst.spec, inst.lattice);
    const Solution sol = solve_backward(inst.spec, model, cfg.solver);
    const double solve_seconds = seconds_since(start);
    const double v = lookup_value(model, sol.value, 0, inst.x0, inst.z0);
    const double residual = one_step_residual(inst.spec, model, sol.value).max_residual;
    MeanAccumulator J;
    for_each_path(inst.spec, lattice_feedback_policy(inst.spec, model, sol.policy), inst.x0, inst.z0,
                  model.lattice.grid(), b.n_paths, cfg.seed, opt,
                  [&](std::size_t, const PathRecord& r) { J.add(evaluate_gamma(inst.spec, r)); });
    io::write_csv_row(table, {inst.name, std::to_string(model.lattice.n_states()),
                              std::to_string(model.lattice.n_fuel()), std::to_string(model.lattice.grid().n_steps()),
                              io::format_number(v), io::format_number(residual), io::format_number(J.mean()),
                              io::format_number(J.estimate().std_error)});
    runtimes[inst.name] = {{"solve_seconds", solve_seconds}, {"total_seconds", seconds_since(start)}};
    log << "bench: " << inst.name << " v = " << io::format_number(v) << ", J = " << io::format_number(J.mean())
        << " +- " << io::format_number(J.estimate().std_error) << '\n';
  }
  const auto start = std::chrono::steady_clock::now();
  const RefinementStudy study = refinement_study(gallery_instance(b.refinement_instance), b.spacings, b.dt_ratio);
  {
    auto os = open_output(out / "refinement.csv");
    write_refinement_csv(os, study);
  }
  Json levels = Json::array();
  for (const auto& l : study.levels)
    levels.push_back({{"h", l.h}, {"dt", l.dt}, {"n_steps", l.n_steps}, {"value", l.value}, {"change", l.change}});
  Json report{{"refinement",
               {{"instance", b.refinement_instance},
                {"levels", levels},
                {"extrapolated", study.extrapolated},
                {"constant", study.constant},
                {"shrinking", study.shrinking}}},
              {"metadata",
               {{"timestamp", timestamp_utc()},
                {"runtime_seconds", runtimes},
                {"refinement_seconds", seconds_since(start)}}}};
  auto os = open_output(out / "bench.json");
  os << report.dump(2) << '\n';
  log << "bench: refinement on " << b.refinement_instance << ", extrapolated value "
      << io::format_number(study.extrapolated) << ", changes " << (study.shrinking ? "shrink" : "do NOT shrink")
      << '\n';
  return 0;
}

}  // namespace

RunConfig parse_run_config(const Json& j, RunMode mode) {
  allow_keys(j, {"mode", "problem", "lattice", "initial", "solver", "simulation", "policy", "verify", "bench",
                 "output", "seed", "threads"},
             "config");
  RunConfig c;
  c.mode = mode;
  if (j.contains("mode") && parse_mode(string(j["mode"], "mode")) != mode)
    throw ConfigError("mode: config is for '" + j["mode"].get<std::string>() + "' but '" + to_string(mode) +
                      "' was requested");
  if (mode != RunMode::Bench || j.contains("problem")) c.instance = instance_from_json(j, "config");
  if (c.instance && c.instance->spec.name != "problem") c.instance->name = c.instance->spec.name;
  c.solver = solver_options_from_json(j.value("solver", Json()), "solver");
  c.simulation = simulation_from(j.value("simulation", Json()));
  c.policy = policy_from(j.value("policy", Json()));
  c.verify = verify_from(j.value("verify", Json()));
  c.bench = bench_from(j.value("bench", Json()));
  if (j.contains("output")) {
    allow_keys(j["output"], {"dir"}, "output");
    if (j["output"].contains("dir")) c.out_dir = string(j["output"]["dir"], "output.dir");
  }
  if (j.contains("seed")) {
    const long long s = integer(j["seed"], "seed");
    if (s < 0) throw ConfigError("seed: must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("threads")) {
    const long long t = integer(j["threads"], "threads");
    if (t < 1) throw ConfigError("threads: must be >= 1");
    c.threads = static_cast<int>(t);
  }
  return c;
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    switch (cfg.mode) {
      case RunMode::Solve: return run_solve(cfg, dir, out);
      case RunMode::Simulate: return run_simulate(cfg, dir, out);
      case RunMode::Verify: return run_verify(cfg, dir, out);
      case RunMode::Bench: return run_bench(cfg, dir, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SpecError& e) {
    err << "problem error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const ConvergenceError& e) {
    err << "convergence error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 3;
}

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fuelgrid: lattice solver and verifier for controller-stopper problems with singular controls"};
  std::string mode, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("mode", mode, "solve | simulate | verify | bench")
      ->required()
      ->check(CLI::IsMember({"solve", "simulate", "verify", "bench"}));
  app.add_option("--config", config_path, "JSON run config (schema in docs/config.md)")->required();
  app.add_option("--out", out_dir, "output directory (default: output.dir from the config, else ./out)");
  app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  RunConfig cfg;
  try {
    const RunMode m = parse_mode(mode);
    cfg = parse_run_config(read_json_file(config_path), m);
  } catch (const SpecError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  return run(cfg, out, err);
}

}  // namespace fuelgrid
