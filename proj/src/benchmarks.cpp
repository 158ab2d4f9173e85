#include "fuelgrid/benchmarks.hpp"

#include "fuelgrid/io.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

namespace fuelgrid {

BenchmarkInstance instance_from_json(const Json& j, const std::string& name) {
  BenchmarkInstance b;
  b.name = name;
  b.config = j;
  b.spec = problem_from_json(config::require(j, "problem", "config"), "problem");
  b.lattice = lattice_from_json(config::require(j, "lattice", "config"), b.spec.dims.state, "lattice");
  const Json& init = config::require(j, "initial", "config");
  config::allow_keys(init, {"x0", "z0"}, "initial");
  b.x0 = config::vector(config::require(init, "x0", "initial"), "initial.x0", b.spec.dims.state);
  b.z0 = init.contains("z0") ? config::number(init["z0"], "initial.z0") : 0.0;
  return b;
}

namespace {

// Put-style stopping problem: no singular control, exit only at the horizon.
constexpr const char* kStoppingOnly = R"({
  "problem": {
    "name": "stopping_only",
    "horizon": 1.0,
    "drift": "zero",
    "diffusion": {"type": "constant", "matrix": 0.5},
    "exit_gain": {"type": "hinge", "strike": 1.0, "side": "put"},
    "stop_gain": {"type": "hinge", "strike": 1.0, "side": "put"},
    "action_set": [0.0],
    "singular_directions": {"plus": false, "minus": false}
  },
  "lattice": {"lo": -1.0, "hi": 3.0, "h": 0.05, "n_steps": 200},
  "initial": {"x0": 1.0}
})";

// Deterministic drift pushed back by a costly downward control.
constexpr const char* kPureDriftFollower = R"({
  "problem": {
    "name": "pure_drift_follower",
    "horizon": 1.0,
    "drift": {"type": "affine", "offset": 1.0},
    "diffusion": "zero",
    "running_gain": {"type": "polynomial", "coeffs": [0, 0, -1]},
    "exit_gain": {"type": "polynomial", "coeffs": [0, 0, -1]},
    "stop_gain": {"type": "constant", "value": -10},
    "cost_minus": {"type": "constant", "value": 0.5},
    "action_set": [0.0],
    "fuel": {"type": "infinite", "p": 2},
    "payoff_floor": 10,
    "singular_directions": {"plus": false, "minus": true}
  },
  "lattice": {"lo": -2.0, "hi": 3.0, "h": 0.1, "n_steps": 10},
  "initial": {"x0": 0.5}
})";

// Brownian state kept near zero with a limited fuel budget.
constexpr const char* kFiniteFuelFollower = R"({
  "problem": {
    "name": "finite_fuel_follower",
    "horizon": 1.0,
    "drift": "zero",
    "diffusion": {"type": "constant", "matrix": 1.0},
    "running_gain": {"type": "polynomial", "coeffs": [0, 0, -1]},
    "exit_gain": {"type": "polynomial", "coeffs": [0, 0, -1]},
    "stop_gain": {"type": "constant", "value": -10},
    "cost_plus": {"type": "constant", "value": 0.3},
    "cost_minus": {"type": "constant", "value": 0.3},
    "action_set": [0.0],
    "fuel": {"type": "finite", "zbar": 1.0},
    "payoff_floor": 10
  },
  "lattice": {"lo": -2.0, "hi": 2.0, "h": 0.1, "n_steps": 100},
  "initial": {"x0": 0.0, "z0": 0.0}
})";

// Dividend-style exit problem: ruin at zero, risky or safe operation, payouts
// by downward control.
constexpr const char* kExitDomain = R"({
  "problem": {
    "name": "exit_domain",
    "horizon": 1.0,
    "drift": {"type": "affine", "offset": 0.2, "action": 0.3},
    "diffusion": {"type": "affine", "constant": 0.5, "action": [0.5]},
    "exit_gain": {"type": "hinge", "strike": 0.0, "side": "call"},
    "stop_gain": {"type": "hinge", "strike": 0.0, "side": "call", "scale": 0.9},
    "cost_minus": {"type": "constant", "value": -1.0},
    "action_set": [0.0, 1.0],
    "domain": {"type": "half_space", "normal": 1.0, "offset": 0.0},
    "fuel": {"type": "infinite", "p": 2},
    "singular_directions": {"plus": false, "minus": true}
  },
  "lattice": {"lo": 0.0, "hi": 3.0, "h": 0.1, "n_steps": 125},
  "initial": {"x0": 1.0}
})";

struct GalleryEntry {
  const char* name;
  const char* text;
};

constexpr GalleryEntry kGallery[] = {
    {"stopping_only", kStoppingOnly},
    {"pure_drift_follower", kPureDriftFollower},
    {"finite_fuel_follower", kFiniteFuelFollower},
    {"exit_domain", kExitDomain},
};

}  // namespace

std::vector<BenchmarkInstance> benchmark_gallery() {
  std::vector<BenchmarkInstance> out;
  for (const auto& e : kGallery) out.push_back(instance_from_json(parse_json_text(e.text, e.name), e.name));
  return out;
}

BenchmarkInstance gallery_instance(const std::string& name) {
  for (const auto& e : kGallery)
    if (name == e.name) return instance_from_json(parse_json_text(e.text, e.name), e.name);
  throw SpecError("no benchmark named '" + name + "'");
}

BenchmarkInstance random_oracle_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  auto coin = [&](double p) { return u(rng) < p; };

  const bool two_actions = coin(0.6);
  const bool finite = coin(0.6);
  Json problem;
  problem["name"] = "oracle_" + std::to_string(seed);
  problem["horizon"] = 1.0;
  problem["drift"] = {{"type", "affine"}, {"offset", in(-0.6, 0.6)}, {"action", in(-0.4, 0.4)}};
  problem["diffusion"] = {{"type", "affine"}, {"constant", in(0.3, 0.9)}, {"action", Json::array({in(0.0, 0.3)})}};
  auto gain = [&]() {
    Json terms = Json::array();
    terms.push_back({{"type", "polynomial"}, {"coeffs", {in(-1, 1), in(-0.5, 0.5), in(-0.1, 0.1)}}});
    if (coin(0.5))
      terms.push_back({{"type", "hinge"}, {"strike", in(1, 5)}, {"side", coin(0.5) ? "call" : "put"}, {"scale", in(0, 1)}});
    if (finite && coin(0.5)) terms.push_back({{"type", "fuel_linear"}, {"slope", in(-0.5, 0.5)}});
    return Json{{"type", "sum"}, {"terms", terms}};
  };
  problem["exit_gain"] = gain();
  problem["stop_gain"] = gain();
  problem["running_gain"] = {{"type", "sum"},
                             {"terms", {{{"type", "polynomial"}, {"coeffs", {in(-1, 1), in(-0.3, 0.3)}}},
                                        {{"type", "action_linear"}, {"coeffs", {in(-0.5, 0.5)}}}}}};
  if (coin(0.3)) {
    problem["cost_plus"] = {{"type", "affine"}, {"offset", in(0.05, 0.3)}, {"slope", in(0.0, 0.05)}};
    problem["cost_minus"] = {{"type", "affine"}, {"offset", in(0.05, 0.3)}, {"slope", in(0.0, 0.05)}};
    if (coin(0.5)) problem["cost_convention"] = {{"type", "segment_integral"}, {"quadrature_steps", 8}};
  } else {
    problem["cost_plus"] = {{"type", "constant"}, {"value", in(0.05, 0.5)}};
    problem["cost_minus"] = {{"type", "constant"}, {"value", in(0.05, 0.5)}};
  }
  problem["action_set"] = two_actions ? Json::array({0.0, 1.0}) : Json::array({0.0});
  if (coin(0.5)) {
    const double lo = std::floor(in(0, 2)) + 0.5;
    const double hi = 6.0 - std::floor(in(0, 2)) - 0.5;
    problem["domain"] = {{"type", "box"}, {"lo", lo}, {"hi", hi}};
  }
  if (finite) {
    problem["fuel"] = {{"type", "finite"}, {"zbar", 2.0}};
    if (coin(0.3)) problem["singular_directions"] = {{"plus", coin(0.5)}, {"minus", true}};
  } else {
    problem["fuel"] = {{"type", "infinite"}, {"p", 2.0}};
    // one pushing direction keeps the exhaustive search small
    const bool up = coin(0.5);
    problem["singular_directions"] = {{"plus", up}, {"minus", !up}};
  }
  problem["payoff_floor"] = 50.0;

  Json j;
  j["problem"] = problem;
  j["lattice"] = {{"lo", 0.0}, {"hi", 6.0}, {"h", 1.0}, {"n_steps", 4}};
  j["initial"] = {{"x0", 3.0}, {"z0", 0.0}};
  return instance_from_json(j, "oracle_" + std::to_string(seed));
}

RefinementStudy refinement_study(const BenchmarkInstance& instance, const std::vector<double>& spacings,
                                 double dt_ratio) {
  if (spacings.size() < 2) throw SpecError("refinement study needs at least two levels");
  const double span = instance.spec.horizon - instance.spec.start_time;
  RefinementStudy study;
  for (double h : spacings) {
    const auto start = std::chrono::steady_clock::now();
    LatticeSpec ls = instance.lattice;
    ls.h = Vector::Constant(ls.lo.size(), h);
    ls.n_steps = std::max(1, static_cast<int>(std::lround(span / (dt_ratio * h * h))));
    const LatticeModel model = build_lattice(instance.spec, ls);
    const Solution sol = solve_backward(instance.spec, model);
    RefinementLevel lv;
    lv.h = h;
    lv.n_steps = model.lattice.grid().n_steps();
    lv.dt = model.lattice.grid().dt();
    lv.value = lookup_value(model, sol.value, 0, instance.x0, instance.z0);
    if (!study.levels.empty()) lv.change = std::abs(lv.value - study.levels.back().value);
    lv.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    study.levels.push_back(lv);
  }
  const auto& L = study.levels;
  const std::size_t m = L.size();
  study.extrapolated = 2.0 * L[m - 1].value - L[m - 2].value;
  for (std::size_t i = 0; i + 1 < m; ++i)
    study.constant = std::max(study.constant, std::abs(L[i].value - study.extrapolated) / (L[i].h + L[i].dt));
  study.shrinking = true;
  for (std::size_t i = 2; i < m; ++i) study.shrinking = study.shrinking && L[i].change < L[i - 1].change;
  return study;
}

void write_refinement_csv(std::ostream& os, const RefinementStudy& study) {
  io::write_csv_row(os, {"h", "dt", "n_steps", "value", "change"});
  for (const auto& l : study.levels)
    io::write_csv_row(os, {io::format_number(l.h), io::format_number(l.dt), std::to_string(l.n_steps),
                           io::format_number(l.value), io::format_number(l.change)});
}

}  // namespace fuelgrid
