// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "fuelgrid/benchmarks.hpp"
#include "fuelgrid/payoff.hpp"
#include "fuelgrid/suite.hpp"
#include "fuelgrid/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace fuelgrid;

namespace {

constexpr double kTolExact = 1e-12;      // oracle, residual, identity and martingale checks
constexpr double kTolDpp = 1e-9;         // hitting-time dynamic programming
constexpr double kTolQuadrature = 1e-9;  // closed-form jump integrals
constexpr double kZ = 3.0;               // Monte Carlo checks use 3 standard errors
constexpr double kKsAlpha = 0.01;
constexpr double kOracleSeconds = 60.0;
constexpr int kOracleInstances = 24;
constexpr std::size_t kRandomPolicies = 100;
constexpr std::size_t kIdentityPaths = 10'000;
constexpr std::size_t kInvariancePaths = 100'000;
constexpr std::size_t kConsistencyPaths = 100'000;
constexpr std::size_t kConcatenationPaths = 20'000;
constexpr int kTruncationPaths = 10'000;
constexpr int kMaxGridSteps = 1 << 12;
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

struct Solved {
  BenchmarkInstance instance;
  LatticeModel model;
  Solution solution;
  NodeRef root;
  double v_root;
};

Solved solve(BenchmarkInstance b) {
  LatticeModel m = build_lattice(b.spec, b.lattice);
  Solution sol = solve_backward(b.spec, m);
  const NodeRef root = root_node(m, b.x0, b.z0);
  const double v = sol.value.v[m.lattice.node(0, root.s, root.j)];
  return {std::move(b), std::move(m), std::move(sol), root, v};
}

Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < kOracleInstances; ++i) {
    const Solved s = solve(random_oracle_instance(kSeed + static_cast<std::uint64_t>(i)));
    worst = std::max(worst, std::abs(brute_force_value(s.instance.spec, s.model, s.root) - s.v_root));
  }
  const double secs = seconds_since(start);
  return {worst <= kTolExact && secs < kOracleSeconds, std::to_string(kOracleInstances) +
                                                           " instances, max |solver - brute force| = " + num(worst) +
                                                           ", " + num(secs) + " s"};
}

Outcome gallery_residual(const std::vector<Solved>& gallery) {
  Outcome o;
  for (const auto& s : gallery) {
    const double r = one_step_residual(s.instance.spec, s.model, s.solution.value).max_residual;
    o.pass = o.pass && r <= kTolExact;
    o.detail += s.instance.name + " " + num(r) + "; ";
  }
  return o;
}

Outcome hitting_dpp() {
  double worst = 0.0;
  int checks = 0;
  for (int i = 0; i < 8; ++i) {
    const Solved s = solve(random_oracle_instance(kSeed + 100 + static_cast<std::uint64_t>(i)));
    const Lattice& L = s.model.lattice;
    // marked regions: above a level, below a level, and a band away from the start
    const std::vector<std::function<bool(double)>> regions{
        [](double x) { return x >= 4.0; }, [](double x) { return x <= 2.0; },
        [](double x) { return std::abs(x - 3.0) >= 2.0; }};
    for (const auto& marked : regions) {
      LeafOnHitting hit;
      hit.region.assign(L.slice_size(), 0);
      for (int st = 0; st < L.n_states(); ++st)
        for (int j = 0; j < L.n_fuel(); ++j) hit.region[static_cast<std::size_t>(st) * L.n_fuel() + j] = marked(L.point(st)(0));
      const DppResult r = check_dpp(s.instance.spec, s.model, s.solution.value, s.root, hit);
      worst = std::max(worst, r.residual);
      ++checks;
    }
  }
  return {worst <= kTolDpp, std::to_string(checks) + " hitting rules, max residual = " + num(worst)};
}

Outcome supermartingale(const std::vector<Solved>& gallery) {
  Outcome o;
  std::vector<Solved> instances;
  for (int i = 0; i < 4; ++i) instances.push_back(solve(random_oracle_instance(kSeed + 200 + static_cast<std::uint64_t>(i))));
  auto check = [&](const Solved& s) {
    std::mt19937_64 rng(kSeed);
    std::vector<PolicyField> policies;
    for (std::size_t i = 0; i < kRandomPolicies; ++i) policies.push_back(random_lattice_policy(s.instance.spec, s.model, rng));
    const SupermartingaleReport r =
        check_supermartingale_exact(s.instance.spec, s.model, s.solution.value, policies, &s.solution.policy);
    o.pass = o.pass && r.max_violation <= kTolExact && r.max_martingale_gap <= kTolExact;
    o.detail += s.instance.name + " " + num(r.max_violation) + "/" + num(r.max_martingale_gap) + "; ";
  };
  for (const auto& s : gallery) check(s);
  for (const auto& s : instances) check(s);
  o.detail = "violation/gap: " + o.detail;
  return o;
}

Outcome gamma_lambda(const std::vector<Solved>& gallery) {
  Outcome o;
  for (const auto& s : gallery) {
    const PathBundle b = simulate_paths(s.instance.spec, lattice_feedback_policy(s.instance.spec, s.model, s.solution.policy),
                                        s.instance.x0, s.instance.z0, s.model.lattice.grid(), kIdentityPaths, kSeed);
    double worst = 0.0;
    for (const auto& p : b.paths)
      worst = std::max(worst, std::abs(evaluate_gamma(s.instance.spec, p) - evaluate_lambda(s.instance.spec, p)));
    o.pass = o.pass && worst <= kTolExact;
    o.detail += s.instance.name + " " + num(worst) + "; ";
  }
  return o;
}

Outcome invariance(const std::vector<Solved>& gallery) {
  Outcome o;
  for (const auto& s : gallery) {
    if (s.instance.name == "pure_drift_follower") continue;  // sigma = 0
    InvarianceOptions opt;
    opt.alpha = kKsAlpha;
    const InvarianceResult r = check_reference_invariance(
        s.instance.spec, lattice_feedback_policy(s.instance.spec, s.model, s.solution.policy), s.instance.x0,
        s.instance.z0, s.model.lattice.grid(), kInvariancePaths, kSeed + 1, kSeed + 2, opt);
    double ks = 0.0;
    for (const auto& k : r.ks) ks = std::max(ks, k.statistic / k.critical);
    const bool pass = std::abs(r.first.mean - r.second.mean) <= kZ * r.combined_se && ks <= 1.0;
    o.pass = o.pass && pass;
    o.detail += s.instance.name + " |dJ|/SE=" + num(std::abs(r.first.mean - r.second.mean) / r.combined_se) +
                " KS/crit=" + num(ks) + "; ";
  }
  return o;
}

Outcome consistency(const Solved& s) {
  const RefinementStudy study = refinement_study(s.instance, {0.2, 0.1, 0.05, 0.025}, 2.0);
  const PathBundle b = simulate_paths(s.instance.spec, lattice_feedback_policy(s.instance.spec, s.model, s.solution.policy),
                                      s.instance.x0, s.instance.z0, s.model.lattice.grid(), kConsistencyPaths, kSeed + 3);
  const Estimate j = evaluate_J(s.instance.spec, b);
  const double h = s.model.lattice.axes()[0].h, dt = s.model.lattice.grid().dt();
  const double gap = std::abs(j.mean - s.v_root);
  const double allowed = kZ * j.std_error + study.constant * (h + dt);
  std::string changes;
  for (std::size_t i = 1; i < study.levels.size(); ++i) changes += num(study.levels[i].change) + " ";
  return {gap <= allowed && study.shrinking, s.instance.name + ": |J - v| = " + num(gap) + " <= " + num(allowed) +
                                                 " (C = " + num(study.constant) + "); refinement changes " + changes};
}

Outcome eta_tau_truncation() {
  bool ok = true;
  std::size_t round_trips = 0;
  for (int n = 1; n <= kMaxGridSteps; n *= 2)
    for (int extra : {0, 1}) {
      if (n + extra > kMaxGridSteps) continue;
      const TimeGrid g(0.0, 1.0, n + extra);
      for (int k = 0; k <= g.n_steps(); ++k) {
        const EtaPath eta = tau_to_eta(k, g);
        ok = ok && eta_to_tau(eta) == g.time(k) && eta.tau_step() == k;
        ++round_trips;
      }
    }
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_strict = -1.0, worst_clip = 0.0;
  for (int c = 0; c < kTruncationPaths; ++c) {
    const TimeGrid g(0.0, 1.0, 1 + static_cast<int>(u(rng) * 40));
    const int d = 1 + static_cast<int>(u(rng) * 3);
    BVControlPath xi = BVControlPath::zero(g, d);
    for (int k = 0; k < g.n_steps(); ++k)
      for (int i = 0; i < d; ++i) {
        if (u(rng) < 0.3) xi.inc_plus(i, k) = u(rng) < 0.5 ? 0.25 : u(rng);
        if (u(rng) < 0.3) xi.inc_minus(i, k) = u(rng) < 0.5 ? 0.25 : u(rng);
      }
    const int from = static_cast<int>(u(rng) * (g.n_steps() + 1));
    const double budget = u(rng) * 3.0;
    const double tv = total_variation(xi, from, g.n_steps());
    worst_strict = std::max(worst_strict,
                            total_variation(truncate_control(xi, from, budget, TruncationMode::Strict), from, g.n_steps()) - budget);
    worst_clip = std::max(worst_clip, std::abs(total_variation(truncate_control(xi, from, budget, TruncationMode::Clip),
                                                               from, g.n_steps()) - std::min(tv, budget)));
  }
  ok = ok && worst_strict <= 1e-12 && worst_clip <= 1e-12;
  return {ok, std::to_string(round_trips) + " round trips; strict max excess " + num(worst_strict) +
                  ", clip max |TV - min(TV, budget)| " + num(worst_clip)};
}

Outcome cost_conventions() {
  ProblemSpec s;
  s.dims = {1, 1, 1};
  s.costs_uniform = true;
  const Vector none = Vector::Zero(1);
  const Vector x0 = Vector::Zero(1), jump = Vector::Constant(1, 1.0);
  double worst_const = 0.0;
  for (double c : {0.0, 0.3, 1.7})
    for (double size : {0.01, 0.5, 2.0}) {
      s.cost_plus = [c](double, const Vector&) { return Vector(Vector::Constant(1, c)); };
      s.cost_minus = s.cost_plus;
      s.cost_convention = Stieltjes{};
      const double a = jump_cost(s, 0.0, x0, Vector::Constant(1, size), none);
      s.cost_convention = SegmentIntegral{1000};
      const double b = jump_cost(s, 0.0, x0, Vector::Constant(1, size), none);
      worst_const = std::max(worst_const, std::abs(a - b));
    }
  s.cost_convention = SegmentIntegral{1000};
  s.cost_plus = [](double, const Vector& y) { return Vector(y); };
  const double lin = std::abs(jump_cost(s, 0.0, x0, jump, none) - 0.5);
  s.cost_plus = [](double, const Vector& y) { return Vector(y.array().square()); };
  const double quad = std::abs(jump_cost(s, 0.0, x0, jump, none) - 1.0 / 3.0);
  return {worst_const <= kTolExact && lin <= kTolQuadrature && quad <= kTolQuadrature,
          "constant " + num(worst_const) + ", c=x " + num(lin) + ", c=x^2 " + num(quad)};
}

Outcome concatenation() {
  Outcome o;
  for (std::uint64_t i = 0; i < 3; ++i) {
    const Solved s = solve(random_oracle_instance(kSeed + 300 + i));
    const int n = s.model.lattice.grid().n_steps();
    std::mt19937_64 rng(kSeed + i);
    const PolicyField base = random_lattice_policy(s.instance.spec, s.model, rng, RandomPolicyOptions{0.0, 0.25});
    const NodeBins bins = block_bins(s.model.lattice, 3, 2);
    for (int m : {10, 100}) {
      const ConcatenationResult r =
          check_concatenation_bound(s.instance.spec, s.model, s.solution.value, base, s.root, n / 2, bins.bins,
                                    bins.representatives, m, kConcatenationPaths, kSeed + static_cast<std::uint64_t>(m) + i);
      o.pass = o.pass && r.pass;
      o.detail += s.instance.name + " m=" + std::to_string(m) + " margin " + num(r.margin) + "; ";
    }
  }
  return o;
}

}  // namespace

int main() {
  std::vector<Solved> gallery;
  for (auto& b : benchmark_gallery()) gallery.push_back(solve(std::move(b)));
  const Solved* lipschitz = nullptr;
  for (const auto& s : gallery)
    if (s.instance.name == "stopping_only") lipschitz = &s;

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"one-step residual on the gallery", [&] { return gallery_residual(gallery); }},
      {"dynamic programming at hitting times", hitting_dpp},
      {"supermartingale and martingale", [&] { return supermartingale(gallery); }},
      {"Gamma = Lambda identity", [&] { return gamma_lambda(gallery); }},
      {"reference-system invariance", [&] { return invariance(gallery); }},
      {"simulator and solver consistency", [&] { return consistency(*lipschitz); }},
      {"eta/tau round trips and truncation", eta_tau_truncation},
      {"cost conventions", cost_conventions},
      {"concatenation lower bound", concatenation},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << " [" << num(seconds_since(start)) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
