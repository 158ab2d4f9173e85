#include "fuelgrid/suite.hpp"

#include "fuelgrid/payoff.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <string>

namespace fuelgrid {

NodeBins block_bins(const Lattice& lattice, int state_width, int fuel_width) {
  if (state_width < 1 || fuel_width < 1) throw SpecError("block_bins: widths must be >= 1");
  std::map<std::vector<int>, std::vector<NodeRef>> groups;
  for (int s = 0; s < lattice.n_states(); ++s)
    for (int j = 0; j < lattice.n_fuel(); ++j) {
      if (!lattice.interior(s, j)) continue;
      std::vector<int> key = lattice.multi_index(s);
      for (int& c : key) c /= state_width;
      key.push_back(j / fuel_width);
      groups[key].push_back(NodeRef{s, j});
    }
  NodeBins out;
  for (auto& [key, nodes] : groups) {
    int top = 0;
    for (const auto& n : nodes) top = std::max(top, n.j);
    std::vector<NodeRef> upper;
    for (const auto& n : nodes)
      if (n.j == top) upper.push_back(n);
    out.representatives.push_back(upper[upper.size() / 2]);
    out.bins.push_back(std::move(nodes));
  }
  return out;
}

namespace {

class SuiteBuilder {
 public:
  SuiteBuilder(VerificationSuiteReport& report, std::string instance) : report_(report), instance_(std::move(instance)) {}

  template <class Fn>
  void run(const std::string& name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    SuiteEntry e;
    e.name = name;
    e.instance = instance_;
    try {
      fn(e);
    } catch (const std::exception& ex) {
      e.pass = false;
      e.statistic = std::nan("");
      e.detail = std::string("error: ") + ex.what();
    }
    e.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report_.entries.push_back(std::move(e));
  }

 private:
  VerificationSuiteReport& report_;
  std::string instance_;
};

bool gains_ignore_fuel(const ProblemSpec& spec, const Lattice& L) {
  const double ztop = L.fuel_at(L.n_fuel() - 1);
  for (int s = 0; s < L.n_states(); ++s) {
    const Vector x = L.point(s);
    for (int k : {0, L.grid().n_steps()}) {
      const double t = L.grid().time(k);
      if (spec.exit_gain(t, x, 0.0) != spec.exit_gain(t, x, ztop)) return false;
      if (spec.stop_gain(t, x, 0.0) != spec.stop_gain(t, x, ztop)) return false;
      for (const auto& a : spec.action_set)
        if (spec.running_gain(t, x, 0.0, a) != spec.running_gain(t, x, ztop, a)) return false;
    }
    if (spec.domain(x, 0.0) != spec.domain(x, ztop)) return false;
  }
  return true;
}

bool costs_nonnegative(const ProblemSpec& spec, const Lattice& L) {
  for (int s = 0; s < L.n_states(); ++s)
    for (int k : {0, L.grid().n_steps() - 1}) {
      const double t = L.grid().time(k);
      if ((spec.cost_plus(t, L.point(s)).array() < 0.0).any()) return false;
      if ((spec.cost_minus(t, L.point(s)).array() < 0.0).any()) return false;
    }
  return true;
}

}  // namespace

VerificationSuiteReport run_verification_suite(const BenchmarkInstance& inst, const SuiteSettings& cfg) {
  VerificationSuiteReport report;
  SuiteBuilder suite(report, inst.name);
  const ProblemSpec& spec = inst.spec;
  const LatticeModel model = build_lattice(spec, inst.lattice);
  const Lattice& L = model.lattice;
  const int n = L.grid().n_steps();
  const Solution sol = solve_backward(spec, model, cfg.solver);
  const NodeRef root = root_node(model, inst.x0, inst.z0);
  const double v_root = sol.value.v[L.node(0, root.s, root.j)];
  const NoiseFunctionalPolicy feedback = lattice_feedback_policy(spec, model, sol.policy);

  suite.run("one_step_residual", [&](SuiteEntry& e) {
    const ResidualReport r = one_step_residual(spec, model, sol.value);
    e.statistic = r.max_residual;
    e.tolerance = cfg.tol_residual;
    e.pass = r.max_residual <= cfg.tol_residual;
    e.detail = std::to_string(r.nodes_checked) + " interior nodes";
  });

  suite.run("value_above_stop_gain", [&](SuiteEntry& e) {
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
      for (int s = 0; s < L.n_states(); ++s)
        for (int j = 0; j < L.n_fuel(); ++j)
          if (L.interior(s, j))
            worst = std::max(worst, spec.stop_gain(L.grid().time(k), L.point(s), spec.payoff_fuel(L.fuel_at(j))) -
                                        sol.value.v[L.node(k, s, j)]);
    e.statistic = worst;
    e.tolerance = cfg.tol_residual;
    e.pass = worst <= cfg.tol_residual;
  });

  if (L.finite_fuel()) {
    suite.run("fuel_monotonicity", [&](SuiteEntry& e) {
      e.tolerance = cfg.tol_residual;
      if (!costs_nonnegative(spec, L) || !gains_ignore_fuel(spec, L)) {
        e.statistic = std::nan("");
        e.pass = true;
        e.detail = "skipped: needs nonnegative costs and fuel-free gains";
        return;
      }
      double worst = -HUGE_VAL;
      for (int k = 0; k <= n; ++k)
        for (int s = 0; s < L.n_states(); ++s)
          for (int j = 0; j + 1 < L.n_fuel(); ++j)
            worst = std::max(worst, sol.value.v[L.node(k, s, j + 1)] - sol.value.v[L.node(k, s, j)]);
      e.statistic = std::max(worst, 0.0);
      e.pass = worst <= cfg.tol_residual;
    });
  }

  suite.run("policy_forward_value", [&](SuiteEntry& e) {
    const double j = evaluate_lattice_policy(spec, model, sol.policy, 0, root);
    e.statistic = std::abs(j - v_root);
    e.tolerance = cfg.tol_residual * std::max(1.0, std::abs(v_root)) * 10.0;
    e.pass = e.statistic <= e.tolerance;
  });

  suite.run("brute_force_oracle", [&](SuiteEntry& e) {
    e.tolerance = cfg.tol_residual;
    try {
      const double bf = brute_force_value(spec, model, root, BruteForceOptions{cfg.max_tree_nodes});
      e.statistic = std::abs(bf - v_root);
      e.pass = e.statistic <= cfg.tol_residual;
    } catch (const SearchLimitError&) {
      e.statistic = std::nan("");
      e.pass = true;
      e.detail = "skipped: instance too large for exhaustive search";
    }
  });

  auto dpp_entry = [&](const std::string& name, const LeafRule& leaf) {
    suite.run(name, [&](SuiteEntry& e) {
      DppOptions opt;
      opt.seed = cfg.seed;
      opt.tree.max_tree_nodes = cfg.max_tree_nodes;
      opt.samples = cfg.random_policies;
      DppResult r;
      try {
        r = check_dpp(spec, model, sol.value, root, leaf, opt);
      } catch (const SearchLimitError&) {
        opt.mode = DppMode::Sampled;
        r = check_dpp(spec, model, sol.value, root, leaf, opt);
      }
      e.tolerance = cfg.tol_dpp;
      if (r.one_sided) {
        e.statistic = r.residual;
        e.pass = r.residual >= -cfg.tol_dpp;
        e.detail = "sampled, one-sided: v(root) - best sampled policy";
      } else {
        e.statistic = r.residual;
        e.pass = r.residual <= cfg.tol_dpp;
        e.detail = "exact enumeration";
      }
    });
  };
  dpp_entry("dpp_deterministic_step", LeafAtStep{n / 2});
  {
    // Marked region: states at least two nodes above the start along the first axis.
    LeafOnHitting hit;
    hit.region.assign(L.slice_size(), 0);
    const int base = L.multi_index(root.s)[0];
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j)
        hit.region[static_cast<std::size_t>(s) * L.n_fuel() + j] = L.multi_index(s)[0] >= base + 2;
    dpp_entry("dpp_hitting_time", hit);
  }

  suite.run("supermartingale_exact", [&](SuiteEntry& e) {
    std::mt19937_64 rng(cfg.seed);
    std::vector<PolicyField> policies;
    for (std::size_t i = 0; i < cfg.random_policies; ++i) policies.push_back(random_lattice_policy(spec, model, rng));
    const SupermartingaleReport r = check_supermartingale_exact(spec, model, sol.value, policies, &sol.policy);
    e.statistic = std::max(r.max_violation, r.max_martingale_gap);
    e.tolerance = cfg.tol_residual;
    e.pass = r.max_violation <= cfg.tol_residual && r.max_martingale_gap <= cfg.tol_residual;
    e.detail = std::to_string(policies.size()) + " random policies, " + std::to_string(r.checks) + " comparisons";
  });

  SimulationOptions sim;
  sim.threads = cfg.threads;
  std::optional<PathBundle> bundle;
  suite.run("gamma_lambda_identity", [&](SuiteEntry& e) {
    bundle = simulate_paths(spec, feedback, inst.x0, inst.z0, L.grid(), cfg.mc_paths, cfg.seed, sim);
    double worst = 0.0;
    for (const auto& p : bundle->paths)
      worst = std::max(worst, std::abs(evaluate_gamma(spec, p) - evaluate_lambda(spec, p)));
    e.statistic = worst;
    e.tolerance = cfg.tol_identity;
    e.pass = worst <= cfg.tol_identity;
    e.detail = std::to_string(cfg.mc_paths) + " paths";
  });

  suite.run("supermartingale_monte_carlo", [&](SuiteEntry& e) {
    if (!bundle) throw SpecError("no simulated bundle");
    const MTrace tr = compute_M(spec, *bundle, model, sol.value);
    double h = 0.0;
    for (const auto& ax : L.axes()) h = std::max(h, ax.h);
    const double allowance = cfg.mc_bias * (h + L.grid().dt());
    const MonteCarloMartingaleReport r = check_supermartingale_mc(tr, false, cfg.z_level, allowance, true);
    e.statistic = r.worst_z;
    e.tolerance = cfg.z_level;
    e.pass = r.supermartingale;
    e.detail = "max over s of (mean(M_s - M_0) - " + std::to_string(allowance) + ") / SE; " +
               std::to_string(tr.extension_count) + " off-box lookups";
  });

  suite.run("reference_invariance", [&](SuiteEntry& e) {
    InvarianceOptions opt;
    opt.alpha = cfg.ks_alpha;
    opt.threads = cfg.threads;
    const InvarianceResult r = check_reference_invariance(spec, feedback, inst.x0, inst.z0, L.grid(),
                                                          cfg.invariance_paths, cfg.seed, cfg.seed + 1, opt);
    e.statistic = r.combined_se > 0.0 ? std::abs(r.first.mean - r.second.mean) / r.combined_se
                                      : std::abs(r.first.mean - r.second.mean);
    e.tolerance = cfg.z_level;
    e.pass = r.pass;
    double worst_ks = 0.0;
    for (const auto& k : r.ks) worst_ks = std::max(worst_ks, k.statistic / k.critical);
    e.detail = "J1=" + std::to_string(r.first.mean) + " J2=" + std::to_string(r.second.mean) +
               " max KS/critical=" + std::to_string(worst_ks);
  });

  if (L.finite_fuel()) {
    suite.run("truncation_continuity", [&](SuiteEntry& e) {
      const double h = L.axes()[0].h;
      Vector x2 = inst.x0;
      x2(0) += 0.5 * h;
      const double z2 = std::min(spec.zbar(), inst.z0 + 0.5 * L.fuel_step());
      const std::vector<StartPair> pairs{{inst.x0, inst.z0, inst.x0, inst.z0}, {inst.x0, inst.z0, x2, z2}};
      const ContinuityReport r = check_truncation_continuity(spec, L.grid(), pairs, {feedback}, 2.0 * h,
                                                             cfg.continuity_paths, cfg.seed);
      // The identical pair must agree exactly; the shifted pair is a diagnostic.
      e.statistic = std::abs(r.entries[0].mean_difference);
      e.tolerance = 0.0;
      e.pass = e.statistic == 0.0;
      e.detail = "shifted pair difference " + std::to_string(r.entries[1].mean_difference) + " +- " +
                 std::to_string(r.entries[1].std_error);
    });
  }

  for (int m : cfg.concatenation_m) {
    suite.run("concatenation_m" + std::to_string(m), [&](SuiteEntry& e) {
      std::mt19937_64 rng(cfg.seed + 17);
      // a base that keeps going, so paths reach the pasting step
      const PolicyField base = random_lattice_policy(spec, model, rng, RandomPolicyOptions{0.0, 0.25});
      const NodeBins bins = block_bins(L, 3, 2);
      const ConcatenationResult r = check_concatenation_bound(spec, model, sol.value, base, root, n / 2, bins.bins,
                                                              bins.representatives, m, cfg.concatenation_paths,
                                                              cfg.seed + static_cast<std::uint64_t>(m));
      e.statistic = r.margin;
      e.tolerance = 0.0;
      e.pass = r.pass;
      e.detail = "margin >= 0 passes; pasted=" + std::to_string(r.pasted) + " rhs=" + std::to_string(r.rhs) +
                 " eps=" + std::to_string(r.epsilon);
    });
  }
  return report;
}

}  // namespace fuelgrid
