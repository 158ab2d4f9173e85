#include "fuelgrid/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fuelgrid {

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw SpecError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
  if (n == 0 || m == 0 || !(alpha > 0.0 && alpha < 1.0)) throw SpecError("ks_critical_value: bad arguments");
  const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

MonteCarloMartingaleReport check_supermartingale_mc(const MTrace& trace, bool expect_martingale, double z_level,
                                                    double allowance, bool from_start_only) {
  const Matrix& M = trace.M;
  const Eigen::Index P = M.rows();
  if (P < 2) throw SpecError("check_supermartingale_mc: need at least two paths");
  MonteCarloMartingaleReport rep;
  rep.worst_z = -std::numeric_limits<double>::infinity();
  for (Eigen::Index u = 0; u < (from_start_only ? 1 : M.cols()); ++u)
    for (Eigen::Index s = u + 1; s < M.cols(); ++s) {
      const Eigen::ArrayXd diff = (M.col(s) - M.col(u)).array();
      const double mean = diff.mean();
      const double var = (diff - mean).square().sum() / static_cast<double>(P - 1);
      const double se = std::sqrt(var / static_cast<double>(P));
      // exact equality up to rounding when the difference is deterministic
      const double rounding = 1e-12 * (1.0 + std::abs(M.col(u).mean()));
      const double slack = z_level * se + allowance + rounding;
      auto score = [&](double m) {
        return se > rounding ? (m - allowance) / se : (m <= slack ? 0.0 : HUGE_VAL);
      };
      rep.worst_z = std::max(rep.worst_z, score(mean));
      rep.max_abs_z = std::max(rep.max_abs_z, score(std::abs(mean)));
      if (mean > slack) rep.supermartingale = false;
      if (expect_martingale && std::abs(mean) > slack) rep.martingale = false;
    }
  if (!expect_martingale) rep.martingale = false;
  return rep;
}

namespace {

struct Summary {
  MeanAccumulator J;
  std::vector<double> tau, rho, z_T;
  std::vector<std::vector<double>> x_T;
};

Summary summarise(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                  const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options) {
  Summary s;
  s.x_T.resize(static_cast<std::size_t>(spec.dims.state));
  const int n = grid.n_steps();
  for_each_path(spec, policy, x0, z0, grid, n_paths, seed, options, [&](std::size_t i, const PathRecord& r) {
    const double g = evaluate_gamma(spec, r);
    if (!std::isfinite(g)) throw NumericalError("non-finite payoff on path " + std::to_string(i));
    s.J.add(g);
    s.tau.push_back(grid.time(r.tau_step));
    s.rho.push_back(grid.time(r.rho_step));
    s.z_T.push_back(r.fuel.back());
    for (int c = 0; c < spec.dims.state; ++c) s.x_T[static_cast<std::size_t>(c)].push_back(r.states(c, n));
  });
  return s;
}

}  // namespace

InvarianceResult check_reference_invariance(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy,
                                            const Vector& x0, double z0, const TimeGrid& grid,
                                            std::size_t n_paths, std::uint64_t seed1, std::uint64_t seed2,
                                            const InvarianceOptions& options) {
  if (n_paths < 2) throw SpecError("check_reference_invariance: need at least two paths");
  SimulationOptions first;
  first.threads = options.threads;
  SimulationOptions second = first;
  second.construction = options.second_construction;
  Summary a = summarise(spec, policy, x0, z0, grid, n_paths, seed1, first);
  Summary b = summarise(spec, policy, x0, z0, grid, n_paths, seed2, second);

  InvarianceResult res;
  res.first = a.J.estimate();
  res.second = b.J.estimate();
  res.combined_se = std::hypot(res.first.std_error, res.second.std_error);
  const double gap = std::abs(res.first.mean - res.second.mean);
  res.mean_pass = gap <= 3.0 * res.combined_se + 1e-12 * (1.0 + std::abs(res.first.mean));

  const double crit = ks_critical_value(n_paths, n_paths, options.alpha);
  auto ks = [&](std::string name, std::vector<double>& x, std::vector<double>& y) {
    KsEntry e{std::move(name), ks_statistic(std::move(x), std::move(y)), crit, true};
    e.pass = e.statistic <= e.critical;
    res.ks.push_back(std::move(e));
  };
  ks("tau", a.tau, b.tau);
  ks("rho", a.rho, b.rho);
  for (std::size_t c = 0; c < a.x_T.size(); ++c) ks("x_T_" + std::to_string(c), a.x_T[c], b.x_T[c]);
  ks("z_T", a.z_T, b.z_T);

  res.pass = res.mean_pass;
  for (const auto& e : res.ks) res.pass = res.pass && e.pass;
  return res;
}

ContinuityReport check_truncation_continuity(const ProblemSpec& spec, const TimeGrid& grid,
                                             const std::vector<StartPair>& pairs,
                                             const std::vector<NoiseFunctionalPolicy>& policies, double delta,
                                             std::size_t n_paths, std::uint64_t seed) {
  if (!spec.finite_fuel()) throw SpecError("check_truncation_continuity: finite fuel only");
  if (n_paths < 2) throw SpecError("check_truncation_continuity: need at least two paths");
  ProblemSpec restarted = spec;
  restarted.start_time = grid.t0();
  const double zbar = spec.zbar();
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto& p = pairs[q];
    if (p.z2 < p.z1) throw SpecError("pair " + std::to_string(q) + ": z2 < z1");
    if (std::hypot((p.x1 - p.x2).norm(), p.z1 - p.z2) >= delta)
      throw SpecError("pair " + std::to_string(q) + ": points are not within delta");
  }

  ContinuityReport rep;
  for (std::size_t q = 0; q < pairs.size(); ++q)
    for (std::size_t k = 0; k < policies.size(); ++k) {
      const auto& p = pairs[q];
      MeanAccumulator diff;
      for (std::size_t i = 0; i < n_paths; ++i) {
        const Matrix noise = generate_noise(restarted.dims.noise, grid, seed, i);
        const PathRecord one =
            simulate_path(restarted, policies[k], p.x1, p.z1, grid, noise, TruncationMode::Strict, i);
        const BVControlPath cut = truncate_control(one.control, 0, zbar - p.z2, TruncationMode::Strict);
        const PathRecord two = simulate_path(restarted, open_loop_policy(cut, one.eta, one.actions), p.x2, p.z2,
                                             grid, noise, TruncationMode::Strict, i);
        diff.add(evaluate_gamma(restarted, one) - evaluate_gamma(restarted, two));
      }
      const Estimate e = diff.estimate();
      rep.entries.push_back(ContinuityEntry{q, k, e.mean, e.std_error});
      rep.max_abs_difference = std::max(rep.max_abs_difference, std::abs(e.mean));
      rep.max_std_error = std::max(rep.max_std_error, e.std_error);
    }
  return rep;
}

}  // namespace fuelgrid
