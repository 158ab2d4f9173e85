#include "fuelgrid/payoff.hpp"

#include "fuelgrid/io.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace fuelgrid {

double jump_cost(const ProblemSpec& spec, double t, const Vector& x, const Vector& inc_plus, const Vector& inc_minus) {
  const double plus = inc_plus.size() ? inc_plus.sum() : 0.0;
  const double minus = inc_minus.size() ? inc_minus.sum() : 0.0;
  if (plus == 0.0 && minus == 0.0) return 0.0;
  if (!spec.segment_costs()) {
    double c = 0.0;
    if (plus != 0.0) c += spec.cost_plus(t, x).dot(inc_plus);
    if (minus != 0.0) c += spec.cost_minus(t, x).dot(inc_minus);
    return c;
  }
  if (!spec.costs_uniform) throw SpecError("segment-integral costs need direction-uniform cost functions");
  const int panels = std::get<SegmentIntegral>(spec.cost_convention).quadrature_steps;
  if (panels < 1) throw SpecError("segment integral needs at least one quadrature panel");
  const double length = plus + minus;
  Vector dir = Vector::Zero(x.size());
  if (inc_plus.size()) dir += inc_plus;
  if (inc_minus.size()) dir -= inc_minus;
  dir /= length;
  const double wp = plus / length;
  const double wm = minus / length;

  static const double node = std::sqrt(3.0 / 5.0);
  static const double nodes[3] = {-node, 0.0, node};
  static const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double width = length / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    double panel = 0.0;
    for (int q = 0; q < 3; ++q) {
      const Vector y = x + (mid + 0.5 * width * nodes[q]) * dir;
      double c = 0.0;
      if (wp > 0.0) c += wp * spec.cost_plus(t, y)(0);
      if (wm > 0.0) c += wm * spec.cost_minus(t, y)(0);
      panel += weights[q] * c;
    }
    total += 0.5 * width * panel;
  }
  return total;
}

double cost_integral(const ProblemSpec& spec, const PathRecord& path, int from_step, int to_step) {
  const TimeGrid& grid = path.control.grid;
  if (from_step < 0 || from_step > to_step || to_step > grid.n_steps())
    throw std::out_of_range("cost_integral: need 0 <= from_step <= to_step <= n_steps");
  double c = 0.0;
  for (int k = from_step; k < to_step; ++k) {
    if (path.control.step_variation(k) == 0.0) continue;
    c += jump_cost(spec, grid.time(k), path.states.col(k), path.control.inc_plus.col(k),
                   path.control.inc_minus.col(k));
  }
  return c;
}

namespace {

// f dt minus the jump charge at step k.
double step_accrual(const ProblemSpec& spec, const PathRecord& path, int k) {
  const TimeGrid& grid = path.control.grid;
  const double t = grid.time(k);
  const Vector x = path.states.col(k);
  const double z = spec.payoff_fuel(path.fuel[static_cast<std::size_t>(k)]);
  const Vector& a = spec.action_set[static_cast<std::size_t>(path.actions[static_cast<std::size_t>(k)])];
  double acc = spec.running_gain(t, x, z, a) * grid.dt();
  if (path.control.step_variation(k) != 0.0)
    acc -= jump_cost(spec, t, x, path.control.inc_plus.col(k), path.control.inc_minus.col(k));
  return acc;
}

double gain_at(const ProblemSpec& spec, const GainFn& g, const PathRecord& path, int k) {
  return g(path.control.grid.time(k), path.states.col(k), spec.payoff_fuel(path.fuel[static_cast<std::size_t>(k)]));
}

}  // namespace

double evaluate_gamma(const ProblemSpec& spec, const PathRecord& path, int from_step) {
  const int end = std::min(path.tau_step, path.rho_step);
  if (from_step < 0 || from_step > end)
    throw SpecError("evaluate_gamma: from_step " + std::to_string(from_step) + " is past min(tau, rho)");
  double acc = 0.0;
  for (int k = from_step; k < end; ++k) acc += step_accrual(spec, path, k);
  if (path.rho_step <= path.tau_step) return acc + gain_at(spec, spec.exit_gain, path, path.rho_step);
  return acc + gain_at(spec, spec.stop_gain, path, path.tau_step);
}

double evaluate_lambda(const ProblemSpec& spec, const PathRecord& path, int from_step) {
  const EtaPath& eta = path.eta;
  const int rho = path.rho_step;
  if (from_step < 0 || from_step > rho) throw SpecError("evaluate_lambda: from_step past the exit step");
  double acc = 0.0;
  for (int k = from_step; k < rho; ++k)
    if (!eta.right_limit(k)) acc += step_accrual(spec, path, k);
  if (!eta.at(rho)) acc += gain_at(spec, spec.exit_gain, path, rho);
  for (int k = from_step; k < rho; ++k)
    if (eta.right_limit(k) && !eta.at(k)) acc += gain_at(spec, spec.stop_gain, path, k);
  return acc;
}

void MeanAccumulator::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

Estimate MeanAccumulator::estimate() const {
  return Estimate{mean_, n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0, n_};
}

Estimate evaluate_J(const ProblemSpec& spec, const PathBundle& bundle) {
  if (bundle.paths.empty()) throw SpecError("evaluate_J: empty bundle");
  MeanAccumulator acc;
  for (std::size_t i = 0; i < bundle.paths.size(); ++i) {
    const double g = evaluate_gamma(spec, bundle.paths[i]);
    if (!std::isfinite(g)) throw NumericalError("non-finite payoff on path " + std::to_string(i));
    acc.add(g);
  }
  return acc.estimate();
}

void path_m_process(const ProblemSpec& spec, const PathRecord& path, const LatticeModel& model,
                    const ValueField& value, RowRef N, RowRef M,
                    std::size_t* extended) {
  const int n = path.control.grid.n_steps();
  const int tau = path.tau_step;
  const int rho = path.rho_step;
  const int end = std::min(tau, rho);
  double acc = 0.0;
  for (int u = 0; u <= n; ++u) {
    if (u > 0 && u - 1 < end) acc += step_accrual(spec, path, u - 1);
    double nu = acc;
    if (rho <= tau && rho < u) nu += gain_at(spec, spec.exit_gain, path, rho);
    if (tau < std::min(u, rho)) nu += gain_at(spec, spec.stop_gain, path, tau);
    N(u) = nu;
    double m = nu;
    if (end >= u) {
      bool ext = false;
      m += lookup_value(model, value, u, path.states.col(u), path.fuel[static_cast<std::size_t>(u)], &ext);
      if (ext && extended) ++*extended;
    }
    M(u) = m;
  }
}

MTrace compute_M(const ProblemSpec& spec, const PathBundle& bundle, const LatticeModel& model,
                 const ValueField& value) {
  if (value.v.size() != model.lattice.size()) throw SpecError("compute_M: value field does not match the lattice");
  if (!(bundle.grid == model.lattice.grid())) throw SpecError("compute_M: bundle grid differs from the lattice grid");
  const std::size_t P = bundle.n_paths();
  const int n = bundle.grid.n_steps();
  MTrace tr{Matrix(P, n + 1), Matrix(P, n + 1), Vector(P), Vector(P), 0, value.id()};
  for (std::size_t p = 0; p < P; ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    path_m_process(spec, bundle.paths[p], model, value, tr.N.row(i), tr.M.row(i), &tr.extension_count);
    tr.gamma(i) = evaluate_gamma(spec, bundle.paths[p]);
    tr.lambda(i) = evaluate_lambda(spec, bundle.paths[p]);
  }
  return tr;
}

void write_mtrace_csv(std::ostream& os, const MTrace& trace, const TimeGrid& grid) {
  io::write_csv_row(os, {"path", "step", "time", "N", "M"});
  for (Eigen::Index p = 0; p < trace.N.rows(); ++p)
    for (Eigen::Index u = 0; u < trace.N.cols(); ++u)
      io::write_csv_row(os, {std::to_string(p), std::to_string(u), io::format_number(grid.time(static_cast<int>(u))),
                             io::format_number(trace.N(p, u)), io::format_number(trace.M(p, u))});
}

}  // namespace fuelgrid
