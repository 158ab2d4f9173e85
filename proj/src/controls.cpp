#include "fuelgrid/controls.hpp"

#include "fuelgrid/io.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fuelgrid {

TimeGrid::TimeGrid(double t0, double tN, int n_steps) : t0_(t0), tN_(tN), n_(n_steps) {
  if (n_steps < 1) throw SpecError("time grid needs at least one step");
  if (!(tN > t0)) throw SpecError("time grid needs tN > t0");
}

double TimeGrid::time(int k) const {
  if (k < 0 || k > n_) throw std::out_of_range("time index out of range");
  if (k == n_) return tN_;
  return t0_ + (tN_ - t0_) * static_cast<double>(k) / static_cast<double>(n_);
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> out(static_cast<std::size_t>(n_) + 1);
  for (int k = 0; k <= n_; ++k) out[static_cast<std::size_t>(k)] = time(k);
  return out;
}

int TimeGrid::step_of(double t) const {
  const double guess = std::round((t - t0_) / dt());
  if (guess < 0 || guess > n_) throw SpecError("time " + io::format_number(t) + " is outside the grid");
  const int k = static_cast<int>(guess);
  if (std::abs(time(k) - t) > 1e-12 * std::max(1.0, std::abs(t)))
    throw SpecError("time " + io::format_number(t) + " is not a grid time");
  return k;
}

BVControlPath BVControlPath::zero(const TimeGrid& grid, int d) {
  return BVControlPath{grid, Matrix::Zero(d, grid.n_steps()), Matrix::Zero(d, grid.n_steps())};
}

double BVControlPath::step_variation(int k) const { return inc_plus.col(k).sum() + inc_minus.col(k).sum(); }

Vector BVControlPath::value_at(int k) const {
  if (k < 0 || k > grid.n_steps()) throw std::out_of_range("control index out of range");
  return inc_plus.leftCols(k).rowwise().sum() - inc_minus.leftCols(k).rowwise().sum();
}

bool EtaPath::same_process(const EtaPath& other) const {
  if (!(grid == other.grid)) return false;
  for (int k = 0; k <= grid.n_steps(); ++k)
    if (at(k) != other.at(k) || right_limit(k) != other.right_limit(k)) {
      // right limit at the horizon is never observed
      if (k == grid.n_steps() && at(k) == other.at(k)) continue;
      return false;
    }
  return true;
}

double total_variation(const BVControlPath& xi, int from_step, int to_step) {
  if (from_step < 0 || from_step > to_step || to_step > xi.grid.n_steps())
    throw std::out_of_range("total_variation: need 0 <= from_step <= to_step <= n_steps");
  double v = 0.0;
  for (int k = from_step; k < to_step; ++k) v += xi.step_variation(k);
  return v;
}

std::vector<double> fuel_process(const BVControlPath& xi, double z0) {
  if (!(z0 >= 0.0)) throw SpecError("fuel_process: z0 must be >= 0");
  const int n = xi.grid.n_steps();
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  double v = 0.0;
  z[0] = z0;
  for (int k = 0; k < n; ++k) {
    v += xi.step_variation(k);
    z[static_cast<std::size_t>(k) + 1] = z0 + v;
  }
  return z;
}

double eta_to_tau(const EtaPath& eta) { return eta.grid.time(eta.tau_step()); }

EtaPath tau_to_eta(int tau_step, const TimeGrid& grid) {
  if (tau_step < 0 || tau_step > grid.n_steps()) throw std::out_of_range("tau_to_eta: step out of range");
  return EtaPath{grid, tau_step};
}

BVControlPath truncate_control(const BVControlPath& xi, int from_step, double budget, TruncationMode mode) {
  if (!(budget >= 0.0)) throw SpecError("truncate_control: budget must be >= 0");
  const int n = xi.grid.n_steps();
  if (from_step < 0 || from_step > n) throw std::out_of_range("truncate_control: from_step out of range");
  BVControlPath out = xi;
  double used = 0.0;
  for (int k = from_step; k < n; ++k) {
    const double v = xi.step_variation(k);
    if (used + v < budget) {
      used += v;
      continue;
    }
    // k is the first step at which the budget is reached.
    if (mode == TruncationMode::Clip && v > 0.0) {
      const double scale = (budget - used) / v;
      out.inc_plus.col(k) *= scale;
      out.inc_minus.col(k) *= scale;
    } else {
      out.inc_plus.col(k).setZero();
      out.inc_minus.col(k).setZero();
    }
    out.inc_plus.rightCols(n - k - 1).setZero();
    out.inc_minus.rightCols(n - k - 1).setZero();
    break;
  }
  return out;
}

Vector euler_step(const ProblemSpec& spec, double t, double dt, const Vector& x, const Vector& action,
                  const Eigen::Ref<const Vector>& dW, const Vector& jump) {
  Vector next = x + spec.drift(t, x, action) * dt + spec.diffusion(t, x, action) * dW;
  if (jump.size() > 0) next += jump;
  return next;
}

namespace {

void check_increment(const Vector& inc, int d, int step) {
  if (inc.size() == 0) return;
  if (inc.size() != d) throw SpecError("policy increment has wrong dimension at step " + std::to_string(step));
  if (!inc.allFinite() || (inc.array() < 0.0).any())
    throw SpecError("policy emitted a negative or non-finite increment at step " + std::to_string(step));
}

}  // namespace

ReplayResult replay_policy(const NoiseFunctionalPolicy& policy, const Matrix& noise, const TimeGrid& grid,
                           int state_dim, const std::optional<StateTrack>& state_track) {
  const int n = grid.n_steps();
  if (noise.cols() != n) throw SpecError("replay_policy: noise must have one column per step");
  const ProblemSpec* spec = state_track ? state_track->spec : nullptr;
  if (state_track && !spec) throw SpecError("replay_policy: state track without a problem");
  const int d = spec ? spec->dims.state : state_dim;
  if (d < 1) throw SpecError("replay_policy: state dimension must be positive");

  ReplayResult r{BVControlPath::zero(grid, d), EtaPath{grid, std::nullopt},
                 std::vector<int>(static_cast<std::size_t>(n), 0), Matrix(d, 0), {}};

  const double dt = grid.dt();
  double budget = std::numeric_limits<double>::infinity();
  if (state_track) {
    if (state_track->x0.size() != d) throw SpecError("replay_policy: x0 has wrong dimension");
    if (spec->finite_fuel()) {
      if (!(state_track->z0 >= 0.0 && state_track->z0 <= spec->zbar()))
        throw SpecError("replay_policy: z0 outside [0, zbar]");
      budget = spec->zbar() - state_track->z0;
    }
    r.states.resize(d, n + 1);
    r.states.col(0) = state_track->x0;
    r.fuel.assign(static_cast<std::size_t>(n) + 1, state_track->z0);
  }

  const Matrix open_loop_states(d, 0);
  bool stopped = false;
  bool exhausted = false;
  int frozen_action = 0;
  double used = 0.0;
  double variation = 0.0;
  Vector jump(d);

  for (int k = 0; k < n; ++k) {
    if (!stopped) {
      const PolicyInput in{k, noise.leftCols(k),
                           state_track ? Eigen::Ref<const Matrix>(r.states.leftCols(k + 1))
                                       : Eigen::Ref<const Matrix>(open_loop_states),
                           state_track ? std::span<const double>(r.fuel.data(), static_cast<std::size_t>(k) + 1)
                                       : std::span<const double>()};
      const Decision dec = policy.decide(in);
      if (spec && (dec.action < 0 || dec.action >= static_cast<int>(spec->action_set.size())))
        throw SpecError("policy chose an action outside the action set at step " + std::to_string(k));
      if (dec.stop) {
        r.eta.flip_index = k;
        stopped = true;
        frozen_action = dec.action;
      } else {
        check_increment(dec.inc_plus, d, k);
        check_increment(dec.inc_minus, d, k);
        r.actions[static_cast<std::size_t>(k)] = dec.action;
        if (dec.inc_plus.size()) r.control.inc_plus.col(k) = dec.inc_plus;
        if (dec.inc_minus.size()) r.control.inc_minus.col(k) = dec.inc_minus;
      }
    }
    if (stopped) r.actions[static_cast<std::size_t>(k)] = frozen_action;
    if (!state_track) continue;

    if (spec->finite_fuel()) {
      const double v = r.control.step_variation(k);
      if (exhausted || used + v >= budget) {
        if (!exhausted && state_track->truncation == TruncationMode::Clip && v > 0.0) {
          const double scale = (budget - used) / v;
          r.control.inc_plus.col(k) *= scale;
          r.control.inc_minus.col(k) *= scale;
        } else {
          r.control.inc_plus.col(k).setZero();
          r.control.inc_minus.col(k).setZero();
        }
        exhausted = true;
      } else {
        used += v;
      }
    }
    jump = r.control.inc_plus.col(k) - r.control.inc_minus.col(k);
    const Vector& a = spec->action_set[static_cast<std::size_t>(r.actions[static_cast<std::size_t>(k)])];
    const Vector x = r.states.col(k);
    r.states.col(k + 1) = euler_step(*spec, grid.time(k), dt, x, a, noise.col(k), jump);
    if (!r.states.col(k + 1).allFinite())
      throw NumericalError("non-finite coefficients or state in the update at step " + std::to_string(k));
    variation += r.control.step_variation(k);
    r.fuel[static_cast<std::size_t>(k) + 1] = state_track->z0 + variation;
  }
  return r;
}

NoiseFunctionalPolicy zero_policy() {
  return {[](const PolicyInput&) { return Decision::continue_with(0); }};
}

NoiseFunctionalPolicy stop_at_step_policy(int step) {
  return {[step](const PolicyInput& in) {
    return in.step >= step ? Decision::stop_now() : Decision::continue_with(0);
  }};
}

NoiseFunctionalPolicy open_loop_policy(const BVControlPath& control, const EtaPath& eta, std::vector<int> actions) {
  return {[control, eta, actions = std::move(actions)](const PolicyInput& in) {
    const int k = in.step;
    if (eta.flip_index && k >= *eta.flip_index) return Decision::stop_now();
    Decision d = Decision::continue_with(actions.at(static_cast<std::size_t>(k)));
    d.inc_plus = control.inc_plus.col(k);
    d.inc_minus = control.inc_minus.col(k);
    return d;
  }};
}

void write_control_csv(std::ostream& os, const BVControlPath& xi, const EtaPath& eta) {
  const int d = xi.dim();
  const int n = xi.grid.n_steps();
  std::vector<std::string> header{"step", "time"};
  for (int i = 0; i < d; ++i) header.push_back("inc_plus_" + std::to_string(i));
  for (int i = 0; i < d; ++i) header.push_back("inc_minus_" + std::to_string(i));
  header.push_back("eta");
  io::write_csv_row(os, header);
  for (int k = 0; k <= n; ++k) {
    std::vector<std::string> row{std::to_string(k), io::format_number(xi.grid.time(k))};
    for (int i = 0; i < d; ++i) row.push_back(io::format_number(k < n ? xi.inc_plus(i, k) : 0.0));
    for (int i = 0; i < d; ++i) row.push_back(io::format_number(k < n ? xi.inc_minus(i, k) : 0.0));
    row.push_back(eta.at(k) ? "1" : "0");
    io::write_csv_row(os, row);
  }
}

}  // namespace fuelgrid
