#pragma once

#include "fuelgrid/problem.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace fuelgrid {

/// Uniform grid t0 = times[0] < ... < times[n] = tN.
class TimeGrid {
 public:
  TimeGrid(double t0, double tN, int n_steps);

  double t0() const { return t0_; }
  double tN() const { return tN_; }
  int n_steps() const { return n_; }
  double dt() const { return (tN_ - t0_) / n_; }
  /// times[k]; exactly tN at k = n_steps.
  double time(int k) const;
  std::vector<double> times() const;
  /// Index of a grid time. Throws SpecError if t is not on the grid.
  int step_of(double t) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  double t0_;
  double tN_;
  int n_;
};

/// Grid-aligned bounded-variation control xi = xi^+ - xi^-.
///
/// Column k of inc_plus / inc_minus holds the (non-negative) jumps of xi^+
/// and xi^- applied at times[k]. Since xi is left-continuous, xi at
/// times[k] only sums columns strictly before k, and xi at t0 is 0.
struct BVControlPath {
  TimeGrid grid;
  Matrix inc_plus;   // d x n_steps
  Matrix inc_minus;  // d x n_steps

  static BVControlPath zero(const TimeGrid& grid, int d);

  int dim() const { return static_cast<int>(inc_plus.rows()); }
  /// Variation contributed by the jumps at step k (summed over coordinates).
  double step_variation(int k) const;
  /// xi at times[k].
  Vector value_at(int k) const;
};

/// {0,1}-valued, non-decreasing, left-continuous stopping indicator:
/// eta at times[k] is 1 iff k > flip_index.
struct EtaPath {
  TimeGrid grid;
  std::optional<int> flip_index;

  /// eta at times[k].
  bool at(int k) const { return flip_index && k > *flip_index; }
  /// Right limit eta_{times[k]+}; constant on (times[k], times[k+1]].
  bool right_limit(int k) const { return flip_index && k >= *flip_index; }
  /// Grid index of the stopping time tau^eta (n_steps when eta never flips).
  int tau_step() const { return flip_index ? *flip_index : grid.n_steps(); }

  /// Equal as processes on the grid.
  bool same_process(const EtaPath& other) const;
};

/// Sum over coordinates of the jumps of xi^+ and xi^- at steps [from_step, to_step).
double total_variation(const BVControlPath& xi, int from_step, int to_step);

/// Z at every grid time: Z[k] = z0 + total_variation(xi, 0, k).
std::vector<double> fuel_process(const BVControlPath& xi, double z0);

double eta_to_tau(const EtaPath& eta);
EtaPath tau_to_eta(int tau_step, const TimeGrid& grid);

enum class TruncationMode {
  Strict,  // drop every jump from the first step at which the budget is reached
  Clip,    // additionally keep the fraction of that jump that fits in the budget
};

/// Truncation of xi after from_step at the given fuel budget.
BVControlPath truncate_control(const BVControlPath& xi, int from_step, double budget,
                               TruncationMode mode = TruncationMode::Strict);

/// What a policy decides at a grid step. Empty increment vectors mean no jump.
struct Decision {
  bool stop = false;
  int action = 0;
  Vector inc_plus;
  Vector inc_minus;

  static Decision stop_now() { return Decision{true, 0, {}, {}}; }
  static Decision continue_with(int action) { return Decision{false, action, {}, {}}; }
};

/// Everything a policy may read at step k: the noise increments before k and,
/// in feedback form, the states and fuel at steps 0..k.
struct PolicyInput {
  int step;
  Eigen::Ref<const Matrix> noise;   // d' x step
  Eigen::Ref<const Matrix> states;  // d x (step+1), or d x 0 in open loop
  std::span<const double> fuel;     // step+1 entries, or empty in open loop

  bool has_state() const { return states.cols() > 0; }
  Vector x() const { return states.col(states.cols() - 1); }
  double z() const { return fuel.back(); }
};

/// A control-stopping rule represented as a deterministic functional of the
/// observed noise (and optionally of the induced state history).
struct NoiseFunctionalPolicy {
  std::function<Decision(const PolicyInput&)> decide;
};

/// Optional state integration during replay (feedback form).
struct StateTrack {
  const ProblemSpec* spec = nullptr;
  Vector x0;
  double z0 = 0.0;
  TruncationMode truncation = TruncationMode::Strict;
};

struct ReplayResult {
  BVControlPath control;
  EtaPath eta;
  std::vector<int> actions;    // per step
  Matrix states;               // d x (n+1); empty without state tracking
  std::vector<double> fuel;    // n+1 entries; empty without state tracking
};

/// Materialise the treble (eta, actions, xi) a policy produces on one noise
/// realisation (d' x n_steps increments). With a state track, the controlled
/// state is integrated by Euler-Maruyama with left-point controls and, in
/// finite-fuel mode, jumps are truncated at the remaining budget.
ReplayResult replay_policy(const NoiseFunctionalPolicy& policy, const Matrix& noise, const TimeGrid& grid,
                           int state_dim, const std::optional<StateTrack>& state_track = std::nullopt);

/// One Euler-Maruyama step: X + mu dt + sigma dW + jump.
Vector euler_step(const ProblemSpec& spec, double t, double dt, const Vector& x, const Vector& action,
                  const Eigen::Ref<const Vector>& dW, const Vector& jump);

/// Never stops, action 0, no jumps.
NoiseFunctionalPolicy zero_policy();
/// Stops unconditionally at the given step.
NoiseFunctionalPolicy stop_at_step_policy(int step);
/// Replays a fixed treble regardless of noise.
NoiseFunctionalPolicy open_loop_policy(const BVControlPath& control, const EtaPath& eta, std::vector<int> actions);

/// One row per grid time: step, time, inc_plus..., inc_minus..., eta (no jumps at the last row).
void write_control_csv(std::ostream& os, const BVControlPath& xi, const EtaPath& eta);

}  // namespace fuelgrid
