#pragma once

#include "fuelgrid/controls.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fuelgrid {

struct Axis {
  double lo = 0.0;
  double h = 1.0;
  int count = 1;

  double at(int i) const { return lo + h * i; }
  double hi() const { return at(count - 1); }
};

/// Lattice request: state box [lo, hi] with spacing h per coordinate and a
/// number of time steps over [start_time, horizon].
struct LatticeSpec {
  Vector lo;
  Vector hi;
  Vector h;
  int n_steps = 10;
  bool auto_shrink = false;  // double n_steps until the stencil is feasible
  int max_shrink = 12;
};

/// Integer move of the chain, in units of the spacings.
using Offset = std::vector<int>;

/// Discretised (t, x, z) space. In finite-fuel mode the fuel axis is
/// {0, delta, ..., zbar} with delta equal to the spacing of the pushable
/// coordinates. In infinite-fuel mode there is a single inert fuel level.
class Lattice {
 public:
  Lattice(const ProblemSpec& spec, const TimeGrid& grid, std::vector<Axis> axes);

  const TimeGrid& grid() const { return grid_; }
  const std::vector<Axis>& axes() const { return axes_; }
  int dim() const { return static_cast<int>(axes_.size()); }
  int n_states() const { return n_states_; }
  int n_fuel() const { return n_fuel_; }
  int n_times() const { return grid_.n_steps() + 1; }
  bool finite_fuel() const { return finite_; }
  double fuel_step() const { return fuel_step_; }
  std::size_t slice_size() const { return static_cast<std::size_t>(n_states_) * n_fuel_; }
  std::size_t size() const { return slice_size() * n_times(); }

  std::size_t node(int k, int s, int j) const {
    return (static_cast<std::size_t>(k) * n_states_ + s) * n_fuel_ + j;
  }
  Vector point(int s) const;
  double fuel_at(int j) const { return finite_ ? j * fuel_step_ : 0.0; }
  std::vector<int> multi_index(int s) const;
  /// State index after an integer move, or nullopt when it leaves the lattice.
  std::optional<int> shift(int s, const Offset& offset) const;
  std::optional<int> neighbour(int s, int coordinate, int sign) const;
  /// Point reached by an integer move (on or off the lattice).
  Vector shifted_point(int s, const Offset& offset) const;
  /// Nearest state node; `clamped` is set when x lies outside the box.
  int nearest_state(const Vector& x, bool* clamped = nullptr) const;
  int nearest_fuel(double z) const;
  /// Domain membership at node (s, j); the domain does not depend on time.
  bool interior(int s, int j) const { return interior_[static_cast<std::size_t>(s) * n_fuel_ + j]; }

  std::uint64_t fingerprint() const;

 private:
  TimeGrid grid_;
  std::vector<Axis> axes_;
  std::vector<int> strides_;
  int n_states_ = 1;
  bool finite_ = false;
  int n_fuel_ = 1;
  double fuel_step_ = 0.0;
  std::vector<char> interior_;
};

struct StencilEntry {
  int direction;  // index into TransitionModel::directions
  double prob;
};

/// One-step chain transitions per (time step, state, action), in CSR form.
/// Transitions never depend on the fuel level.
struct TransitionModel {
  std::vector<Offset> directions;
  int n_actions = 0;
  int n_states = 0;
  std::vector<std::size_t> row_start;
  std::vector<StencilEntry> entries;

  std::size_t row(int k, int s, int a) const {
    return (static_cast<std::size_t>(k) * n_states + s) * n_actions + a;
  }
  std::span<const StencilEntry> at(int k, int s, int a) const {
    const std::size_t r = row(k, s, a);
    return {entries.data() + row_start[r], row_start[r + 1] - row_start[r]};
  }
};

struct LatticeDiagnostics {
  double max_first_moment_error = 0.0;   // |sum p dx - mu dt|
  double max_second_moment_error = 0.0;  // |sum p dx dx^T - sigma sigma^T dt|, O(dt h)
  double min_stay_probability = 1.0;
  int shrink_count = 0;
};

struct LatticeModel {
  Lattice lattice;
  TransitionModel transitions;
  LatticeDiagnostics diagnostics;
};

/// Builds the lattice and an upwind stencil matching mu dt exactly and
/// sigma sigma^T dt up to O(dt h).
LatticeModel build_lattice(const ProblemSpec& spec, const LatticeSpec& request);

struct SolverOptions {
  double tol_slice = 1e-10;
  long long max_iter = 0;  // 0 means 10 x nodes per slice
  double tol_tie = 1e-14;
};

struct NodeDecision {
  enum class Kind : std::uint8_t { Exit, Stop, Continue, Exert };
  Kind kind = Kind::Exit;
  int index = 0;  // action for Continue, coordinate for Exert
  int sign = 0;   // +1 / -1 for Exert

  static NodeDecision exit() { return {Kind::Exit, 0, 0}; }
  static NodeDecision stop() { return {Kind::Stop, 0, 0}; }
  static NodeDecision cont(int a) { return {Kind::Continue, a, 0}; }
  static NodeDecision exert(int i, int sign) { return {Kind::Exert, i, sign}; }
  bool operator==(const NodeDecision&) const = default;
};

std::string to_string(const NodeDecision& d);

struct SolveDiagnostics {
  long long slice_iterations = 0;
  long long max_slice_iterations = 0;
  double max_final_change = 0.0;
};

struct ValueField {
  std::vector<double> v;
  std::uint64_t spec_hash = 0;
  std::uint64_t lattice_hash = 0;
  SolveDiagnostics diagnostics;

  std::string id() const;
};

struct PolicyField {
  std::vector<NodeDecision> decisions;
};

struct Solution {
  ValueField value;
  PolicyField policy;
};

/// Backward induction over time with in-slice exertion.
Solution solve_backward(const ProblemSpec& spec, const LatticeModel& model, const SolverOptions& options = {});

/// Argmax of the one-step dynamic programming right-hand side, with the tie
/// order Stop, Exert (lowest coordinate, + before -), Continue (lowest action).
PolicyField extract_policy(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value,
                           const SolverOptions& options = {});

/// Cost of one exertion of size h along +-e_i at (t, x), under the problem's cost convention.
double exertion_cost(const ProblemSpec& spec, double t, const Vector& x, int coordinate, int sign, double h);

/// v(k, x, z) at the nearest node; `extended` is set when x lies outside the box.
double lookup_value(const LatticeModel& model, const ValueField& value, int k, const Vector& x, double z,
                    bool* extended = nullptr);

/// Feedback policy for the SDE: snap to the nearest node, follow exertions
/// within the slice, then stop or continue. Exit nodes continue with action 0.
NoiseFunctionalPolicy lattice_feedback_policy(const ProblemSpec& spec, const LatticeModel& model,
                                              const PolicyField& policy);

/// One row per node: step, time, x..., z, interior, value, decision.
void write_value_csv(std::ostream& os, const LatticeModel& model, const ValueField& value, const PolicyField& policy);
void write_value_binary(std::ostream& os, const LatticeModel& model, const ValueField& value,
                        const PolicyField& policy);
struct ValueSnapshot {
  std::vector<Axis> axes;
  int n_fuel = 1;
  double fuel_step = 0.0;
  double t0 = 0.0;
  double tN = 1.0;
  int n_steps = 0;
  ValueField value;
  PolicyField policy;
};
ValueSnapshot read_value_binary(std::istream& is);

}  // namespace fuelgrid
