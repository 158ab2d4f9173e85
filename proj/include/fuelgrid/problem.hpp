#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fuelgrid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for malformed problem instances and invalid arguments.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or infinity shows up in a coefficient or payoff.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative procedure fails to converge.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dimensions {
  int state = 1;    // d
  int noise = 1;    // d'
  int control = 1;  // l
};

/// Total fuel budget; the state carries the fuel already spent, z in [0, zbar].
struct FiniteFuel {
  double zbar = 0.0;
};

/// No budget; controls only need a p-th moment of their total variation.
struct InfiniteFuel {
  double p = 2.0;
};

using FuelMode = std::variant<FiniteFuel, InfiniteFuel>;

/// Classical left-point Lebesgue-Stieltjes charge c(t, X_t) per unit exerted.
struct Stieltjes {};

/// Jumps are charged by integrating c along the segment the jump traverses.
/// Only defined for direction-uniform costs.
struct SegmentIntegral {
  int quadrature_steps = 1000;
};

using CostConvention = std::variant<Stieltjes, SegmentIntegral>;

using DriftFn = std::function<Vector(double t, const Vector& x, const Vector& a)>;
using DiffusionFn = std::function<Matrix(double t, const Vector& x, const Vector& a)>;
using RunningGainFn = std::function<double(double t, const Vector& x, double z, const Vector& a)>;
using GainFn = std::function<double(double t, const Vector& x, double z)>;
using CostFn = std::function<Vector(double t, const Vector& x)>;
using DomainFn = std::function<bool(const Vector& x, double z)>;

/// A finite-horizon controller-stopper problem with classical controls,
/// singular controls (finite or infinite fuel), discretionary stopping and
/// exit from a domain.
///
/// Immutable once built. All coefficient callables must be pure. In infinite
/// fuel mode the fuel coordinate is inert and gains/domain receive z = 0.
///
/// There is no separate terminal payoff: at the horizon the exit time is
/// capped at T, so `exit_gain(T, x, z)` is what is collected.
struct ProblemSpec {
  std::string name;
  double horizon = 1.0;
  double start_time = 0.0;
  Dimensions dims;

  DriftFn drift;
  DiffusionFn diffusion;
  RunningGainFn running_gain;
  GainFn exit_gain;
  GainFn stop_gain;
  CostFn cost_plus;
  CostFn cost_minus;
  DomainFn domain;

  std::vector<Vector> action_set;
  FuelMode fuel = InfiniteFuel{};
  CostConvention cost_convention = Stieltjes{};
  double payoff_floor = 0.0;

  // Coordinates in which xi^+ / xi^- may act. Empty means every coordinate.
  std::vector<bool> allow_plus;
  std::vector<bool> allow_minus;

  // Declares that every entry of cost_plus (and of cost_minus) is the same
  // function. Required by the segment-integral convention.
  bool costs_uniform = false;

  bool finite_fuel() const { return std::holds_alternative<FiniteFuel>(fuel); }
  double zbar() const;
  bool segment_costs() const { return std::holds_alternative<SegmentIntegral>(cost_convention); }
  bool can_push(int coordinate, int sign) const;

  /// Fuel value handed to gains and the domain: z itself in finite mode, 0 otherwise.
  double payoff_fuel(double z) const { return finite_fuel() ? z : 0.0; }
};

/// Throws SpecError if the instance cannot be consumed downstream.
void require_valid_structure(const ProblemSpec& spec);

enum class CheckStatus { Pass, Warn, Fail };

struct ValidationCheck {
  std::string name;
  CheckStatus status = CheckStatus::Pass;
  std::string detail;
  std::size_t sampled_points = 0;
  double statistic = 0.0;  // check-specific figure (violation count, max ratio, ...)
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  const ValidationCheck& check(const std::string& name) const;
  bool passed() const;  // no Fail entries
};

struct ValidationOptions {
  // Sampling box for x; defaults to [-1, 1]^d when empty.
  Vector lo;
  Vector hi;
  // Fuel range sampled in infinite-fuel mode is irrelevant; in finite mode it is [0, zbar].
};

/// Structural checks, sampled payoff-floor checks and a heuristic Lipschitz
/// probe of drift and diffusion. Deterministic in (problem, samples, seed).
ValidationReport validate_problem(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed,
                                  const ValidationOptions& options = {});

/// Fingerprint of a problem built from coefficient values at fixed probe points.
std::uint64_t spec_fingerprint(const ProblemSpec& spec);

/// Points of a randomly shifted Halton sequence in [0,1)^dim.
Matrix halton_points(int dim, std::size_t count, std::uint64_t seed);

}  // namespace fuelgrid
