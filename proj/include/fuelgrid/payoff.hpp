#pragma once

#include "fuelgrid/simulate.hpp"
#include "fuelgrid/solver.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>

namespace fuelgrid {

/// Cost of the jumps (inc_plus, inc_minus) applied at (t, x).
///
/// Stieltjes: <c+(t,x), inc_plus> + <c-(t,x), inc_minus>.
/// Segment integral: the jump is walked along its net direction over its
/// total length L = sum(inc_plus + inc_minus), integrating the uniform unit
/// costs weighted by the plus / minus share of L. Composite 3-point
/// Gauss-Legendre with `quadrature_steps` panels.
double jump_cost(const ProblemSpec& spec, double t, const Vector& x, const Vector& inc_plus, const Vector& inc_minus);

/// Charges for the jumps at steps [from_step, to_step) of one path.
double cost_integral(const ProblemSpec& spec, const PathRecord& path, int from_step, int to_step);
inline double cost_integral(const ProblemSpec& spec, const PathRecord& path, int upto_step) {
  return cost_integral(spec, path, 0, upto_step);
}

/// Payoff from from_step on, written with the stopping time.
/// Requires from_step <= min(tau_step, rho_step).
double evaluate_gamma(const ProblemSpec& spec, const PathRecord& path, int from_step = 0);
/// Same payoff written with the stopping indicator eta only.
double evaluate_lambda(const ProblemSpec& spec, const PathRecord& path, int from_step = 0);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Welford accumulator for Monte Carlo means.
class MeanAccumulator {
 public:
  void add(double x);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  Estimate estimate() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

Estimate evaluate_J(const ProblemSpec& spec, const PathBundle& bundle);

/// Accrued payoff process N and value-augmented process M per path and step.
struct MTrace {
  Matrix N;  // n_paths x (n+1)
  Matrix M;  // n_paths x (n+1)
  Vector gamma;
  Vector lambda;
  std::size_t extension_count = 0;  // lookups outside the lattice box
  std::string value_field_id;
};

using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// N_u and M_u for one path; `extended` counts off-box value lookups.
void path_m_process(const ProblemSpec& spec, const PathRecord& path, const LatticeModel& model,
                    const ValueField& value, RowRef N, RowRef M,
                    std::size_t* extended = nullptr);

/// Requires the bundle grid to match the lattice time grid.
MTrace compute_M(const ProblemSpec& spec, const PathBundle& bundle, const LatticeModel& model,
                 const ValueField& value);

/// One row per (path, step): path, step, time, N, M.
void write_mtrace_csv(std::ostream& os, const MTrace& trace, const TimeGrid& grid);

}  // namespace fuelgrid
