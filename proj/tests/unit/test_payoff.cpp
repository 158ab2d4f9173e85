#include "doctest.h"
#include "support.hpp"

#include "fuelgrid/payoff.hpp"

#include <random>

using namespace fuelgrid;
using fgtest::scalar;

namespace {

PathRecord run(const ProblemSpec& s, const NoiseFunctionalPolicy& p, double x0, int n, double z0 = 0.0) {
  const TimeGrid g(0.0, 1.0, n);
  return simulate_path(s, p, scalar(x0), z0, g, Matrix::Zero(s.dims.noise, n), TruncationMode::Strict);
}

NoiseFunctionalPolicy jumps_then_stop(std::vector<std::pair<int, double>> jumps, int stop_step) {
  return {[jumps, stop_step](const PolicyInput& in) {
    if (in.step >= stop_step) return Decision::stop_now();
    Decision d = Decision::continue_with(0);
    for (const auto& [k, v] : jumps)
      if (k == in.step) {
        d.inc_plus = Vector::Constant(1, std::max(v, 0.0));
        d.inc_minus = Vector::Constant(1, std::max(-v, 0.0));
      }
    return d;
  }};
}

}  // namespace

TEST_CASE("jump cost conventions") {
  ProblemSpec s = fgtest::zero_spec();
  s.cost_plus = [](double, const Vector&) { return Vector(Vector::Constant(1, 0.8)); };
  const Vector x = scalar(0.2);
  const Vector none = Vector::Zero(1);
  CHECK(jump_cost(s, 0.0, x, scalar(0.25), none) == doctest::Approx(0.2));
  s.cost_convention = SegmentIntegral{10};
  CHECK(jump_cost(s, 0.0, x, scalar(0.25), none) == doctest::Approx(0.2));

  s.cost_plus = [](double, const Vector& y) { return Vector(y); };
  s.cost_convention = Stieltjes{};
  CHECK(jump_cost(s, 0.0, scalar(0.0), scalar(1.0), none) == 0.0);
  s.cost_convention = SegmentIntegral{1000};
  CHECK(jump_cost(s, 0.0, scalar(0.0), scalar(1.0), none) == doctest::Approx(0.5).epsilon(1e-12));

  s.cost_plus = [](double, const Vector& y) { return Vector(y.array().square()); };
  CHECK(std::abs(jump_cost(s, 0.0, scalar(0.0), scalar(1.0), none) - 1.0 / 3.0) < 1e-6);

  s.costs_uniform = false;
  CHECK_THROWS_AS(jump_cost(s, 0.0, scalar(0.0), scalar(1.0), none), SpecError);
}

TEST_CASE("segment and Stieltjes charges differ by O(h^2)") {
  ProblemSpec s = fgtest::zero_spec();
  s.cost_minus = [](double, const Vector& y) { return Vector(Vector::Constant(1, 1.0 + y(0) * y(0))); };
  ProblemSpec seg = s;
  seg.cost_convention = SegmentIntegral{50};
  const Vector x = scalar(0.3), none = Vector::Zero(1);
  double previous = 0.0;
  for (double h : {0.2, 0.1, 0.05, 0.025}) {
    const double diff = std::abs(jump_cost(seg, 0.0, x, none, scalar(h)) - jump_cost(s, 0.0, x, none, scalar(h)));
    // walking down from 0.3 the slope of c is -0.6, so the gap is 0.3 h^2 at leading order
    CHECK(diff / (h * h) == doctest::Approx(0.3).epsilon(0.2));
    CHECK(diff == doctest::Approx(0.3 * h * h - h * h * h / 3.0).epsilon(1e-10));
    if (previous > 0) CHECK(previous / diff >= 3.4);
    previous = diff;
  }
}

TEST_CASE("Stieltjes charges are additive and split invariant") {
  ProblemSpec s = fgtest::zero_spec(2, 2);
  s.cost_plus = [](double t, const Vector& y) { return Vector(Vector{{1.0 + t, 2.0 + y(0)}}); };
  s.cost_minus = [](double, const Vector& y) { return Vector(Vector{{0.5, std::exp(y(1))}}); };
  const Vector x{{0.4, -0.2}}, ip{{0.3, 0.1}}, im{{0.0, 0.7}};
  CHECK(jump_cost(s, 0.3, x, ip, im) == doctest::Approx(2.0 * jump_cost(s, 0.3, x, Vector(ip / 2), Vector(im / 2))));

  fgtest::set_constant_diffusion(s, 0.7);
  const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
    Decision d = Decision::continue_with(0);
    d.inc_plus = Vector::Constant(2, 0.01 * (in.step % 3));
    d.inc_minus = Vector::Constant(2, 0.02 * (in.step % 2));
    return d;
  }};
  const TimeGrid g(0.0, 1.0, 12);
  const PathRecord path =
      simulate_path(s, p, Vector::Zero(2), 0.0, g, generate_noise(2, g, 4, 0), TruncationMode::Strict);
  const double whole = cost_integral(s, path, 12);
  CHECK(whole > 0);
  CHECK(cost_integral(s, path, 0, 5) + cost_integral(s, path, 5, 12) == doctest::Approx(whole).epsilon(1e-14));
  CHECK(cost_integral(s, path, 4, 4) == 0.0);
  CHECK_THROWS_AS(cost_integral(s, path, 3, 13), std::out_of_range);
}

TEST_CASE("the increment at the end of the window is not charged") {
  ProblemSpec s = fgtest::zero_spec();
  s.cost_plus = [](double, const Vector&) { return Vector(Vector::Constant(1, 3.0)); };
  const PathRecord p = run(s, jumps_then_stop({{2, 1.0}}, 10), 0.0, 4);
  CHECK(cost_integral(s, p, 2) == 0.0);
  CHECK(cost_integral(s, p, 3) == 3.0);
}

TEST_CASE("gamma examples") {
  ProblemSpec s = fgtest::zero_spec();
  s.exit_gain = [](double, const Vector&, double) { return 5.0; };
  CHECK(evaluate_gamma(s, run(s, zero_policy(), 0.0, 10)) == 5.0);

  s.exit_gain = [](double, const Vector&, double) { return 0.0; };
  s.running_gain = [](double, const Vector&, double, const Vector&) { return 1.0; };
  for (int n : {0, 3, 7}) CHECK(evaluate_gamma(s, run(s, stop_at_step_policy(n), 0.0, 10)) == doctest::Approx(0.1 * n));

  // simultaneous exit and stop pays the exit gain
  ProblemSpec both = fgtest::zero_spec();
  both.domain = [](const Vector& x, double) { return x(0) < 0.5; };
  both.exit_gain = [](double, const Vector&, double) { return 1.0; };
  both.stop_gain = [](double, const Vector&, double) { return 2.0; };
  fgtest::set_constant_drift(both, 1.0);
  const PathRecord p = run(both, stop_at_step_policy(5), 0.0, 10);
  CHECK(p.rho_step == 5);
  CHECK(p.tau_step == 5);
  CHECK(evaluate_gamma(both, p) == 1.0);
  CHECK(evaluate_lambda(both, p) == 1.0);
  CHECK(evaluate_gamma(both, run(both, stop_at_step_policy(4), 0.0, 10)) == 2.0);
  CHECK_THROWS_AS(evaluate_gamma(both, p, 6), SpecError);
}

TEST_CASE("J examples") {
  const TimeGrid g(0.0, 1.0, 10);
  ProblemSpec s = fgtest::zero_spec();
  const Estimate zero = evaluate_J(s, simulate_paths(s, zero_policy(), scalar(0.0), 0.0, g, 50, 1));
  CHECK(zero.mean == 0.0);
  CHECK(zero.std_error == 0.0);

  s.stop_gain = [](double, const Vector&, double) { return 2.0; };
  const Estimate stopped = evaluate_J(s, simulate_paths(s, stop_at_step_policy(4), scalar(0.0), 0.0, g, 20, 1));
  CHECK(stopped.mean == 2.0);
  CHECK(stopped.std_error == 0.0);

  ProblemSpec c = fgtest::zero_spec();
  c.cost_plus = [](double, const Vector&) { return Vector(Vector::Constant(1, 3.0)); };
  const Estimate cost = evaluate_J(c, simulate_paths(c, jumps_then_stop({{0, 1.0}}, 99), scalar(0.0), 0.0, g, 20, 1));
  CHECK(cost.mean == -3.0);
  CHECK(cost.std_error == 0.0);
  CHECK(cost.count == 20);

  CHECK_THROWS_AS(evaluate_J(s, PathBundle{g, 1, {}}), SpecError);
}

TEST_CASE("gamma and lambda agree on random paths") {
  ProblemSpec s = fgtest::zero_spec();
  s.fuel = FiniteFuel{1.0};
  fgtest::set_constant_diffusion(s, 0.6);
  s.running_gain = [](double t, const Vector& x, double z, const Vector&) { return x(0) - t * z; };
  s.exit_gain = [](double, const Vector& x, double z) { return x(0) * x(0) + z; };
  s.stop_gain = [](double t, const Vector& x, double) { return std::sin(x(0)) + t; };
  s.cost_plus = [](double, const Vector& x) { return Vector(Vector::Constant(1, 0.2 + 0.1 * x(0))); };
  s.cost_minus = [](double t, const Vector&) { return Vector(Vector::Constant(1, t)); };
  s.domain = [](const Vector& x, double) { return x(0) > -0.7; };
  const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
    if (in.x()(0) > 0.5) return Decision::stop_now();
    Decision d = Decision::continue_with(0);
    if (in.x()(0) < -0.4) d.inc_plus = Vector::Constant(1, 0.1);
    if (in.x()(0) > 0.3) d.inc_minus = Vector::Constant(1, 0.05);
    return d;
  }};
  const PathBundle b = simulate_paths(s, p, scalar(0.0), 0.0, TimeGrid(0.0, 1.0, 40), 500, 8);
  int stopped = 0, exited = 0;
  for (const auto& path : b.paths) {
    stopped += path.tau_step < path.rho_step;
    exited += path.rho_step < 40;
    for (int from : {0, std::min(path.tau_step, path.rho_step) / 2, std::min(path.tau_step, path.rho_step)})
      CHECK(std::abs(evaluate_gamma(s, path, from) - evaluate_lambda(s, path, from)) <= 1e-12);
  }
  CHECK(stopped > 0);
  CHECK(exited > 0);
}

TEST_CASE("M traces") {
  ProblemSpec s = fgtest::zero_spec();
  LatticeSpec ls;
  ls.lo = scalar(-3.0);
  ls.hi = scalar(3.0);
  ls.h = scalar(1.0);
  ls.n_steps = 3;
  const LatticeModel model = build_lattice(s, ls);
  ValueField zero;
  zero.v.assign(model.lattice.size(), 0.0);

  SUBCASE("all zero") {
    const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.0), 0.0, model.lattice.grid(), 5, 1);
    const MTrace t = compute_M(s, b, model, zero);
    CHECK(t.M.cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.N.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("hand rolled three step path") {
    s.running_gain = [](double, const Vector& x, double, const Vector&) { return x(0); };
    s.stop_gain = [](double, const Vector& x, double) { return 10.0 + x(0); };
    s.cost_plus = [](double, const Vector&) { return Vector(Vector::Constant(1, 2.0)); };
    ValueField hundred = zero;
    hundred.v.assign(model.lattice.size(), 100.0);
    const PathBundle b =
        simulate_paths(s, jumps_then_stop({{0, 1.0}}, 2), scalar(0.0), 0.0, model.lattice.grid(), 1, 1);
    const PathRecord& p = b.paths[0];
    REQUIRE(p.tau_step == 2);
    REQUIRE(p.states(0, 1) == 1.0);
    const MTrace t = compute_M(s, b, model, hundred);
    const double dt = 1.0 / 3.0;
    // N_0 = 0; step 0 charges the jump; step 1 accrues f(1) dt; the stop pays g2(X_2) = 11 from step 3 on
    CHECK(t.N(0, 0) == 0.0);
    CHECK(t.N(0, 1) == doctest::Approx(-2.0));
    CHECK(t.N(0, 2) == doctest::Approx(-2.0 + dt));
    CHECK(t.N(0, 3) == doctest::Approx(-2.0 + dt + 11.0));
    CHECK(t.M(0, 0) == doctest::Approx(100.0));
    CHECK(t.M(0, 1) == doctest::Approx(98.0));
    CHECK(t.M(0, 2) == doctest::Approx(98.0 + dt));
    CHECK(t.M(0, 3) == doctest::Approx(9.0 + dt));
    CHECK(t.gamma(0) == doctest::Approx(t.N(0, 3)));
    CHECK(t.lambda(0) == doctest::Approx(t.gamma(0)));
  }

  SUBCASE("M starts at the value and freezes after the stop") {
    fgtest::set_constant_diffusion(s, 1.0);
    s.stop_gain = [](double, const Vector& x, double) { return -x(0) * x(0); };
    s.exit_gain = [](double, const Vector& x, double) { return x(0); };
    LatticeSpec fine = ls;
    fine.n_steps = 9;
    const LatticeModel m = build_lattice(s, fine);
    const Solution sol = solve_backward(s, m);
    const PathBundle b = simulate_paths(s, lattice_feedback_policy(s, m, sol.policy), scalar(0.0), 0.0,
                                        m.lattice.grid(), 200, 5);
    const MTrace t = compute_M(s, b, m, sol.value);
    const double root = lookup_value(m, sol.value, 0, scalar(0.0), 0.0);
    for (std::size_t i = 0; i < b.n_paths(); ++i) {
      CHECK(t.M(static_cast<Eigen::Index>(i), 0) == root);
      const int end = std::min(b.paths[i].tau_step, b.paths[i].rho_step);
      for (int u = end + 2; u <= 9; ++u)
        CHECK(t.M(static_cast<Eigen::Index>(i), u) == t.M(static_cast<Eigen::Index>(i), end + 1));
    }
  }

  SUBCASE("grid mismatch") {
    const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.0), 0.0, TimeGrid(0.0, 1.0, 4), 1, 1);
    CHECK_THROWS(compute_M(s, b, model, zero));
  }
}
