#include "doctest.h"
#include "support.hpp"

#include "fuelgrid/simulate.hpp"

#include <sstream>

using namespace fuelgrid;
using fgtest::scalar;

TEST_CASE("no drift, no noise, no control keeps the state fixed") {
  const ProblemSpec s = fgtest::zero_spec();
  const TimeGrid g(0.0, 1.0, 20);
  const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.7), 0.0, g, 5, 3);
  for (const auto& p : b.paths)
    for (int k = 0; k <= 20; ++k) CHECK(p.states(0, k) == 0.7);
}

TEST_CASE("unit drift reaches one at the horizon") {
  ProblemSpec s = fgtest::zero_spec();
  fgtest::set_constant_drift(s, 1.0);
  const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.0), 0.0, TimeGrid(0.0, 1.0, 37), 2, 1);
  CHECK(b.paths[0].states(0, 37) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Brownian increments have variance equal to the horizon") {
  ProblemSpec s = fgtest::zero_spec();
  fgtest::set_constant_diffusion(s, 1.0);
  const std::size_t n = 100000;
  for (auto construction : {NoiseConstruction::Direct, NoiseConstruction::BrownianBridge}) {
    SimulationOptions o;
    o.construction = construction;
    const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.0), 0.0, TimeGrid(0.0, 2.0, 8), n, 17, o);
    double m1 = 0, m2 = 0, m4 = 0;
    for (const auto& p : b.paths) {
      const double y = p.states(0, 8);
      m1 += y;
      m2 += y * y;
      m4 += y * y * y * y;
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    const double var = m2 - m1 * m1;
    // SE of the sample variance of a normal sample
    const double se = std::sqrt((m4 - m2 * m2) / n);
    CHECK(std::abs(var - 2.0) < 3 * se);
  }
}

TEST_CASE("exit step") {
  ProblemSpec s = fgtest::zero_spec();
  const TimeGrid g(0.0, 1.0, 10);
  CHECK(exit_step(s, Matrix::Zero(1, 11), std::vector<double>(11, 0.0)) == 10);
  s.domain = [](const Vector& x, double) { return x(0) < 0.5; };
  CHECK(exit_step(s, Matrix::Constant(1, 11, 1.0), std::vector<double>(11, 0.0)) == 0);
  fgtest::set_constant_drift(s, 1.0);
  const PathBundle b = simulate_paths(s, zero_policy(), scalar(0.0), 0.0, g, 3, 1);
  for (int r : exit_time(b, s)) CHECK(r == 5);
  CHECK(b.paths[0].rho_step == 5);
}

TEST_CASE("seeded simulation is reproducible and independent of threads") {
  ProblemSpec s = fgtest::zero_spec();
  fgtest::set_constant_diffusion(s, 0.8);
  s.domain = [](const Vector& x, double) { return std::abs(x(0)) < 1.0; };
  const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
    if (in.has_state() && in.x()(0) > 0.6) return Decision::stop_now();
    Decision d = Decision::continue_with(0);
    if (in.has_state() && in.x()(0) < -0.3) d.inc_plus = Vector::Constant(1, 0.05);
    return d;
  }};
  const TimeGrid g(0.0, 1.0, 50);
  SimulationOptions one, four;
  four.threads = 4;
  const PathBundle a = simulate_paths(s, p, scalar(0.0), 0.0, g, 200, 42, one);
  const PathBundle b = simulate_paths(s, p, scalar(0.0), 0.0, g, 200, 42, four);
  const PathBundle c = simulate_paths(s, p, scalar(0.0), 0.0, g, 200, 43, one);
  REQUIRE(a.n_paths() == b.n_paths());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.n_paths(); ++i) {
    CHECK(a.paths[i].states == b.paths[i].states);
    CHECK(a.paths[i].control.inc_plus == b.paths[i].control.inc_plus);
    CHECK(a.paths[i].tau_step == b.paths[i].tau_step);
    any_diff = any_diff || a.paths[i].noise != c.paths[i].noise;
  }
  CHECK(any_diff);
  CHECK(generate_noise(1, g, 42, 7) == a.paths[7].noise);
}

TEST_CASE("antithetic pairs share negated noise") {
  SimulationOptions o;
  o.antithetic = true;
  const TimeGrid g(0.0, 1.0, 6);
  CHECK(generate_noise(2, g, 5, 1, o) == Matrix(-generate_noise(2, g, 5, 0, o)));
}

TEST_CASE("perturbing later noise leaves the past unchanged") {
  ProblemSpec s = fgtest::zero_spec();
  fgtest::set_constant_diffusion(s, 1.0);
  const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
    Decision d = Decision::continue_with(0);
    if (in.has_state() && in.x()(0) > 0.0) d.inc_minus = Vector::Constant(1, 0.1);
    return d;
  }};
  const TimeGrid g(0.0, 1.0, 30);
  const Matrix w = generate_noise(1, g, 9, 0);
  for (int k : {0, 7, 29}) {
    Matrix w2 = w;
    for (int j = k; j < 30; ++j) w2(0, j) += 0.5 * (j + 1);
    const PathRecord a = simulate_path(s, p, scalar(0.0), 0.0, g, w, TruncationMode::Strict);
    const PathRecord b = simulate_path(s, p, scalar(0.0), 0.0, g, w2, TruncationMode::Strict);
    CHECK(a.states.leftCols(k + 1) == b.states.leftCols(k + 1));
    CHECK(a.control.inc_minus.leftCols(k) == b.control.inc_minus.leftCols(k));
  }
}

TEST_CASE("finite fuel never exceeds the cap") {
  ProblemSpec s = fgtest::zero_spec();
  s.fuel = FiniteFuel{0.5};
  fgtest::set_constant_diffusion(s, 1.0);
  const NoiseFunctionalPolicy greedy{[](const PolicyInput&) {
    Decision d = Decision::continue_with(0);
    d.inc_plus = Vector::Constant(1, 0.07);
    d.inc_minus = Vector::Constant(1, 0.04);
    return d;
  }};
  for (auto mode : {TruncationMode::Strict, TruncationMode::Clip}) {
    SimulationOptions o;
    o.truncation = mode;
    const PathBundle b = simulate_paths(s, greedy, scalar(0.0), 0.1, TimeGrid(0.0, 1.0, 40), 20, 2, o);
    for (const auto& p : b.paths)
      for (double z : p.fuel) CHECK(z <= 0.5 + 1e-12);
  }
  CHECK_THROWS_AS(simulate_paths(s, zero_policy(), scalar(0.0), 0.7, TimeGrid(0.0, 1.0, 4), 1, 1), SpecError);
}

TEST_CASE("non-finite coefficients are reported with path and step") {
  ProblemSpec s = fgtest::zero_spec();
  s.drift = [](double t, const Vector&, const Vector&) {
    return Vector(Vector::Constant(1, t > 0.45 ? std::nan("") : 0.0));
  };
  try {
    simulate_paths(s, zero_policy(), scalar(0.0), 0.0, TimeGrid(0.0, 1.0, 10), 3, 1);
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("path 0") != std::string::npos);
    CHECK(what.find("step 5") != std::string::npos);
  }
}

TEST_CASE("binary bundle round trip") {
  ProblemSpec s = fgtest::zero_spec(2, 2);
  fgtest::set_constant_diffusion(s, 0.3);
  const PathBundle b = simulate_paths(s, stop_at_step_policy(3), Vector::Constant(2, 0.1), 0.0,
                                      TimeGrid(0.0, 1.0, 6), 4, 11);
  std::stringstream ss;
  write_bundle_binary(ss, b);
  const PathBundle r = read_bundle_binary(ss);
  CHECK(r.seed == 11);
  CHECK(r.grid.dt() == b.grid.dt());
  CHECK(r.grid.n_steps() == 6);
  REQUIRE(r.n_paths() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.paths[i].noise == b.paths[i].noise);
    CHECK(r.paths[i].states == b.paths[i].states);
    CHECK(r.paths[i].fuel == b.paths[i].fuel);
    CHECK(r.paths[i].actions == b.paths[i].actions);
    CHECK(r.paths[i].control.inc_plus == b.paths[i].control.inc_plus);
    CHECK(r.paths[i].eta.flip_index == b.paths[i].eta.flip_index);
    CHECK(r.paths[i].tau_step == 3);
    CHECK(r.paths[i].rho_step == 6);
  }
  std::stringstream bad("NOPE");
  CHECK_THROWS(read_bundle_binary(bad));
}

TEST_CASE("path summary CSV") {
  const PathBundle b = simulate_paths(fgtest::zero_spec(), stop_at_step_policy(2), scalar(1.5), 0.0,
                                      TimeGrid(0.0, 1.0, 4), 2, 1);
  std::ostringstream os;
  write_path_summary_csv(os, b);
  CHECK(os.str().find("0,2,4,0.5,1,1.5,0\r\n") != std::string::npos);
}
