#include "doctest.h"
#include "support.hpp"

#include <set>

using namespace fuelgrid;
using fgtest::zero_spec;

TEST_CASE("zero payoffs clear the payoff floor at every sample") {
  const ProblemSpec s = zero_spec();
  const ValidationReport r = validate_problem(s, 200, 3);
  CHECK(r.passed());
  CHECK(r.check("exit_gain_floor").status == CheckStatus::Pass);
  CHECK(r.check("stop_gain_floor").status == CheckStatus::Pass);
  CHECK(r.check("stop_gain_floor").statistic == 0.0);
}

TEST_CASE("stop gain below the floor fails at every sample") {
  ProblemSpec s = zero_spec();
  s.payoff_floor = 1.0;
  s.stop_gain = [](double, const Vector&, double) { return -5.0; };
  const ValidationReport r = validate_problem(s, 150, 3);
  CHECK_FALSE(r.passed());
  const auto& c = r.check("stop_gain_floor");
  CHECK(c.status == CheckStatus::Fail);
  CHECK(c.statistic == 150.0);
  CHECK(c.sampled_points == 150);
  CHECK(r.check("exit_gain_floor").status == CheckStatus::Pass);
}

TEST_CASE("Lipschitz probe on mu = x, sigma = 1") {
  ProblemSpec s = zero_spec();
  s.drift = [](double, const Vector& x, const Vector&) { return Vector(x); };
  fgtest::set_constant_diffusion(s, 1.0);
  const ValidationReport r = validate_problem(s, 1000, 11);
  // ratios of an exactly linear map are 1 up to rounding
  CHECK(r.check("drift_lipschitz").statistic == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.check("drift_lipschitz").status == CheckStatus::Pass);
  CHECK(r.check("diffusion_lipschitz").statistic == 0.0);
  CHECK(r.check("diffusion_lipschitz").status == CheckStatus::Pass);
}

TEST_CASE("non-Lipschitz drift is flagged as a warning, not a failure") {
  ProblemSpec s = zero_spec();
  s.drift = [](double, const Vector& x, const Vector&) { return Vector(Vector::Constant(1, std::sqrt(std::abs(x(0))))); };
  const ValidationReport r = validate_problem(s, 500, 5);
  CHECK(r.check("drift_lipschitz").status == CheckStatus::Warn);
  CHECK(r.passed());
}

TEST_CASE("structural rejections") {
  SUBCASE("empty action set") {
    ProblemSpec s = zero_spec();
    s.action_set.clear();
    CHECK_THROWS_AS(validate_problem(s, 10, 1), SpecError);
  }
  SUBCASE("negative fuel budget") {
    ProblemSpec s = zero_spec();
    s.fuel = FiniteFuel{-1.0};
    CHECK_THROWS_AS(validate_problem(s, 10, 1), SpecError);
  }
  SUBCASE("segment integral with costs not declared uniform") {
    ProblemSpec s = zero_spec();
    s.cost_convention = SegmentIntegral{10};
    s.costs_uniform = false;
    CHECK_THROWS_AS(validate_problem(s, 10, 1), SpecError);
  }
  SUBCASE("segment integral with costs that differ across coordinates") {
    ProblemSpec s = zero_spec(2, 2);
    s.cost_convention = SegmentIntegral{10};
    s.cost_plus = [](double, const Vector&) { return Vector(Vector::LinSpaced(2, 1.0, 2.0)); };
    CHECK_THROWS_AS(validate_problem(s, 10, 1), SpecError);
  }
  SUBCASE("start time not below the horizon") {
    ProblemSpec s = zero_spec();
    s.start_time = 1.0;
    CHECK_THROWS_AS(require_valid_structure(s), SpecError);
  }
  SUBCASE("missing coefficient") {
    ProblemSpec s = zero_spec();
    s.drift = nullptr;
    CHECK_THROWS_AS(require_valid_structure(s), SpecError);
  }
  SUBCASE("action of the wrong dimension") {
    ProblemSpec s = zero_spec();
    s.action_set = {Vector::Zero(2)};
    CHECK_THROWS_AS(require_valid_structure(s), SpecError);
  }
}

TEST_CASE("coefficient of the wrong shape fails the shape check") {
  ProblemSpec s = zero_spec();
  s.drift = [](double, const Vector&, const Vector&) { return Vector(Vector::Zero(2)); };
  const ValidationReport r = validate_problem(s, 20, 1);
  CHECK(r.check("coefficient_shapes").status == CheckStatus::Fail);
}

TEST_CASE("every check appears once and validation is deterministic") {
  ProblemSpec s = zero_spec();
  s.cost_convention = SegmentIntegral{10};
  const ValidationReport a = validate_problem(s, 64, 9);
  const ValidationReport b = validate_problem(s, 64, 9);
  std::set<std::string> names;
  for (const auto& c : a.checks) CHECK(names.insert(c.name).second);
  CHECK(names.count("cost_uniformity") == 1);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].detail == b.checks[i].detail);
    CHECK(a.checks[i].statistic == b.checks[i].statistic);
  }
}

TEST_CASE("Halton points stay in the unit cube") {
  const Matrix p = halton_points(3, 500, 7);
  CHECK(p.rows() + p.cols() > 0);
  CHECK((p.array() >= 0.0).all());
  CHECK((p.array() < 1.0).all());
  CHECK(halton_points(3, 500, 7) == p);
}

TEST_CASE("fingerprint separates different coefficients") {
  ProblemSpec a = zero_spec();
  ProblemSpec b = zero_spec();
  CHECK(spec_fingerprint(a) == spec_fingerprint(b));
  b.stop_gain = [](double, const Vector&, double) { return 1.0; };
  CHECK(spec_fingerprint(a) != spec_fingerprint(b));
}

TEST_CASE("fuel handed to payoffs") {
  ProblemSpec s = zero_spec();
  CHECK(s.payoff_fuel(0.7) == 0.0);
  s.fuel = FiniteFuel{2.0};
  CHECK(s.payoff_fuel(0.7) == 0.7);
  CHECK(s.zbar() == 2.0);
}

TEST_CASE("pushing directions") {
  ProblemSpec s = zero_spec(2, 2);
  CHECK(s.can_push(1, -1));
  s.allow_plus = {true, false};
  s.allow_minus = {false, true};
  CHECK(s.can_push(0, +1));
  CHECK_FALSE(s.can_push(1, +1));
  CHECK_FALSE(s.can_push(0, -1));
  CHECK(s.can_push(1, -1));
}
