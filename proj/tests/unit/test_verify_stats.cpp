#include "doctest.h"
#include "support.hpp"

#include "fuelgrid/config.hpp"
#include "fuelgrid/verify.hpp"

#include <sstream>

using namespace fuelgrid;
using fgtest::scalar;

TEST_CASE("two sample KS statistic") {
  CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ks_statistic({1, 2, 3}, {4, 5, 6}) == 1.0);
  CHECK(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}) == 0.5);
  CHECK(ks_statistic({0, 0, 1}, {0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(ks_statistic({3, 1, 2}, {2, 3, 1}) == 0.0);
  CHECK_THROWS_AS(ks_statistic({}, {1}), SpecError);
  // c(0.05) = 1.3581 for equal samples of 100
  CHECK(ks_critical_value(100, 100, 0.05) == doctest::Approx(1.358102 * std::sqrt(0.02)).epsilon(1e-6));
  CHECK_THROWS_AS(ks_critical_value(10, 10, 1.5), SpecError);
}

TEST_CASE("Monte Carlo martingale check") {
  MTrace t;
  t.M = Matrix::Zero(50, 6);
  MonteCarloMartingaleReport r = check_supermartingale_mc(t, true);
  CHECK(r.supermartingale);
  CHECK(r.martingale);

  // a deterministic rise is caught exactly, a deterministic fall passes
  for (int u = 0; u < 6; ++u) t.M.col(u).setConstant(0.1 * u);
  CHECK_FALSE(check_supermartingale_mc(t, false).supermartingale);
  CHECK(check_supermartingale_mc(t, false, 3.0, 0.6).supermartingale);
  for (int u = 0; u < 6; ++u) t.M.col(u).setConstant(-0.1 * u);
  r = check_supermartingale_mc(t, true);
  CHECK(r.supermartingale);
  CHECK_FALSE(r.martingale);

  // a random walk is a martingale
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  t.M = Matrix::Zero(4000, 8);
  for (Eigen::Index p = 0; p < 4000; ++p)
    for (int u = 1; u < 8; ++u) t.M(p, u) = t.M(p, u - 1) + n01(rng);
  r = check_supermartingale_mc(t, true, 4.0);
  CHECK(r.supermartingale);
  CHECK(r.martingale);
  CHECK(r.max_abs_z < 4.0);

  t.M = Matrix::Zero(1, 3);
  CHECK_THROWS_AS(check_supermartingale_mc(t, false), SpecError);
}

TEST_CASE("reference invariance") {
  const TimeGrid g(0.0, 1.0, 16);
  SUBCASE("deterministic problems agree exactly") {
    ProblemSpec s = fgtest::zero_spec();
    fgtest::set_constant_drift(s, 0.5);
    s.exit_gain = [](double, const Vector& x, double) { return x(0) * x(0); };
    const InvarianceResult r = check_reference_invariance(s, zero_policy(), scalar(0.2), 0.0, g, 300, 1, 2);
    CHECK(r.first.mean == r.second.mean);
    CHECK(r.combined_se == 0.0);
    CHECK(r.pass);
  }
  SUBCASE("Brownian state with a linear exit gain has mean x0") {
    ProblemSpec s = fgtest::zero_spec();
    fgtest::set_constant_diffusion(s, 1.0);
    s.exit_gain = [](double, const Vector& x, double) { return x(0); };
    const InvarianceResult r = check_reference_invariance(s, zero_policy(), scalar(0.4), 0.0, g, 5000, 3, 4);
    CHECK(std::abs(r.first.mean - 0.4) <= 3.0 * r.first.std_error);
    CHECK(std::abs(r.second.mean - 0.4) <= 3.0 * r.second.std_error);
    CHECK(r.mean_pass);
    REQUIRE(r.ks.size() == 4);
    CHECK(r.ks[2].coordinate == "x_T_0");
    for (const auto& k : r.ks) CHECK(k.statistic <= k.critical);
  }
  SUBCASE("a stochastic stopping rule under both constructions") {
    ProblemSpec s = fgtest::zero_spec();
    fgtest::set_constant_diffusion(s, 0.7);
    s.domain = [](const Vector& x, double) { return x(0) > -0.5; };
    s.stop_gain = [](double, const Vector& x, double) { return x(0); };
    const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
      return in.x()(0) > 0.3 ? Decision::stop_now() : Decision::continue_with(0);
    }};
    const InvarianceResult r = check_reference_invariance(s, p, scalar(0.0), 0.0, g, 5000, 5, 6);
    CHECK(r.pass);
  }
}

TEST_CASE("truncation continuity") {
  ProblemSpec s = fgtest::zero_spec();
  s.fuel = FiniteFuel{1.0};
  fgtest::set_constant_diffusion(s, 0.5);
  s.running_gain = [](double, const Vector& x, double, const Vector&) { return -x(0) * x(0); };
  s.exit_gain = [](double, const Vector& x, double) { return std::cos(x(0)); };
  s.cost_minus = [](double, const Vector&) { return Vector(Vector::Constant(1, 0.2)); };
  const NoiseFunctionalPolicy push{[](const PolicyInput& in) {
    Decision d = Decision::continue_with(0);
    if (in.x()(0) > 0.1) d.inc_minus = Vector::Constant(1, 0.1);
    return d;
  }};
  const TimeGrid g(0.0, 1.0, 20);
  const std::vector<StartPair> pairs{{scalar(0.0), 0.2, scalar(0.0), 0.2},
                                     {scalar(0.0), 0.2, scalar(0.02), 0.2},
                                     {scalar(0.0), 0.2, scalar(0.0), 0.25}};
  const ContinuityReport r = check_truncation_continuity(s, g, pairs, {zero_policy(), push}, 0.1, 2000, 9);
  REQUIRE(r.entries.size() == 6);
  CHECK(r.entries[0].mean_difference == 0.0);
  CHECK(r.entries[1].mean_difference == 0.0);
  // zero policy, shifted start: the gap is the smooth change in the payoff
  CHECK(std::abs(r.entries[2].mean_difference) < 0.05);
  for (const auto& e : r.entries) CHECK(std::abs(e.mean_difference) <= r.max_abs_difference);

  CHECK_THROWS_AS(check_truncation_continuity(s, g, {{scalar(0.0), 0.3, scalar(0.0), 0.2}}, {push}, 0.5, 10, 1),
                  SpecError);
  CHECK_THROWS_AS(check_truncation_continuity(s, g, {{scalar(0.0), 0.2, scalar(1.0), 0.2}}, {push}, 0.5, 10, 1),
                  SpecError);
  CHECK_THROWS_AS(check_truncation_continuity(fgtest::zero_spec(), g, pairs, {push}, 0.5, 10, 1), SpecError);
}

TEST_CASE("suite reports") {
  VerificationSuiteReport r;
  r.entries.push_back({"one_step_residual", "demo", 1e-15, 1e-12, true, 0.5, "7 nodes"});
  r.entries.push_back({"dpp_hitting_time", "demo", 2e-9, 1e-9, false, 0.25, "needs, quoting"});
  CHECK_FALSE(r.passed());
  std::ostringstream json, table;
  write_suite_json(json, r, "2026-01-01T00:00:00Z");
  const Json j = Json::parse(json.str());
  CHECK(j["passed"] == false);
  CHECK(j["entries"].size() == 2);
  CHECK(j["entries"][1]["name"] == "dpp_hitting_time");
  CHECK(j["metadata"]["timestamp"] == "2026-01-01T00:00:00Z");
  CHECK_FALSE(j["entries"][0].contains("runtime_seconds"));
  write_suite_table(table, r);
  CHECK(table.str().find("FAIL") != std::string::npos);
  CHECK(table.str().find("one_step_residual") != std::string::npos);
  r.entries.pop_back();
  CHECK(r.passed());
}
