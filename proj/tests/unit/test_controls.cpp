#include "doctest.h"
#include "support.hpp"

#include "fuelgrid/controls.hpp"

#include <sstream>

using namespace fuelgrid;

namespace {

const TimeGrid grid10(0.0, 1.0, 10);

BVControlPath path_with(std::initializer_list<std::tuple<int, double, double>> jumps, const TimeGrid& g = grid10) {
  BVControlPath xi = BVControlPath::zero(g, 1);
  for (const auto& [k, p, m] : jumps) {
    xi.inc_plus(0, k) += p;
    xi.inc_minus(0, k) += m;
  }
  return xi;
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g(0.5, 2.5, 4);
  CHECK(g.dt() == 0.5);
  CHECK(g.time(0) == 0.5);
  CHECK(g.time(4) == 2.5);
  CHECK(g.times().size() == 5);
  CHECK(g.step_of(1.5) == 2);
  CHECK_THROWS_AS(g.step_of(1.2), SpecError);
  CHECK_THROWS(TimeGrid(1.0, 1.0, 3));
  CHECK_THROWS(TimeGrid(0.0, 1.0, 0));
}

TEST_CASE("total variation") {
  CHECK(total_variation(path_with({{3, 2.0, 0.0}}), 0, 10) == 2.0);
  CHECK(total_variation(BVControlPath::zero(grid10, 3), 0, 10) == 0.0);
  CHECK(total_variation(path_with({{1, 1.0, 0.0}, {2, 0.0, 1.0}}), 0, 10) == 2.0);
  // the window is half open
  CHECK(total_variation(path_with({{3, 2.0, 0.0}}), 0, 3) == 0.0);
  CHECK(total_variation(path_with({{3, 2.0, 0.0}}), 3, 4) == 2.0);
  CHECK_THROWS_AS(total_variation(BVControlPath::zero(grid10, 1), 4, 3), std::out_of_range);
  CHECK_THROWS_AS(total_variation(BVControlPath::zero(grid10, 1), 0, 11), std::out_of_range);
}

TEST_CASE("xi is left continuous") {
  const BVControlPath xi = path_with({{2, 1.5, 0.0}, {4, 0.0, 0.5}});
  CHECK(xi.value_at(0)(0) == 0.0);
  CHECK(xi.value_at(2)(0) == 0.0);
  CHECK(xi.value_at(3)(0) == 1.5);
  CHECK(xi.value_at(5)(0) == 1.0);
  CHECK(xi.step_variation(4) == 0.5);
}

TEST_CASE("fuel process") {
  const auto flat = fuel_process(BVControlPath::zero(grid10, 1), 0.7);
  CHECK(flat.size() == 11);
  for (double z : flat) CHECK(z == 0.7);
  const auto z = fuel_process(path_with({{0, 1.0, 0.0}}), 0.0);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 1.0);
  CHECK(z[10] == 1.0);
  CHECK(fuel_process(path_with({{2, 1.0, 0.0}, {5, 0.0, 1.0}}), 0.0).back() == 2.0);
}

TEST_CASE("eta and tau") {
  CHECK(eta_to_tau(EtaPath{grid10, std::nullopt}) == 1.0);
  const TimeGrid g4(0.0, 1.0, 4);
  CHECK(eta_to_tau(EtaPath{g4, 2}) == 0.5);

  const EtaPath never = tau_to_eta(10, grid10);
  for (int k = 0; k <= 10; ++k) CHECK_FALSE(never.at(k));
  const EtaPath first = tau_to_eta(0, grid10);
  CHECK_FALSE(first.at(0));
  for (int k = 1; k <= 10; ++k) CHECK(first.at(k));
  CHECK(first.right_limit(0));
  for (int k = 0; k <= 10; ++k) {
    CHECK(eta_to_tau(tau_to_eta(k, grid10)) == grid10.time(k));
    CHECK(tau_to_eta(k, grid10).tau_step() == k);
  }
  CHECK_THROWS_AS(tau_to_eta(11, grid10), std::out_of_range);
  CHECK_THROWS_AS(tau_to_eta(-1, grid10), std::out_of_range);
  // a flip at the horizon is never observed on the grid
  CHECK(tau_to_eta(10, grid10).same_process(EtaPath{grid10, std::nullopt}));
}

TEST_CASE("truncation") {
  SUBCASE("budget not reached") {
    const BVControlPath xi = path_with({{1, 1.0, 0.0}, {3, 0.0, 2.0}});
    const BVControlPath t = truncate_control(xi, 0, 5.0);
    CHECK(t.inc_plus == xi.inc_plus);
    CHECK(t.inc_minus == xi.inc_minus);
  }
  SUBCASE("zero budget drops everything after from_step") {
    const BVControlPath xi = path_with({{1, 1.0, 0.0}, {3, 0.0, 2.0}, {6, 1.0, 0.0}});
    const BVControlPath t = truncate_control(xi, 2, 0.0);
    CHECK(t.inc_plus(0, 1) == 1.0);
    CHECK(total_variation(t, 2, 10) == 0.0);
  }
  SUBCASE("strict and clip") {
    const BVControlPath xi = path_with({{2, 1.0, 0.0}, {5, 1.0, 0.0}});
    const BVControlPath s = truncate_control(xi, 0, 1.5, TruncationMode::Strict);
    CHECK(s.inc_plus(0, 2) == 1.0);
    CHECK(s.inc_plus(0, 5) == 0.0);
    const BVControlPath c = truncate_control(xi, 0, 1.5, TruncationMode::Clip);
    CHECK(c.inc_plus(0, 2) == 1.0);
    CHECK(c.inc_plus(0, 5) == 0.5);
  }
  SUBCASE("the jump that exactly meets the budget is dropped in strict mode") {
    const BVControlPath xi = path_with({{2, 1.0, 0.0}, {5, 1.0, 0.0}});
    CHECK(total_variation(truncate_control(xi, 0, 2.0), 0, 10) == 1.0);
    CHECK(total_variation(truncate_control(xi, 0, 2.0, TruncationMode::Clip), 0, 10) == 2.0);
  }
  CHECK_THROWS_AS(truncate_control(BVControlPath::zero(grid10, 1), 0, -1.0), SpecError);
}

TEST_CASE("replay of the built-in policies") {
  const Matrix noise = Matrix::Random(1, 10);
  const ReplayResult zero = replay_policy(zero_policy(), noise, grid10, 1);
  CHECK(total_variation(zero.control, 0, 10) == 0.0);
  CHECK_FALSE(zero.eta.flip_index.has_value());
  for (int a : zero.actions) CHECK(a == 0);

  const ReplayResult stop = replay_policy(stop_at_step_policy(2), noise, grid10, 1);
  CHECK(stop.eta.flip_index == 2);
  CHECK(replay_policy(stop_at_step_policy(2), Matrix(-noise), grid10, 1).eta.flip_index == 2);
}

TEST_CASE("replay is deterministic and freezes after a stop") {
  const NoiseFunctionalPolicy p{[](const PolicyInput& in) {
    Decision d = Decision::continue_with(0);
    d.inc_plus = Vector::Constant(1, 0.1 * in.step);
    if (in.step > 0 && in.noise(0, in.step - 1) > 0.5) return Decision::stop_now();
    return d;
  }};
  Matrix noise = Matrix::Zero(1, 10);
  noise(0, 4) = 1.0;
  const ReplayResult a = replay_policy(p, noise, grid10, 1);
  const ReplayResult b = replay_policy(p, noise, grid10, 1);
  CHECK(a.eta.flip_index == 5);
  CHECK(a.control.inc_plus == b.control.inc_plus);
  CHECK(a.control.inc_plus(0, 4) == doctest::Approx(0.4));
  for (int k = 5; k < 10; ++k) CHECK(a.control.inc_plus(0, k) == 0.0);
}

TEST_CASE("negative increments are rejected") {
  const NoiseFunctionalPolicy bad{[](const PolicyInput&) {
    Decision d = Decision::continue_with(0);
    d.inc_minus = Vector::Constant(1, -1.0);
    return d;
  }};
  CHECK_THROWS_AS(replay_policy(bad, Matrix::Zero(1, 10), grid10, 1), SpecError);
  CHECK_THROWS_AS(replay_policy(zero_policy(), Matrix::Zero(1, 9), grid10, 1), SpecError);
}

TEST_CASE("feedback replay truncates at the fuel budget") {
  ProblemSpec s = fgtest::zero_spec();
  s.fuel = FiniteFuel{1.0};
  const NoiseFunctionalPolicy push{[](const PolicyInput&) {
    Decision d = Decision::continue_with(0);
    d.inc_plus = Vector::Constant(1, 0.3);
    return d;
  }};
  const StateTrack track{&s, Vector::Zero(1), 0.2, TruncationMode::Strict};
  const ReplayResult r = replay_policy(push, Matrix::Zero(1, 10), grid10, 1, track);
  // budget 0.8: jumps at steps 0, 1 fit (0.6), the third would reach 0.9
  CHECK(total_variation(r.control, 0, 10) == doctest::Approx(0.6));
  CHECK(r.fuel.back() == doctest::Approx(0.8));
  CHECK(r.states(0, 10) == doctest::Approx(0.6));

  StateTrack clip = track;
  clip.truncation = TruncationMode::Clip;
  const ReplayResult c = replay_policy(push, Matrix::Zero(1, 10), grid10, 1, clip);
  CHECK(c.fuel.back() == doctest::Approx(1.0));

  StateTrack outside = track;
  outside.z0 = 1.5;
  CHECK_THROWS_AS(replay_policy(push, Matrix::Zero(1, 10), grid10, 1, outside), SpecError);
}

TEST_CASE("open loop replay reproduces the treble") {
  const BVControlPath xi = path_with({{1, 0.5, 0.0}, {3, 0.0, 0.25}});
  const EtaPath eta = tau_to_eta(6, grid10);
  std::vector<int> actions(10, 0);
  actions[2] = 1;
  const ReplayResult r = replay_policy(open_loop_policy(xi, eta, actions), Matrix::Zero(1, 10), grid10, 1);
  CHECK(r.control.inc_plus == xi.inc_plus);
  CHECK(r.control.inc_minus == xi.inc_minus);
  CHECK(r.eta.flip_index == 6);
  CHECK(r.actions[2] == 1);
}

TEST_CASE("control CSV has one row per grid time") {
  std::ostringstream os;
  write_control_csv(os, path_with({{1, 0.5, 0.0}}), tau_to_eta(3, grid10));
  std::string text = os.str();
  for (auto pos = text.find("\r\n"); pos != std::string::npos; pos = text.find("\r\n")) text.erase(pos, 1);
  std::istringstream is(text);
  std::string line;
  int rows = 0;
  std::getline(is, line);
  CHECK(line == "step,time,inc_plus_0,inc_minus_0,eta");
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 11);
  CHECK(text.find("\n1,0.1,0.5,0,0\n") != std::string::npos);
  CHECK(text.find("\n4,0.4,0,0,1\n") != std::string::npos);
}
