#pragma once

#include "fuelgrid/problem.hpp"

#include <cmath>
#include <random>

namespace fgtest {

using fuelgrid::Matrix;
using fuelgrid::Vector;

/// Everything zero: no drift or noise, zero gains and costs, whole space,
/// one action, infinite fuel.
inline fuelgrid::ProblemSpec zero_spec(int d = 1, int noise = 1) {
  fuelgrid::ProblemSpec s;
  s.name = "zero";
  s.dims = {d, noise, 1};
  s.drift = [d](double, const Vector&, const Vector&) { return Vector(Vector::Zero(d)); };
  s.diffusion = [d, noise](double, const Vector&, const Vector&) { return Matrix(Matrix::Zero(d, noise)); };
  s.running_gain = [](double, const Vector&, double, const Vector&) { return 0.0; };
  s.exit_gain = [](double, const Vector&, double) { return 0.0; };
  s.stop_gain = [](double, const Vector&, double) { return 0.0; };
  s.cost_plus = [d](double, const Vector&) { return Vector(Vector::Zero(d)); };
  s.cost_minus = [d](double, const Vector&) { return Vector(Vector::Zero(d)); };
  s.domain = [](const Vector&, double) { return true; };
  s.action_set = {Vector::Zero(1)};
  s.costs_uniform = true;
  return s;
}

inline void set_constant_drift(fuelgrid::ProblemSpec& s, double mu) {
  const int d = s.dims.state;
  s.drift = [d, mu](double, const Vector&, const Vector&) { return Vector(Vector::Constant(d, mu)); };
}

inline void set_constant_diffusion(fuelgrid::ProblemSpec& s, double sigma) {
  const int d = s.dims.state, m = s.dims.noise;
  s.diffusion = [d, m, sigma](double, const Vector&, const Vector&) {
    Matrix out = Matrix::Zero(d, m);
    for (int i = 0; i < std::min(d, m); ++i) out(i, i) = sigma;
    return out;
  };
}

inline Vector scalar(double x) { return Vector::Constant(1, x); }

}  // namespace fgtest
