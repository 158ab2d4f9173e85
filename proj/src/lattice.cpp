#include "fuelgrid/solver.hpp"

#include <cmath>
#include <string>

namespace fuelgrid {

namespace {

std::uint64_t fnv_mix(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
std::uint64_t fnv_value(std::uint64_t h, T v) {
  return fnv_mix(h, &v, sizeof(T));
}

bool near_integer(double r) { return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r)); }

}  // namespace

Lattice::Lattice(const ProblemSpec& spec, const TimeGrid& grid, std::vector<Axis> axes)
    : grid_(grid), axes_(std::move(axes)), finite_(spec.finite_fuel()) {
  if (static_cast<int>(axes_.size()) != spec.dims.state) throw SpecError("lattice needs one axis per state coordinate");
  strides_.resize(axes_.size());
  long long total = 1;
  for (std::size_t i = axes_.size(); i-- > 0;) {
    if (axes_[i].count < 1 || !(axes_[i].h > 0.0)) throw SpecError("lattice axis needs count >= 1 and h > 0");
    strides_[i] = static_cast<int>(total);
    total *= axes_[i].count;
    if (total > (1LL << 30)) throw SpecError("lattice too large");
  }
  n_states_ = static_cast<int>(total);

  if (finite_) {
    std::optional<double> step;
    for (int i = 0; i < spec.dims.state; ++i) {
      if (!spec.can_push(i, +1) && !spec.can_push(i, -1)) continue;
      const double h = axes_[static_cast<std::size_t>(i)].h;
      if (step && std::abs(*step - h) > 1e-12 * h)
        throw SpecError("finite fuel needs equal spacing on every pushable coordinate");
      step = h;
    }
    fuel_step_ = step ? *step : axes_.front().h;
    const double levels = spec.zbar() / fuel_step_;
    if (!near_integer(levels)) throw SpecError("zbar must be a multiple of the lattice spacing");
    n_fuel_ = static_cast<int>(std::llround(levels)) + 1;
  }

  interior_.resize(slice_size());
  for (int s = 0; s < n_states_; ++s) {
    const Vector x = point(s);
    for (int j = 0; j < n_fuel_; ++j)
      interior_[static_cast<std::size_t>(s) * n_fuel_ + j] = spec.domain(x, spec.payoff_fuel(fuel_at(j))) ? 1 : 0;
  }
}

std::vector<int> Lattice::multi_index(int s) const {
  std::vector<int> idx(axes_.size());
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    idx[i] = s / strides_[i];
    s %= strides_[i];
  }
  return idx;
}

Vector Lattice::point(int s) const {
  Vector x(dim());
  const auto idx = multi_index(s);
  for (int i = 0; i < dim(); ++i) x(i) = axes_[static_cast<std::size_t>(i)].at(idx[static_cast<std::size_t>(i)]);
  return x;
}

std::optional<int> Lattice::shift(int s, const Offset& offset) const {
  const auto idx = multi_index(s);
  int out = 0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const int c = idx[i] + offset[i];
    if (c < 0 || c >= axes_[i].count) return std::nullopt;
    out += c * strides_[i];
  }
  return out;
}

std::optional<int> Lattice::neighbour(int s, int coordinate, int sign) const {
  Offset off(axes_.size(), 0);
  off[static_cast<std::size_t>(coordinate)] = sign;
  return shift(s, off);
}

Vector Lattice::shifted_point(int s, const Offset& offset) const {
  Vector x = point(s);
  for (int i = 0; i < dim(); ++i) x(i) += offset[static_cast<std::size_t>(i)] * axes_[static_cast<std::size_t>(i)].h;
  return x;
}

int Lattice::nearest_state(const Vector& x, bool* clamped) const {
  bool outside = false;
  int s = 0;
  for (int i = 0; i < dim(); ++i) {
    const Axis& ax = axes_[static_cast<std::size_t>(i)];
    long long c = std::llround((x(i) - ax.lo) / ax.h);
    if (c < 0 || c >= ax.count) {
      outside = true;
      c = std::clamp<long long>(c, 0, ax.count - 1);
    }
    s += static_cast<int>(c) * strides_[static_cast<std::size_t>(i)];
  }
  if (clamped) *clamped = outside;
  return s;
}

int Lattice::nearest_fuel(double z) const {
  if (!finite_) return 0;
  const long long j = std::llround(z / fuel_step_);
  return static_cast<int>(std::clamp<long long>(j, 0, n_fuel_ - 1));
}

std::uint64_t Lattice::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  h = fnv_value(h, grid_.t0());
  h = fnv_value(h, grid_.tN());
  h = fnv_value(h, grid_.n_steps());
  for (const auto& ax : axes_) {
    h = fnv_value(h, ax.lo);
    h = fnv_value(h, ax.h);
    h = fnv_value(h, ax.count);
  }
  h = fnv_value(h, n_fuel_);
  h = fnv_value(h, fuel_step_);
  for (char c : interior_) h = fnv_value(h, c);
  return h;
}

namespace {

struct Infeasible {
  int step;
};

std::vector<Offset> stencil_directions(int d) {
  std::vector<Offset> dirs;
  dirs.emplace_back(static_cast<std::size_t>(d), 0);
  for (int i = 0; i < d; ++i)
    for (int sign : {+1, -1}) {
      Offset o(static_cast<std::size_t>(d), 0);
      o[static_cast<std::size_t>(i)] = sign;
      dirs.push_back(o);
    }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (auto [si, sj] : {std::pair{1, 1}, std::pair{-1, -1}, std::pair{1, -1}, std::pair{-1, 1}}) {
        Offset o(static_cast<std::size_t>(d), 0);
        o[static_cast<std::size_t>(i)] = si;
        o[static_cast<std::size_t>(j)] = sj;
        dirs.push_back(o);
      }
  return dirs;
}

// Direction index helpers matching stencil_directions.
int axis_dir(int i, int sign) { return 1 + 2 * i + (sign > 0 ? 0 : 1); }
int cross_dir(int d, int i, int j, int variant) {
  int base = 1 + 2 * d;
  for (int a = 0; a < i; ++a) base += 4 * (d - a - 1);
  return base + 4 * (j - i - 1) + variant;
}

TransitionModel build_transitions(const ProblemSpec& spec, const Lattice& lat, LatticeDiagnostics& diag) {
  const int d = lat.dim();
  const int n = lat.grid().n_steps();
  const int S = lat.n_states();
  const int A = static_cast<int>(spec.action_set.size());
  const double dt = lat.grid().dt();
  TransitionModel tm;
  tm.directions = stencil_directions(d);
  tm.n_actions = A;
  tm.n_states = S;
  tm.row_start.reserve(static_cast<std::size_t>(n) * S * A + 1);
  tm.row_start.push_back(0);
  std::vector<double> h(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) h[static_cast<std::size_t>(i)] = lat.axes()[static_cast<std::size_t>(i)].h;

  std::vector<double> p(tm.directions.size());
  for (int k = 0; k < n; ++k) {
    const double t = lat.grid().time(k);
    for (int s = 0; s < S; ++s) {
      const Vector x = lat.point(s);
      for (int a = 0; a < A; ++a) {
        const Vector& act = spec.action_set[static_cast<std::size_t>(a)];
        const Vector mu = spec.drift(t, x, act);
        const Matrix sig = spec.diffusion(t, x, act);
        if (!mu.allFinite() || !sig.allFinite())
          throw NumericalError("non-finite drift or diffusion at step " + std::to_string(k) + ", node " +
                               std::to_string(s));
        const Matrix cov = sig * sig.transpose();
        std::fill(p.begin(), p.end(), 0.0);
        for (int i = 0; i < d; ++i) {
          const double hi = h[static_cast<std::size_t>(i)];
          double diag_part = cov(i, i) / (2 * hi * hi);
          for (int j = 0; j < d; ++j)
            if (j != i) diag_part -= std::abs(cov(i, j)) / (2 * hi * h[static_cast<std::size_t>(j)]);
          if (diag_part < -1e-12 * std::max(1.0, cov(i, i) / (hi * hi)))
            throw SpecError("diffusion is not diagonally dominant for the lattice spacings at step " +
                            std::to_string(k) + ", node " + std::to_string(s) + "; a smaller dt cannot fix this");
          diag_part = std::max(diag_part, 0.0);
          p[static_cast<std::size_t>(axis_dir(i, +1))] = dt * (diag_part + std::max(mu(i), 0.0) / hi);
          p[static_cast<std::size_t>(axis_dir(i, -1))] = dt * (diag_part + std::max(-mu(i), 0.0) / hi);
          for (int j = i + 1; j < d; ++j) {
            const double scale = dt / (2 * hi * h[static_cast<std::size_t>(j)]);
            const double plus = std::max(cov(i, j), 0.0) * scale;
            const double minus = std::max(-cov(i, j), 0.0) * scale;
            p[static_cast<std::size_t>(cross_dir(d, i, j, 0))] = plus;
            p[static_cast<std::size_t>(cross_dir(d, i, j, 1))] = plus;
            p[static_cast<std::size_t>(cross_dir(d, i, j, 2))] = minus;
            p[static_cast<std::size_t>(cross_dir(d, i, j, 3))] = minus;
          }
        }
        double moved = 0.0;
        for (std::size_t e = 1; e < p.size(); ++e) moved += p[e];
        double stay = 1.0 - moved;
        if (stay < -1e-12) throw Infeasible{k};
        stay = std::max(stay, 0.0);
        p[0] = stay;
        diag.min_stay_probability = std::min(diag.min_stay_probability, stay);

        Vector m1 = Vector::Zero(d);
        Matrix m2 = Matrix::Zero(d, d);
        for (std::size_t e = 0; e < p.size(); ++e) {
          if (p[e] <= 0.0) continue;
          tm.entries.push_back({static_cast<int>(e), p[e]});
          Vector dx(d);
          for (int i = 0; i < d; ++i)
            dx(i) = tm.directions[e][static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
          m1 += p[e] * dx;
          m2 += p[e] * dx * dx.transpose();
        }
        diag.max_first_moment_error = std::max(diag.max_first_moment_error, (m1 - mu * dt).cwiseAbs().maxCoeff());
        diag.max_second_moment_error =
            std::max(diag.max_second_moment_error, (m2 - cov * dt).cwiseAbs().maxCoeff());
        tm.row_start.push_back(tm.entries.size());
      }
    }
  }
  return tm;
}

}  // namespace

LatticeModel build_lattice(const ProblemSpec& spec, const LatticeSpec& request) {
  require_valid_structure(spec);
  const int d = spec.dims.state;
  if (request.lo.size() != d || request.hi.size() != d || request.h.size() != d)
    throw SpecError("lattice bounds and spacings need one entry per state coordinate");
  if (request.n_steps < 1) throw SpecError("lattice needs n_steps >= 1");
  std::vector<Axis> axes;
  for (int i = 0; i < d; ++i) {
    const double lo = request.lo(i), hi = request.hi(i), h = request.h(i);
    if (!(h > 0.0) || !(hi >= lo)) throw SpecError("lattice axis " + std::to_string(i) + " needs h > 0 and hi >= lo");
    const double cells = (hi - lo) / h;
    if (!near_integer(cells)) throw SpecError("lattice axis " + std::to_string(i) + ": (hi - lo) / h is not an integer");
    axes.push_back(Axis{lo, h, static_cast<int>(std::llround(cells)) + 1});
  }
  int n_steps = request.n_steps;
  for (int attempt = 0;; ++attempt) {
    const TimeGrid grid(spec.start_time, spec.horizon, n_steps);
    LatticeDiagnostics diag;
    diag.shrink_count = attempt;
    Lattice lattice(spec, grid, axes);
    try {
      TransitionModel tm = build_transitions(spec, lattice, diag);
      return LatticeModel{std::move(lattice), std::move(tm), diag};
    } catch (const Infeasible& bad) {
      if (!request.auto_shrink || attempt >= request.max_shrink)
        throw SpecError("infeasible stencil (negative stay probability) at step " + std::to_string(bad.step) +
                        " with " + std::to_string(n_steps) + " time steps; reduce dt or enable auto_shrink");
      n_steps *= 2;
    }
  }
}

}  // namespace fuelgrid
