#include "fuelgrid/solver.hpp"

#include "fuelgrid/io.hpp"
#include "fuelgrid/payoff.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace fuelgrid {

std::string to_string(const NodeDecision& d) {
  switch (d.kind) {
    case NodeDecision::Kind::Exit: return "exit";
    case NodeDecision::Kind::Stop: return "stop";
    case NodeDecision::Kind::Continue: return "continue:" + std::to_string(d.index);
    case NodeDecision::Kind::Exert: return "exert:" + std::to_string(d.index) + (d.sign > 0 ? ":+" : ":-");
  }
  return "?";
}

std::string ValueField::id() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx-%016llx", static_cast<unsigned long long>(spec_hash),
                static_cast<unsigned long long>(lattice_hash));
  return buf;
}

double exertion_cost(const ProblemSpec& spec, double t, const Vector& x, int coordinate, int sign, double h) {
  Vector plus = Vector::Zero(x.size());
  Vector minus = Vector::Zero(x.size());
  (sign > 0 ? plus : minus)(coordinate) = h;
  return jump_cost(spec, t, x, plus, minus);
}

namespace {

// Per-slice cache of node coordinates and exertion costs.
struct SliceContext {
  const ProblemSpec& spec;
  const LatticeModel& model;
  std::vector<Vector> points;

  SliceContext(const ProblemSpec& s, const LatticeModel& m) : spec(s), model(m) {
    points.reserve(static_cast<std::size_t>(m.lattice.n_states()));
    for (int i = 0; i < m.lattice.n_states(); ++i) points.push_back(m.lattice.point(i));
  }
};

struct Branches {
  double stop = 0.0;
  std::vector<double> exert;  // 2 per coordinate (+, -), -inf when unavailable
  std::vector<double> cont;   // per action
};

// Continuation values at (k, s, j) from the values at k + 1.
void continuation(const SliceContext& ctx, const std::vector<double>& v, int k, int s, int j, Branches& out) {
  const Lattice& L = ctx.model.lattice;
  const TransitionModel& tm = ctx.model.transitions;
  const double t = L.grid().time(k);
  const double tn = L.grid().time(k + 1);
  const double z = L.fuel_at(j);
  const double zp = ctx.spec.payoff_fuel(z);
  const Vector& x = ctx.points[static_cast<std::size_t>(s)];
  out.cont.assign(ctx.spec.action_set.size(), 0.0);
  for (int a = 0; a < tm.n_actions; ++a) {
    double ev = 0.0;
    for (const auto& e : tm.at(k, s, a)) {
      const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
      const auto target = L.shift(s, off);
      const double next = target ? v[L.node(k + 1, *target, j)] : ctx.spec.exit_gain(tn, L.shifted_point(s, off), zp);
      ev += e.prob * next;
    }
    out.cont[static_cast<std::size_t>(a)] =
        ctx.spec.running_gain(t, x, zp, ctx.spec.action_set[static_cast<std::size_t>(a)]) * L.grid().dt() + ev;
  }
}

// Exertion candidates at (k, s, j) given the current slice values.
void exertions(const SliceContext& ctx, const std::vector<double>& v, int k, int s, int j, Branches& out) {
  const Lattice& L = ctx.model.lattice;
  const int d = L.dim();
  const double t = L.grid().time(k);
  const Vector& x = ctx.points[static_cast<std::size_t>(s)];
  out.exert.assign(static_cast<std::size_t>(2 * d), -std::numeric_limits<double>::infinity());
  const int jn = L.finite_fuel() ? j + 1 : j;
  if (jn >= L.n_fuel()) return;
  for (int i = 0; i < d; ++i)
    for (int sign : {+1, -1}) {
      if (!ctx.spec.can_push(i, sign)) continue;
      const double h = L.axes()[static_cast<std::size_t>(i)].h;
      const auto target = L.neighbour(s, i, sign);
      double landed;
      if (target) {
        landed = v[L.node(k, *target, jn)];
      } else {
        Vector y = x;
        y(i) += sign * h;
        landed = ctx.spec.exit_gain(t, y, ctx.spec.payoff_fuel(L.fuel_at(jn)));
      }
      out.exert[static_cast<std::size_t>(2 * i + (sign > 0 ? 0 : 1))] =
          landed - exertion_cost(ctx.spec, t, x, i, sign, h);
    }
}

double best_of(const Branches& b) {
  double best = b.stop;
  for (double e : b.exert) best = std::max(best, e);
  for (double c : b.cont) best = std::max(best, c);
  return best;
}

NodeDecision pick(const Branches& b, double tol) {
  const double best = best_of(b);
  if (b.stop >= best - tol) return NodeDecision::stop();
  for (std::size_t e = 0; e < b.exert.size(); ++e)
    if (b.exert[e] >= best - tol) return NodeDecision::exert(static_cast<int>(e / 2), e % 2 == 0 ? +1 : -1);
  for (std::size_t a = 0; a < b.cont.size(); ++a)
    if (b.cont[a] >= best - tol) return NodeDecision::cont(static_cast<int>(a));
  return NodeDecision::stop();
}

void check_finite(double v, int k, int s, int j) {
  if (!std::isfinite(v))
    throw NumericalError("non-finite value at step " + std::to_string(k) + ", state " + std::to_string(s) +
                         ", fuel " + std::to_string(j));
}

}  // namespace

Solution solve_backward(const ProblemSpec& spec, const LatticeModel& model, const SolverOptions& options) {
  require_valid_structure(spec);
  const Lattice& L = model.lattice;
  const int n = L.grid().n_steps();
  const int S = L.n_states();
  const int F = L.n_fuel();
  SliceContext ctx(spec, model);
  ValueField field;
  field.v.assign(L.size(), 0.0);
  field.spec_hash = spec_fingerprint(spec);
  field.lattice_hash = L.fingerprint();
  auto& v = field.v;

  for (int s = 0; s < S; ++s)
    for (int j = 0; j < F; ++j) {
      v[L.node(n, s, j)] = spec.exit_gain(spec.horizon, ctx.points[static_cast<std::size_t>(s)],
                                          spec.payoff_fuel(L.fuel_at(j)));
      check_finite(v[L.node(n, s, j)], n, s, j);
    }

  const long long max_iter = options.max_iter > 0 ? options.max_iter : 10LL * static_cast<long long>(L.slice_size());
  Branches b;
  std::vector<double> base(static_cast<std::size_t>(S));
  for (int k = n - 1; k >= 0; --k) {
    const double t = L.grid().time(k);
    for (int j = F - 1; j >= 0; --j) {
      const double zp = spec.payoff_fuel(L.fuel_at(j));
      for (int s = 0; s < S; ++s) {
        const Vector& x = ctx.points[static_cast<std::size_t>(s)];
        double& out = v[L.node(k, s, j)];
        if (!L.interior(s, j)) {
          out = spec.exit_gain(t, x, zp);
          check_finite(out, k, s, j);
          base[static_cast<std::size_t>(s)] = out;
          continue;
        }
        b.stop = spec.stop_gain(t, x, zp);
        continuation(ctx, v, k, s, j, b);
        b.exert.clear();
        double val = best_of(b);
        base[static_cast<std::size_t>(s)] = val;
        if (L.finite_fuel()) {
          exertions(ctx, v, k, s, j, b);
          val = best_of(b);
        }
        check_finite(val, k, s, j);
        out = val;
      }
      if (L.finite_fuel()) continue;

      // Infinite fuel: Jacobi iteration of the exertion operator in the slice.
      std::vector<double> next(static_cast<std::size_t>(S));
      long long iter = 0;
      double change = 0.0;
      for (;;) {
        ++iter;
        change = 0.0;
        for (int s = 0; s < S; ++s) {
          const std::size_t node = L.node(k, s, j);
          if (!L.interior(s, j)) {
            next[static_cast<std::size_t>(s)] = v[node];
            continue;
          }
          exertions(ctx, v, k, s, j, b);
          double val = base[static_cast<std::size_t>(s)];
          for (double e : b.exert) val = std::max(val, e);
          check_finite(val, k, s, j);
          next[static_cast<std::size_t>(s)] = val;
          change = std::max(change, std::abs(val - v[node]));
        }
        for (int s = 0; s < S; ++s) v[L.node(k, s, j)] = next[static_cast<std::size_t>(s)];
        if (change == 0.0 || (change <= options.tol_slice && iter > S)) break;
        if (iter > S + 1 && change > options.tol_slice)
          throw ConvergenceError("exertion iteration diverges at step " + std::to_string(k) +
                                 ": an exertion cycle has net gain");
        if (iter >= max_iter)
          throw ConvergenceError("exertion iteration did not converge at step " + std::to_string(k));
      }
      field.diagnostics.slice_iterations += iter;
      field.diagnostics.max_slice_iterations = std::max(field.diagnostics.max_slice_iterations, iter);
      field.diagnostics.max_final_change = std::max(field.diagnostics.max_final_change, change);
    }
  }
  PolicyField policy = extract_policy(spec, model, field, options);
  return Solution{std::move(field), std::move(policy)};
}

PolicyField extract_policy(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value,
                           const SolverOptions& options) {
  const Lattice& L = model.lattice;
  if (value.v.size() != L.size()) throw SpecError("extract_policy: value field does not match the lattice");
  const int n = L.grid().n_steps();
  SliceContext ctx(spec, model);
  PolicyField pf;
  pf.decisions.assign(L.size(), NodeDecision::exit());
  Branches b;
  for (int k = 0; k < n; ++k) {
    const double t = L.grid().time(k);
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!L.interior(s, j)) continue;
        b.stop = spec.stop_gain(t, ctx.points[static_cast<std::size_t>(s)], spec.payoff_fuel(L.fuel_at(j)));
        continuation(ctx, value.v, k, s, j, b);
        exertions(ctx, value.v, k, s, j, b);
        pf.decisions[L.node(k, s, j)] = pick(b, options.tol_tie);
      }
  }
  return pf;
}

double lookup_value(const LatticeModel& model, const ValueField& value, int k, const Vector& x, double z,
                    bool* extended) {
  const Lattice& L = model.lattice;
  if (k < 0 || k > L.grid().n_steps()) throw std::out_of_range("lookup_value: step out of range");
  const int s = L.nearest_state(x, extended);
  return value.v[L.node(k, s, L.nearest_fuel(z))];
}

NoiseFunctionalPolicy lattice_feedback_policy(const ProblemSpec& spec, const LatticeModel& model,
                                              const PolicyField& policy) {
  if (policy.decisions.size() != model.lattice.size())
    throw SpecError("lattice_feedback_policy: policy does not match the lattice");
  const int d = spec.dims.state;
  return {[lat = model.lattice, decisions = policy.decisions, d](const PolicyInput& in) {
    if (!in.has_state()) throw SpecError("lattice feedback policy needs the state");
    const int k = std::min(in.step, lat.grid().n_steps() - 1);
    int s = lat.nearest_state(in.x());
    int j = lat.nearest_fuel(in.z());
    Vector plus = Vector::Zero(d);
    Vector minus = Vector::Zero(d);
    const int limit = static_cast<int>(lat.slice_size()) + 1;
    for (int hops = 0;; ++hops) {
      if (hops > limit) throw ConvergenceError("exertion cycle in lattice policy");
      const NodeDecision& nd = decisions[lat.node(k, s, j)];
      Decision out;
      switch (nd.kind) {
        case NodeDecision::Kind::Stop:
          return Decision::stop_now();
        case NodeDecision::Kind::Exit:
          out = Decision::continue_with(0);
          break;
        case NodeDecision::Kind::Continue:
          out = Decision::continue_with(nd.index);
          break;
        case NodeDecision::Kind::Exert: {
          const double h = lat.axes()[static_cast<std::size_t>(nd.index)].h;
          (nd.sign > 0 ? plus : minus)(nd.index) += h;
          const auto target = lat.neighbour(s, nd.index, nd.sign);
          if (lat.finite_fuel()) ++j;
          if (target && j < lat.n_fuel()) {
            s = *target;
            continue;
          }
          out = Decision::continue_with(0);
          break;
        }
      }
      out.inc_plus = plus;
      out.inc_minus = minus;
      return out;
    }
  }};
}

void write_value_csv(std::ostream& os, const LatticeModel& model, const ValueField& value, const PolicyField& policy) {
  const Lattice& L = model.lattice;
  std::vector<std::string> header{"step", "time"};
  for (int i = 0; i < L.dim(); ++i) header.push_back("x_" + std::to_string(i));
  header.insert(header.end(), {"z", "interior", "value", "decision"});
  io::write_csv_row(os, header);
  for (int k = 0; k < L.n_times(); ++k)
    for (int s = 0; s < L.n_states(); ++s) {
      const Vector x = L.point(s);
      for (int j = 0; j < L.n_fuel(); ++j) {
        const std::size_t node = L.node(k, s, j);
        std::vector<std::string> row{std::to_string(k), io::format_number(L.grid().time(k))};
        for (int i = 0; i < L.dim(); ++i) row.push_back(io::format_number(x(i)));
        row.push_back(io::format_number(L.fuel_at(j)));
        row.push_back(L.interior(s, j) ? "1" : "0");
        row.push_back(io::format_number(value.v[node]));
        row.push_back(to_string(policy.decisions[node]));
        io::write_csv_row(os, row);
      }
    }
}

namespace {
constexpr char kValueMagic[4] = {'F', 'G', 'V', 'F'};
constexpr std::uint32_t kValueVersion = 1;
}  // namespace

void write_value_binary(std::ostream& os, const LatticeModel& model, const ValueField& value,
                        const PolicyField& policy) {
  const Lattice& L = model.lattice;
  os.write(kValueMagic, 4);
  io::write_u32(os, kValueVersion);
  io::write_u32(os, static_cast<std::uint32_t>(L.dim()));
  for (const auto& ax : L.axes()) {
    io::write_f64(os, ax.lo);
    io::write_f64(os, ax.h);
    io::write_u32(os, static_cast<std::uint32_t>(ax.count));
  }
  io::write_u32(os, static_cast<std::uint32_t>(L.n_fuel()));
  io::write_f64(os, L.fuel_step());
  io::write_f64(os, L.grid().t0());
  io::write_f64(os, L.grid().tN());
  io::write_u32(os, static_cast<std::uint32_t>(L.grid().n_steps()));
  io::write_u64(os, value.spec_hash);
  io::write_u64(os, value.lattice_hash);
  io::write_u64(os, value.v.size());
  for (double x : value.v) io::write_f64(os, x);
  for (const auto& d : policy.decisions) {
    const char kind = static_cast<char>(d.kind);
    const char sign = static_cast<char>(d.sign > 0 ? 1 : d.sign < 0 ? 2 : 0);
    os.write(&kind, 1);
    os.write(&sign, 1);
    io::write_u32(os, static_cast<std::uint32_t>(d.index));
  }
}

ValueSnapshot read_value_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kValueMagic, 4))
    throw SpecError("not a value field snapshot");
  if (io::read_u32(is) != kValueVersion) throw SpecError("unsupported value snapshot version");
  ValueSnapshot snap;
  const std::uint32_t d = io::read_u32(is);
  for (std::uint32_t i = 0; i < d; ++i) {
    Axis ax;
    ax.lo = io::read_f64(is);
    ax.h = io::read_f64(is);
    ax.count = static_cast<int>(io::read_u32(is));
    snap.axes.push_back(ax);
  }
  snap.n_fuel = static_cast<int>(io::read_u32(is));
  snap.fuel_step = io::read_f64(is);
  snap.t0 = io::read_f64(is);
  snap.tN = io::read_f64(is);
  snap.n_steps = static_cast<int>(io::read_u32(is));
  snap.value.spec_hash = io::read_u64(is);
  snap.value.lattice_hash = io::read_u64(is);
  const std::uint64_t count = io::read_u64(is);
  snap.value.v.resize(count);
  for (double& x : snap.value.v) x = io::read_f64(is);
  snap.policy.decisions.resize(count);
  for (auto& nd : snap.policy.decisions) {
    char kind, sign;
    if (!is.read(&kind, 1) || !is.read(&sign, 1)) throw std::runtime_error("truncated binary input");
    nd.kind = static_cast<NodeDecision::Kind>(kind);
    nd.sign = sign == 1 ? 1 : sign == 2 ? -1 : 0;
    nd.index = static_cast<int>(io::read_u32(is));
  }
  return snap;
}

}  // namespace fuelgrid
