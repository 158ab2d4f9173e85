#include "fuelgrid/verify.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <string>

namespace fuelgrid {

NodeRef root_node(const LatticeModel& model, const Vector& x0, double z0) {
  return NodeRef{model.lattice.nearest_state(x0), model.lattice.nearest_fuel(z0)};
}

namespace {

using Kind = NodeDecision::Kind;

double gain(const ProblemSpec& spec, const GainFn& g, double t, const Vector& x, double z) {
  return g(t, x, spec.payoff_fuel(z));
}

double push_cost(const ProblemSpec& spec, double t, const Vector& x, int i, int sign, double h) {
  Vector plus = Vector::Zero(x.size());
  Vector minus = Vector::Zero(x.size());
  if (sign > 0)
    plus(i) = h;
  else
    minus(i) = h;
  return jump_cost(spec, t, x, plus, minus);
}

Vector moved_point(const Lattice& L, int s, const Offset& off) {
  Vector y = L.point(s);
  for (int i = 0; i < L.dim(); ++i) y(i) += off[static_cast<std::size_t>(i)] * L.axes()[static_cast<std::size_t>(i)].h;
  return y;
}

Offset unit(int d, int i, int sign) {
  Offset o(static_cast<std::size_t>(d), 0);
  o[static_cast<std::size_t>(i)] = sign;
  return o;
}

std::size_t slice_index(const Lattice& L, int s, int j) { return static_cast<std::size_t>(s) * L.n_fuel() + j; }

bool exert_allowed(const ProblemSpec& spec, const Lattice& L, int j, int i, int sign) {
  if (!spec.can_push(i, sign)) return false;
  return !L.finite_fuel() || j + 1 < L.n_fuel();
}

}  // namespace

// ---------------------------------------------------------------------------

double evaluate_lattice_policy(const ProblemSpec& spec, const LatticeModel& model, const PolicyField& policy,
                               int start_step, NodeRef start, const LeafRule& leaf,
                               const std::vector<double>* leaf_values) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int n = L.grid().n_steps();
  const int S = L.n_states();
  const int F = L.n_fuel();
  const double dt = L.grid().dt();
  if (policy.decisions.size() != L.size()) throw SpecError("evaluate_lattice_policy: policy does not match the lattice");
  if (start_step < 0 || start_step > n) throw std::out_of_range("evaluate_lattice_policy: start step out of range");
  if (!std::holds_alternative<std::monostate>(leaf) && (!leaf_values || leaf_values->size() != L.size()))
    throw SpecError("evaluate_lattice_policy: leaf rule needs leaf values");
  if (const auto* at = std::get_if<LeafAtStep>(&leaf); at && at->step < start_step)
    throw SpecError("evaluate_lattice_policy: leaf step before the start");

  std::vector<double> mass(L.slice_size(), 0.0);
  std::vector<double> next(L.slice_size(), 0.0);
  mass[slice_index(L, start.s, start.j)] = 1.0;
  double total = 0.0;

  for (int k = start_step; k <= n; ++k) {
    const double t = L.grid().time(k);
    if (const auto* at = std::get_if<LeafAtStep>(&leaf); at && at->step == k) {
      for (int s = 0; s < S; ++s)
        for (int j = 0; j < F; ++j)
          if (const double m = mass[slice_index(L, s, j)]; m != 0.0) total += m * (*leaf_values)[L.node(k, s, j)];
      return total;
    }
    if (const auto* hit = std::get_if<LeafOnHitting>(&leaf)) {
      for (std::size_t q = 0; q < mass.size(); ++q)
        if (mass[q] != 0.0 && hit->region[q]) {
          const int s = static_cast<int>(q) / F;
          const int j = static_cast<int>(q) % F;
          total += mass[q] * (*leaf_values)[L.node(k, s, j)];
          mass[q] = 0.0;
        }
    }
    if (k == n) {
      for (int s = 0; s < S; ++s)
        for (int j = 0; j < F; ++j)
          if (const double m = mass[slice_index(L, s, j)]; m != 0.0)
            total += m * gain(spec, spec.exit_gain, t, L.point(s), L.fuel_at(j));
      return total;
    }

    // Exertions move mass inside the slice.
    auto settle = [&](int s, int j) -> bool {
      double& m = mass[slice_index(L, s, j)];
      if (m == 0.0) return false;
      const Vector x = L.point(s);
      if (!L.interior(s, j)) {
        total += m * gain(spec, spec.exit_gain, t, x, L.fuel_at(j));
        m = 0.0;
        return false;
      }
      const NodeDecision& d = policy.decisions[L.node(k, s, j)];
      if (d.kind != Kind::Exert) return false;
      if (!exert_allowed(spec, L, j, d.index, d.sign)) throw SpecError("policy exerts where it is not allowed");
      const double h = L.axes()[static_cast<std::size_t>(d.index)].h;
      total -= m * push_cost(spec, t, x, d.index, d.sign, h);
      const int jn = L.finite_fuel() ? j + 1 : j;
      const auto target = L.shift(s, unit(L.dim(), d.index, d.sign));
      if (target) {
        mass[slice_index(L, *target, jn)] += m;
      } else {
        total += m * gain(spec, spec.exit_gain, t, moved_point(L, s, unit(L.dim(), d.index, d.sign)), L.fuel_at(jn));
      }
      m = 0.0;
      return true;
    };
    if (L.finite_fuel()) {
      for (int j = 0; j < F; ++j)
        for (int s = 0; s < S; ++s) settle(s, j);
    } else {
      for (int pass = 0;; ++pass) {
        if (pass > S + 1) throw ConvergenceError("exertion cycle in lattice policy at step " + std::to_string(k));
        bool moved = false;
        for (int s = 0; s < S; ++s) moved = settle(s, 0) || moved;
        if (!moved) break;
      }
    }

    const double tn = L.grid().time(k + 1);
    std::fill(next.begin(), next.end(), 0.0);
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < F; ++j) {
        const double m = mass[slice_index(L, s, j)];
        if (m == 0.0) continue;
        const Vector x = L.point(s);
        const NodeDecision& d = policy.decisions[L.node(k, s, j)];
        if (d.kind == Kind::Stop) {
          total += m * gain(spec, spec.stop_gain, t, x, L.fuel_at(j));
          continue;
        }
        if (d.kind != Kind::Continue) throw SpecError("policy has no decision at an interior node");
        const Vector& a = spec.action_set.at(static_cast<std::size_t>(d.index));
        total += m * spec.running_gain(t, x, spec.payoff_fuel(L.fuel_at(j)), a) * dt;
        for (const auto& e : tm.at(k, s, d.index)) {
          const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
          const auto target = L.shift(s, off);
          if (target)
            next[slice_index(L, *target, j)] += m * e.prob;
          else
            total += m * e.prob * gain(spec, spec.exit_gain, tn, moved_point(L, s, off), L.fuel_at(j));
        }
      }
    std::swap(mass, next);
  }
  return total;
}

PolicyField random_lattice_policy(const ProblemSpec& spec, const LatticeModel& model, std::mt19937_64& rng,
                                  const RandomPolicyOptions& options) {
  const Lattice& L = model.lattice;
  const int d = L.dim();
  const int A = static_cast<int>(spec.action_set.size());
  std::vector<int> fixed_sign(static_cast<std::size_t>(d), 0);
  if (!L.finite_fuel()) {
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < d; ++i) {
      const bool p = spec.can_push(i, +1), q = spec.can_push(i, -1);
      fixed_sign[static_cast<std::size_t>(i)] = p && q ? (coin(rng) ? 1 : -1) : p ? 1 : q ? -1 : 0;
    }
  }
  PolicyField pf;
  pf.decisions.assign(L.size(), NodeDecision::exit());
  std::vector<NodeDecision> options_list;
  std::vector<double> weights;
  for (int k = 0; k < L.grid().n_steps(); ++k)
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!L.interior(s, j)) continue;
        options_list.clear();
        weights.clear();
        options_list.push_back(NodeDecision::stop());
        weights.push_back(options.stop_weight);
        for (int a = 0; a < A; ++a) {
          options_list.push_back(NodeDecision::cont(a));
          weights.push_back(1.0);
        }
        for (int i = 0; i < d; ++i)
          for (int sign : {+1, -1}) {
            if (!exert_allowed(spec, L, j, i, sign)) continue;
            if (!L.finite_fuel() && sign != fixed_sign[static_cast<std::size_t>(i)]) continue;
            options_list.push_back(NodeDecision::exert(i, sign));
            weights.push_back(options.exert_weight);
          }
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        pf.decisions[L.node(k, s, j)] = options_list[pick(rng)];
      }
  return pf;
}

// ---------------------------------------------------------------------------

namespace {

// Exhaustive expectimax over decision histories.
class TreeSearch {
 public:
  TreeSearch(const ProblemSpec& spec, const LatticeModel& model, const LeafRule& leaf,
             const std::vector<double>* leaf_values, std::uint64_t max_nodes)
      : spec_(spec), model_(model), L_(model.lattice), leaf_(leaf), leaf_values_(leaf_values), max_nodes_(max_nodes) {}

  double run(int k, NodeRef root) {
    visited_.clear();
    return value(k, root.s, root.j, true);
  }

 private:
  double value(int k, int s, int j, bool entering) {
    if (++count_ > max_nodes_) throw SearchLimitError("instance too large for exhaustive search");
    if (entering) {
      if (const auto* at = std::get_if<LeafAtStep>(&leaf_); at && at->step == k)
        return (*leaf_values_)[L_.node(k, s, j)];
      if (const auto* hit = std::get_if<LeafOnHitting>(&leaf_); hit && hit->region[slice_index(L_, s, j)])
        return (*leaf_values_)[L_.node(k, s, j)];
    }
    const double t = L_.grid().time(k);
    const Vector x = L_.point(s);
    const double z = L_.fuel_at(j);
    if (k == L_.grid().n_steps() || !L_.interior(s, j)) return gain(spec_, spec_.exit_gain, t, x, z);

    double best = gain(spec_, spec_.stop_gain, t, x, z);
    const double tn = L_.grid().time(k + 1);
    const TransitionModel& tm = model_.transitions;
    for (int a = 0; a < tm.n_actions; ++a) {
      double ev = 0.0;
      for (const auto& e : tm.at(k, s, a)) {
        const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
        const auto target = L_.shift(s, off);
        if (target) {
          auto saved = std::move(visited_);
          visited_.clear();
          ev += e.prob * value(k + 1, *target, j, true);
          visited_ = std::move(saved);
        } else {
          ev += e.prob * gain(spec_, spec_.exit_gain, tn, moved_point(L_, s, off), z);
        }
      }
      const double run = spec_.running_gain(t, x, spec_.payoff_fuel(z), spec_.action_set[static_cast<std::size_t>(a)]) *
                         L_.grid().dt();
      best = std::max(best, run + ev);
    }
    for (int i = 0; i < L_.dim(); ++i)
      for (int sign : {+1, -1}) {
        if (!exert_allowed(spec_, L_, j, i, sign)) continue;
        const double h = L_.axes()[static_cast<std::size_t>(i)].h;
        const int jn = L_.finite_fuel() ? j + 1 : j;
        const auto target = L_.shift(s, unit(L_.dim(), i, sign));
        double landed;
        if (!target) {
          landed = gain(spec_, spec_.exit_gain, t, moved_point(L_, s, unit(L_.dim(), i, sign)), L_.fuel_at(jn));
        } else {
          if (!L_.finite_fuel()) {
            // simple paths only: a state is not revisited within the slice
            if (*target == s || visited_.count(*target)) continue;
            visited_.insert(s);
            landed = value(k, *target, jn, false);
            visited_.erase(s);
          } else {
            landed = value(k, *target, jn, false);
          }
        }
        best = std::max(best, landed - push_cost(spec_, t, x, i, sign, h));
      }
    return best;
  }

  const ProblemSpec& spec_;
  const LatticeModel& model_;
  const Lattice& L_;
  const LeafRule& leaf_;
  const std::vector<double>* leaf_values_;
  std::uint64_t max_nodes_;
  std::uint64_t count_ = 0;
  std::set<int> visited_;
};

}  // namespace

double brute_force_value(const ProblemSpec& spec, const LatticeModel& model, NodeRef root,
                         const BruteForceOptions& options) {
  TreeSearch search(spec, model, {}, nullptr, options.max_tree_nodes);
  return search.run(0, root);
}

double enumerate_feedback_value(const ProblemSpec& spec, const LatticeModel& model, NodeRef root,
                                std::uint64_t max_policies) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int n = L.grid().n_steps();
  // Interior nodes reachable from the root under some decision map.
  std::vector<char> reach(L.size(), 0);
  reach[L.node(0, root.s, root.j)] = 1;
  for (int k = 0; k < n; ++k) {
    bool grew = true;
    while (grew) {
      grew = false;
      for (int s = 0; s < L.n_states(); ++s)
        for (int j = 0; j < L.n_fuel(); ++j) {
          if (!reach[L.node(k, s, j)] || !L.interior(s, j)) continue;
          for (int i = 0; i < L.dim(); ++i)
            for (int sign : {+1, -1}) {
              if (!exert_allowed(spec, L, j, i, sign)) continue;
              const auto target = L.shift(s, unit(L.dim(), i, sign));
              const int jn = L.finite_fuel() ? j + 1 : j;
              if (target && !reach[L.node(k, *target, jn)]) reach[L.node(k, *target, jn)] = grew = true;
            }
        }
    }
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!reach[L.node(k, s, j)] || !L.interior(s, j)) continue;
        for (int a = 0; a < tm.n_actions; ++a)
          for (const auto& e : tm.at(k, s, a))
            if (const auto target = L.shift(s, tm.directions[static_cast<std::size_t>(e.direction)]))
              reach[L.node(k + 1, *target, j)] = 1;
      }
  }

  std::vector<std::size_t> nodes;
  std::vector<std::vector<NodeDecision>> choices;
  long double total = 1.0L;
  for (int k = 0; k < n; ++k)
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!reach[L.node(k, s, j)] || !L.interior(s, j)) continue;
        std::vector<NodeDecision> c{NodeDecision::stop()};
        for (int a = 0; a < tm.n_actions; ++a) c.push_back(NodeDecision::cont(a));
        for (int i = 0; i < L.dim(); ++i)
          for (int sign : {+1, -1})
            if (exert_allowed(spec, L, j, i, sign)) c.push_back(NodeDecision::exert(i, sign));
        total *= c.size();
        if (total > static_cast<long double>(max_policies))
          throw SearchLimitError("too many feedback maps to enumerate");
        nodes.push_back(L.node(k, s, j));
        choices.push_back(std::move(c));
      }

  PolicyField pf;
  pf.decisions.assign(L.size(), NodeDecision::exit());
  std::vector<std::size_t> digit(nodes.size(), 0);
  for (std::size_t q = 0; q < nodes.size(); ++q) pf.decisions[nodes[q]] = choices[q][0];
  double best = -std::numeric_limits<double>::infinity();
  for (;;) {
    try {
      best = std::max(best, evaluate_lattice_policy(spec, model, pf, 0, root));
    } catch (const ConvergenceError&) {
      // cyclic exertions are not a policy
    }
    std::size_t q = 0;
    for (; q < nodes.size(); ++q) {
      if (++digit[q] < choices[q].size()) {
        pf.decisions[nodes[q]] = choices[q][digit[q]];
        break;
      }
      digit[q] = 0;
      pf.decisions[nodes[q]] = choices[q][0];
    }
    if (q == nodes.size()) break;
  }
  return best;
}

namespace {

struct NodeBranches {
  double stop = 0.0;
  std::vector<std::pair<NodeDecision, double>> others;  // exertions then continuations

  double best() const {
    double b = stop;
    for (const auto& o : others) b = std::max(b, o.second);
    return b;
  }
};

// Right-hand side branches at an interior node, recomputed from the problem.
NodeBranches node_branches(const ProblemSpec& spec, const LatticeModel& model, const std::vector<double>& v, int k,
                           int s, int j) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const double t = L.grid().time(k);
  const double tn = L.grid().time(k + 1);
  const Vector x = L.point(s);
  const double z = L.fuel_at(j);
  NodeBranches b;
  b.stop = gain(spec, spec.stop_gain, t, x, z);
  for (int i = 0; i < L.dim(); ++i)
    for (int sign : {+1, -1}) {
      if (!exert_allowed(spec, L, j, i, sign)) continue;
      const Offset off = unit(L.dim(), i, sign);
      const int jn = L.finite_fuel() ? j + 1 : j;
      const auto target = L.shift(s, off);
      const double landed =
          target ? v[L.node(k, *target, jn)] : gain(spec, spec.exit_gain, t, moved_point(L, s, off), L.fuel_at(jn));
      b.others.emplace_back(NodeDecision::exert(i, sign),
                            landed - push_cost(spec, t, x, i, sign, L.axes()[static_cast<std::size_t>(i)].h));
    }
  for (int a = 0; a < tm.n_actions; ++a) {
    double ev = 0.0;
    for (const auto& e : tm.at(k, s, a)) {
      const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
      const auto target = L.shift(s, off);
      ev += e.prob * (target ? v[L.node(k + 1, *target, j)] : gain(spec, spec.exit_gain, tn, moved_point(L, s, off), z));
    }
    const double f = spec.running_gain(t, x, spec.payoff_fuel(z), spec.action_set[static_cast<std::size_t>(a)]);
    b.others.emplace_back(NodeDecision::cont(a), f * L.grid().dt() + ev);
  }
  return b;
}

}  // namespace

ResidualReport one_step_residual(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value) {
  const Lattice& L = model.lattice;
  if (value.v.size() != L.size()) throw SpecError("one_step_residual: value field does not match the lattice");
  ResidualReport r;
  for (int k = 0; k < L.grid().n_steps(); ++k)
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!L.interior(s, j)) continue;
        const double rhs = node_branches(spec, model, value.v, k, s, j).best();
        r.max_residual = std::max(r.max_residual, std::abs(value.v[L.node(k, s, j)] - rhs));
        ++r.nodes_checked;
      }
  return r;
}

DppResult check_dpp(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value, NodeRef root,
                    const LeafRule& leaf, const DppOptions& options) {
  const Lattice& L = model.lattice;
  if (value.v.size() != L.size()) throw SpecError("check_dpp: unsolved or mismatched value field");
  if (std::holds_alternative<std::monostate>(leaf)) throw SpecError("check_dpp: a leaf rule is required");
  if (const auto* hit = std::get_if<LeafOnHitting>(&leaf); hit && hit->region.size() != L.slice_size())
    throw SpecError("check_dpp: hitting region has the wrong size");
  DppResult r;
  r.root_value = value.v[L.node(0, root.s, root.j)];
  if (options.mode == DppMode::Exact) {
    TreeSearch search(spec, model, leaf, &value.v, options.tree.max_tree_nodes);
    r.sup = search.run(0, root);
    r.residual = std::abs(r.root_value - r.sup);
    return r;
  }
  std::mt19937_64 rng(options.seed);
  r.sup = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.samples; ++i) {
    const PolicyField pf = random_lattice_policy(spec, model, rng);
    r.sup = std::max(r.sup, evaluate_lattice_policy(spec, model, pf, 0, root, leaf, &value.v));
  }
  r.residual = r.root_value - r.sup;
  r.one_sided = true;
  return r;
}

std::vector<double> policy_values_backward(const ProblemSpec& spec, const LatticeModel& model,
                                           const PolicyField& policy, int leaf_step,
                                           const std::vector<double>& leaf_values) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int S = L.n_states();
  const int F = L.n_fuel();
  if (policy.decisions.size() != L.size() || leaf_values.size() != L.size())
    throw SpecError("policy_values_backward: size mismatch with the lattice");
  if (leaf_step < 0 || leaf_step > L.grid().n_steps()) throw std::out_of_range("policy_values_backward: leaf step");
  std::vector<double> W(L.size(), 0.0);
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < F; ++j) W[L.node(leaf_step, s, j)] = leaf_values[L.node(leaf_step, s, j)];

  std::vector<char> state;  // 0 open, 1 on stack, 2 done
  for (int k = leaf_step - 1; k >= 0; --k) {
    const double t = L.grid().time(k);
    const double tn = L.grid().time(k + 1);
    state.assign(L.slice_size(), 0);
    std::function<double(int, int)> node_value = [&](int s, int j) -> double {
      const std::size_t q = slice_index(L, s, j);
      const std::size_t id = L.node(k, s, j);
      if (state[q] == 2) return W[id];
      if (state[q] == 1) throw ConvergenceError("exertion cycle in lattice policy at step " + std::to_string(k));
      state[q] = 1;
      const Vector x = L.point(s);
      double w;
      if (!L.interior(s, j)) {
        w = gain(spec, spec.exit_gain, t, x, L.fuel_at(j));
      } else {
        const NodeDecision& d = policy.decisions[id];
        if (d.kind == Kind::Stop) {
          w = gain(spec, spec.stop_gain, t, x, L.fuel_at(j));
        } else if (d.kind == Kind::Exert) {
          if (!exert_allowed(spec, L, j, d.index, d.sign)) throw SpecError("policy exerts where it is not allowed");
          const Offset off = unit(L.dim(), d.index, d.sign);
          const int jn = L.finite_fuel() ? j + 1 : j;
          const auto target = L.shift(s, off);
          w = (target ? node_value(*target, jn) : gain(spec, spec.exit_gain, t, moved_point(L, s, off), L.fuel_at(jn))) -
              push_cost(spec, t, x, d.index, d.sign, L.axes()[static_cast<std::size_t>(d.index)].h);
        } else if (d.kind == Kind::Continue) {
          const double z = L.fuel_at(j);
          double ev = 0.0;
          for (const auto& e : tm.at(k, s, d.index)) {
            const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
            const auto target = L.shift(s, off);
            ev += e.prob *
                  (target ? W[L.node(k + 1, *target, j)] : gain(spec, spec.exit_gain, tn, moved_point(L, s, off), z));
          }
          w = spec.running_gain(t, x, spec.payoff_fuel(z), spec.action_set[static_cast<std::size_t>(d.index)]) *
                  L.grid().dt() +
              ev;
        } else {
          throw SpecError("policy has no decision at an interior node");
        }
      }
      W[id] = w;
      state[q] = 2;
      return w;
    };
    for (int j = F - 1; j >= 0; --j)
      for (int s = 0; s < S; ++s) node_value(s, j);
  }
  return W;
}

namespace {

// One-step defect of a policy against v plus, per slice, an order in which
// exertion targets come before the nodes pushing into them.
struct PolicyDefects {
  std::vector<double> d;                // local value under the policy minus v, per node
  std::vector<std::vector<int>> order;  // per step, slice indices
};

PolicyDefects policy_defects(const ProblemSpec& spec, const LatticeModel& model, const PolicyField& policy,
                             const std::vector<double>& v) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int n = L.grid().n_steps();
  const int S = L.n_states();
  const int F = L.n_fuel();
  PolicyDefects out;
  out.d.assign(L.size(), 0.0);
  out.order.resize(static_cast<std::size_t>(n));
  std::vector<char> state;
  for (int k = 0; k < n; ++k) {
    const double t = L.grid().time(k);
    const double tn = L.grid().time(k + 1);
    auto& order = out.order[static_cast<std::size_t>(k)];
    order.reserve(L.slice_size());
    state.assign(L.slice_size(), 0);
    for (int j0 = F - 1; j0 >= 0; --j0)
      for (int s0 = 0; s0 < S; ++s0) {
        // follow the exertion chain, then emit it back to front
        std::vector<std::pair<int, int>> chain;
        int s = s0, j = j0;
        while (true) {
          const std::size_t q = slice_index(L, s, j);
          if (state[q] == 2) break;
          if (state[q] == 1) throw ConvergenceError("exertion cycle in lattice policy at step " + std::to_string(k));
          state[q] = 1;
          chain.emplace_back(s, j);
          if (!L.interior(s, j)) break;
          const NodeDecision& dec = policy.decisions[L.node(k, s, j)];
          if (dec.kind != Kind::Exert) break;
          const auto target = L.shift(s, unit(L.dim(), dec.index, dec.sign));
          if (!target) break;
          s = *target;
          j = L.finite_fuel() ? j + 1 : j;
        }
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
          state[slice_index(L, it->first, it->second)] = 2;
          order.push_back(static_cast<int>(slice_index(L, it->first, it->second)));
        }
      }
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < F; ++j) {
        const std::size_t id = L.node(k, s, j);
        const Vector x = L.point(s);
        const double z = L.fuel_at(j);
        double w;
        if (!L.interior(s, j)) {
          w = gain(spec, spec.exit_gain, t, x, z);
        } else {
          const NodeDecision& dec = policy.decisions[id];
          if (dec.kind == Kind::Stop) {
            w = gain(spec, spec.stop_gain, t, x, z);
          } else if (dec.kind == Kind::Exert) {
            if (!exert_allowed(spec, L, j, dec.index, dec.sign)) throw SpecError("policy exerts where it is not allowed");
            const Offset off = unit(L.dim(), dec.index, dec.sign);
            const int jn = L.finite_fuel() ? j + 1 : j;
            const auto target = L.shift(s, off);
            w = (target ? v[L.node(k, *target, jn)] : gain(spec, spec.exit_gain, t, moved_point(L, s, off), L.fuel_at(jn))) -
                push_cost(spec, t, x, dec.index, dec.sign, L.axes()[static_cast<std::size_t>(dec.index)].h);
          } else if (dec.kind == Kind::Continue) {
            double ev = 0.0;
            for (const auto& e : tm.at(k, s, dec.index)) {
              const Offset& off = tm.directions[static_cast<std::size_t>(e.direction)];
              const auto target = L.shift(s, off);
              ev += e.prob * (target ? v[L.node(k + 1, *target, j)] : gain(spec, spec.exit_gain, tn, moved_point(L, s, off), z));
            }
            w = spec.running_gain(t, x, spec.payoff_fuel(z), spec.action_set[static_cast<std::size_t>(dec.index)]) *
                    L.grid().dt() +
                ev;
          } else {
            throw SpecError("policy has no decision at an interior node");
          }
        }
        out.d[id] = w - v[id];
      }
  }
  return out;
}

}  // namespace

SupermartingaleReport check_supermartingale_exact(const ProblemSpec& spec, const LatticeModel& model,
                                                  const ValueField& value, const std::vector<PolicyField>& policies,
                                                  const PolicyField* optimal) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int n = L.grid().n_steps();
  const int F = L.n_fuel();
  if (value.v.size() != L.size()) throw SpecError("check_supermartingale_exact: unsolved or mismatched value field");
  SupermartingaleReport rep;
  // E[M_later | node at u] - M_u obeys the policy recursion driven by the
  // one-step defects, with zero at `later`; summing defects keeps rounding
  // relative to the defects rather than to v.
  std::vector<double> D(L.size(), 0.0);
  auto sweep = [&](const PolicyField& pf, bool equality) {
    const PolicyDefects pd = policy_defects(spec, model, pf, value.v);
    for (int later = 1; later <= n; ++later) {
      for (int q = 0; q < static_cast<int>(L.slice_size()); ++q) D[L.node(later, q / F, q % F)] = 0.0;
      for (int k = later - 1; k >= 0; --k)
        for (int q : pd.order[static_cast<std::size_t>(k)]) {
          const int s = q / F;
          const int j = q % F;
          const std::size_t id = L.node(k, s, j);
          double acc = pd.d[id];
          if (L.interior(s, j)) {
            const NodeDecision& dec = pf.decisions[id];
            if (dec.kind == Kind::Exert) {
              if (const auto target = L.shift(s, unit(L.dim(), dec.index, dec.sign)))
                acc += D[L.node(k, *target, L.finite_fuel() ? j + 1 : j)];
            } else if (dec.kind == Kind::Continue) {
              for (const auto& e : tm.at(k, s, dec.index))
                if (const auto target = L.shift(s, tm.directions[static_cast<std::size_t>(e.direction)]))
                  acc += e.prob * D[L.node(k + 1, *target, j)];
            }
          }
          D[id] = acc;
          if (!L.interior(s, j)) continue;
          rep.max_violation = std::max(rep.max_violation, acc);
          rep.min_strict_drop = std::min(rep.min_strict_drop, acc);
          if (equality) rep.max_martingale_gap = std::max(rep.max_martingale_gap, std::abs(acc));
          ++rep.checks;
        }
    }
  };
  for (const auto& pf : policies) sweep(pf, false);
  if (optimal) sweep(*optimal, true);
  return rep;
}

// ---------------------------------------------------------------------------

void PartitionScheme::validate() const {
  for (std::size_t a = 0; a < bins.size(); ++a) {
    const auto& A = bins[a];
    const auto d = A.lo.size();
    if (A.hi.size() != d || A.rep_x.size() != d) throw SpecError("partition bin dimensions disagree");
    if (A.zhi < A.zlo) throw SpecError("partition bin has zhi < zlo");
    if ((A.rep_x.array() < A.lo.array()).any() || (A.rep_x.array() >= A.hi.array()).any() || A.rep_z < A.zlo ||
        A.rep_z > A.zhi)
      throw SpecError("partition representative lies outside its bin");
    if (A.rep_z < A.zhi) throw SpecError("partition representative fuel must dominate the bin");
    for (std::size_t b = a + 1; b < bins.size(); ++b) {
      const auto& B = bins[b];
      if (B.lo.size() != d) throw SpecError("partition bin dimensions disagree");
      const bool x_overlap = ((A.lo.array() < B.hi.array()) && (B.lo.array() < A.hi.array())).all();
      const bool z_overlap = A.zlo <= B.zhi && B.zlo <= A.zhi;
      if (x_overlap && z_overlap) throw SpecError("partition bins overlap");
    }
  }
}

std::optional<std::size_t> PartitionScheme::locate(const Vector& x, double z) const {
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto& B = bins[b];
    if ((x.array() >= B.lo.array()).all() && (x.array() < B.hi.array()).all() && z >= B.zlo && z <= B.zhi) return b;
  }
  return std::nullopt;
}

double PartitionScheme::diameter() const {
  double dmax = 0.0;
  for (const auto& B : bins) dmax = std::max(dmax, std::hypot((B.hi - B.lo).norm(), B.zhi - B.zlo));
  return dmax;
}

PartitionScheme PartitionScheme::regular(const Vector& lo, const Vector& hi, const std::vector<int>& cells, double zlo,
                                         double zhi, int z_bins) {
  const int d = static_cast<int>(lo.size());
  if (static_cast<int>(cells.size()) != d || z_bins < 1) throw SpecError("regular partition: bad cell counts");
  PartitionScheme scheme;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  const double zw = (zhi - zlo) / z_bins;
  for (;;) {
    for (int q = 0; q < z_bins; ++q) {
      PartitionBin b;
      b.lo.resize(d);
      b.hi.resize(d);
      for (int i = 0; i < d; ++i) {
        const double w = (hi(i) - lo(i)) / cells[static_cast<std::size_t>(i)];
        b.lo(i) = lo(i) + w * idx[static_cast<std::size_t>(i)];
        b.hi(i) = idx[static_cast<std::size_t>(i)] + 1 == cells[static_cast<std::size_t>(i)] ? hi(i) : b.lo(i) + w;
      }
      // Closed fuel ranges: neighbouring bins split at a point shared by neither.
      b.zlo = q == 0 ? zlo : std::nextafter(zlo + zw * q, std::numeric_limits<double>::infinity());
      b.zhi = q + 1 == z_bins ? zhi : zlo + zw * (q + 1);
      b.rep_x = 0.5 * (b.lo + b.hi);
      b.rep_z = b.zhi;
      scheme.bins.push_back(std::move(b));
    }
    int i = d - 1;
    for (; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < cells[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
    if (i < 0) break;
  }
  return scheme;
}

NoiseFunctionalPolicy concatenate_policies(NoiseFunctionalPolicy base, int u_step, PartitionScheme scheme,
                                           std::vector<NoiseFunctionalPolicy> bin_policies) {
  scheme.validate();
  if (bin_policies.size() != scheme.bins.size()) throw SpecError("concatenate_policies: one policy per bin");
  if (u_step < 0) throw SpecError("concatenate_policies: negative pasting step");
  return {[base = std::move(base), u_step, scheme = std::move(scheme),
           bins = std::move(bin_policies)](const PolicyInput& in) -> Decision {
    if (in.step < u_step) return base.decide(in);
    if (!in.has_state()) throw SpecError("pasted policy needs the state at the pasting step");
    const auto b = scheme.locate(in.states.col(u_step), in.fuel[static_cast<std::size_t>(u_step)]);
    if (!b) return Decision::stop_now();
    const int age = in.step - u_step;
    const PolicyInput sub{age, in.noise.rightCols(age), in.states.rightCols(age + 1),
                          in.fuel.subspan(static_cast<std::size_t>(u_step))};
    return bins[*b].decide(sub);
  }};
}

PolicyField near_optimal_policy(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value, int m,
                                std::uint64_t seed) {
  if (m < 1) throw SpecError("near_optimal_policy: m must be >= 1");
  const Lattice& L = model.lattice;
  const int n = L.grid().n_steps();
  const int chain = L.finite_fuel() ? L.n_fuel() - 1 : L.n_states() - 1;
  const double slack = 1.0 / (static_cast<double>(m) * n * (1 + chain));
  std::mt19937_64 rng(seed);
  PolicyField pf;
  pf.decisions.assign(L.size(), NodeDecision::exit());
  std::vector<NodeDecision> good;
  for (int k = 0; k < n; ++k)
    for (int s = 0; s < L.n_states(); ++s)
      for (int j = 0; j < L.n_fuel(); ++j) {
        if (!L.interior(s, j)) continue;
        const NodeBranches b = node_branches(spec, model, value.v, k, s, j);
        const double best = b.best();
        good.clear();
        if (b.stop >= best - slack) good.push_back(NodeDecision::stop());
        for (const auto& [d, val] : b.others)
          if (val >= best - slack && !(d.kind == Kind::Exert && !L.finite_fuel())) good.push_back(d);
        if (good.empty()) {
          // infinite fuel: keep the best exertion only, so chains follow v upward
          for (const auto& [d, val] : b.others)
            if (val >= best) good.push_back(d);
        }
        std::uniform_int_distribution<std::size_t> pick(0, good.size() - 1);
        pf.decisions[L.node(k, s, j)] = good[pick(rng)];
      }
  return pf;
}

namespace {

struct ChainOutcome {
  double payoff = 0.0;
  double rhs = 0.0;
};

// One chain path from (0, root): `base` before u, the bin's policy from u on.
ChainOutcome simulate_pasted_chain(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value,
                                   const PolicyField& base, NodeRef root, int u,
                                   const std::vector<int>& bin_of_node, const std::vector<PolicyField>& bin_policies,
                                   std::mt19937_64& rng) {
  const Lattice& L = model.lattice;
  const TransitionModel& tm = model.transitions;
  const int n = L.grid().n_steps();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int s = root.s, j = root.j;
  double acc = 0.0;
  const PolicyField* pf = &base;
  std::optional<double> rhs;
  for (int k = 0;; ++k) {
    const double t = L.grid().time(k);
    if (k == u && !rhs) {
      rhs = acc + value.v[L.node(k, s, j)];
      if (L.interior(s, j)) {
        const int b = bin_of_node[slice_index(L, s, j)];
        if (b < 0) return {acc + gain(spec, spec.stop_gain, t, L.point(s), L.fuel_at(j)), *rhs};
        pf = &bin_policies[static_cast<std::size_t>(b)];
      }
    }
    auto finish = [&](double terminal) {
      const double total = acc + terminal;
      return ChainOutcome{total, rhs ? *rhs : total};
    };
    if (k == n || !L.interior(s, j)) return finish(gain(spec, spec.exit_gain, t, L.point(s), L.fuel_at(j)));
    int hops = 0;
    for (;;) {
      const NodeDecision& d = pf->decisions[L.node(k, s, j)];
      if (d.kind != Kind::Exert) break;
      if (++hops > static_cast<int>(L.slice_size()) + 1) throw ConvergenceError("exertion cycle in chain policy");
      const double h = L.axes()[static_cast<std::size_t>(d.index)].h;
      acc -= push_cost(spec, t, L.point(s), d.index, d.sign, h);
      const Offset off = unit(L.dim(), d.index, d.sign);
      const int jn = L.finite_fuel() ? j + 1 : j;
      const auto target = L.shift(s, off);
      if (!target) return finish(gain(spec, spec.exit_gain, t, moved_point(L, s, off), L.fuel_at(jn)));
      s = *target;
      j = jn;
      if (!L.interior(s, j)) return finish(gain(spec, spec.exit_gain, t, L.point(s), L.fuel_at(j)));
    }
    const NodeDecision& d = pf->decisions[L.node(k, s, j)];
    const Vector x = L.point(s);
    if (d.kind == Kind::Stop) return finish(gain(spec, spec.stop_gain, t, x, L.fuel_at(j)));
    acc += spec.running_gain(t, x, spec.payoff_fuel(L.fuel_at(j)), spec.action_set[static_cast<std::size_t>(d.index)]) *
           L.grid().dt();
    const auto row = tm.at(k, s, d.index);
    double r = unif(rng);
    std::size_t pick = 0;
    for (; pick + 1 < row.size(); ++pick) {
      if (r < row[pick].prob) break;
      r -= row[pick].prob;
    }
    const Offset& off = tm.directions[static_cast<std::size_t>(row[pick].direction)];
    const auto target = L.shift(s, off);
    if (!target) {
      const double tn = L.grid().time(k + 1);
      return finish(gain(spec, spec.exit_gain, tn, moved_point(L, s, off), L.fuel_at(j)));
    }
    s = *target;
  }
}

}  // namespace

ConcatenationResult check_concatenation_bound(const ProblemSpec& spec, const LatticeModel& model,
                                              const ValueField& value, const PolicyField& base, NodeRef root,
                                              int u_step, const std::vector<std::vector<NodeRef>>& bins,
                                              const std::vector<NodeRef>& representatives, int m,
                                              std::size_t n_paths, std::uint64_t seed) {
  const Lattice& L = model.lattice;
  if (bins.size() != representatives.size()) throw SpecError("one representative per bin");
  if (u_step < 0 || u_step > L.grid().n_steps()) throw SpecError("pasting step out of range");
  std::vector<int> bin_of_node(L.slice_size(), -1);
  for (std::size_t b = 0; b < bins.size(); ++b)
    for (const auto& nd : bins[b]) {
      int& slot = bin_of_node[slice_index(L, nd.s, nd.j)];
      if (slot >= 0) throw SpecError("partition bins overlap");
      slot = static_cast<int>(b);
    }

  ConcatenationResult res;
  res.m = m;
  std::vector<PolicyField> bin_policies;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bin_policies.push_back(near_optimal_policy(spec, model, value, m, seed + 7919 * (b + 1)));
    const NodeRef rep = representatives[b];
    const double j_rep = evaluate_lattice_policy(spec, model, bin_policies.back(), u_step, rep);
    const double v_rep = value.v[L.node(u_step, rep.s, rep.j)];
    for (const auto& nd : bins[b]) {
      const double j_node = evaluate_lattice_policy(spec, model, bin_policies.back(), u_step, nd);
      res.epsilon = std::max(res.epsilon, std::abs(j_node - j_rep));
      res.epsilon = std::max(res.epsilon, std::abs(value.v[L.node(u_step, nd.s, nd.j)] - v_rep));
    }
  }

  std::mt19937_64 rng(seed);
  MeanAccumulator pasted, rhs, diff;
  for (std::size_t p = 0; p < n_paths; ++p) {
    const ChainOutcome o = simulate_pasted_chain(spec, model, value, base, root, u_step, bin_of_node, bin_policies, rng);
    pasted.add(o.payoff);
    rhs.add(o.rhs);
    diff.add(o.payoff - o.rhs);
  }
  const Estimate d = diff.estimate();
  res.pasted = pasted.mean();
  res.rhs = rhs.mean();
  res.diff_se = d.std_error;
  res.margin = d.mean + 1.0 / m + 2.0 * res.epsilon + 3.0 * d.std_error;
  res.pass = res.margin >= 0.0;
  return res;
}

bool VerificationSuiteReport::passed() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

}  // namespace fuelgrid
