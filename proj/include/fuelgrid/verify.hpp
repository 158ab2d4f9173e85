#pragma once

#include "fuelgrid/payoff.hpp"
#include "fuelgrid/simulate.hpp"
#include "fuelgrid/solver.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace fuelgrid {

/// Lattice node within a time slice.
struct NodeRef {
  int s = 0;
  int j = 0;
};

/// Node nearest to (x0, z0).
NodeRef root_node(const LatticeModel& model, const Vector& x0, double z0);

// ---------------------------------------------------------------------------
// Exact evaluation on the chain

/// Where an exact evaluation is cut off and the value field takes over.
/// A hitting rule is checked when a slice is entered (before any decision).
struct LeafAtStep {
  int step;
};
struct LeafOnHitting {
  std::vector<char> region;  // per (s, j): s * n_fuel + j
};
using LeafRule = std::variant<std::monostate, LeafAtStep, LeafOnHitting>;

/// Expected payoff of a node -> decision map started at (start_step, node),
/// by forward propagation of probability mass. With a leaf rule, surviving
/// mass collects `leaf_values` (indexed like the lattice) at the leaf.
/// Throws ConvergenceError on an exertion cycle.
double evaluate_lattice_policy(const ProblemSpec& spec, const LatticeModel& model, const PolicyField& policy,
                               int start_step, NodeRef start, const LeafRule& leaf = {},
                               const std::vector<double>* leaf_values = nullptr);

/// Expected payoff of a policy from every node at steps <= leaf_step, with
/// leaf_values collected at leaf_step (pass n_steps and the terminal payoff
/// for a plain evaluation). Entries past leaf_step are left at zero.
/// Same conventions as evaluate_lattice_policy, computed backward.
std::vector<double> policy_values_backward(const ProblemSpec& spec, const LatticeModel& model,
                                           const PolicyField& policy, int leaf_step,
                                           const std::vector<double>& leaf_values);

struct RandomPolicyOptions {
  double stop_weight = 1.0;
  double exert_weight = 1.0;
};

/// Uniformly random admissible decisions per interior node. In infinite-fuel
/// mode each coordinate gets one exertion sign for the whole policy, so
/// exertion chains cannot cycle.
PolicyField random_lattice_policy(const ProblemSpec& spec, const LatticeModel& model, std::mt19937_64& rng,
                                  const RandomPolicyOptions& options = {});

// ---------------------------------------------------------------------------
// Oracles

/// Raised when an exhaustive search would exceed its node budget.
class SearchLimitError : public SpecError {
 public:
  using SpecError::SpecError;
};

struct BruteForceOptions {
  std::uint64_t max_tree_nodes = 50'000'000;
};

/// Supremum over all decision histories (stop, action, exertions) of the
/// exact expected payoff from (0, root), by exhaustive expectimax over the
/// history tree. Exertion chains are bounded by the fuel in finite mode and
/// by simple paths in infinite mode. Shares no code with the solver.
double brute_force_value(const ProblemSpec& spec, const LatticeModel& model, NodeRef root,
                         const BruteForceOptions& options = {});

/// Maximum of evaluate_lattice_policy over every node -> decision map.
/// Throws SpecError when more than `max_policies` maps exist.
double enumerate_feedback_value(const ProblemSpec& spec, const LatticeModel& model, NodeRef root,
                                std::uint64_t max_policies = 10'000'000);

/// max over interior nodes of |v - max(stop, continue, exert)|, recomputed
/// from the problem and the stencil.
struct ResidualReport {
  double max_residual = 0.0;
  std::size_t nodes_checked = 0;
};
ResidualReport one_step_residual(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value);

// ---------------------------------------------------------------------------
// Dynamic programming at deterministic and hitting times

enum class DppMode { Exact, Sampled };

struct DppOptions {
  DppMode mode = DppMode::Exact;
  std::size_t samples = 200;  // random feedback policies in sampled mode
  std::uint64_t seed = 1;
  BruteForceOptions tree;
};

struct DppResult {
  double root_value = 0.0;
  double sup = 0.0;
  double residual = 0.0;  // |v(root) - sup| exact; v(root) - sup when sampled
  bool one_sided = false;
};

/// Supremum of (accrual up to the leaf + payoffs collected before it + v at
/// the leaf) compared with v(root). Leaf = deterministic step or hitting rule.
DppResult check_dpp(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value, NodeRef root,
                    const LeafRule& leaf, const DppOptions& options = {});

// ---------------------------------------------------------------------------
// Supermartingale property

struct SupermartingaleReport {
  double max_violation = 0.0;        // max of E[M_s | node at u] - M_u (should be <= 0)
  double max_martingale_gap = 0.0;   // max |E[M_s | u] - M_u| under the optimal policy
  double min_strict_drop = 0.0;      // most negative E[M_s | u] - M_u seen
  std::size_t checks = 0;
};

/// For every policy, every interior node at u and every s >= u, compares the
/// exact conditional expectation of M_s with M_u. `optimal` (if given) is
/// also checked for equality.
SupermartingaleReport check_supermartingale_exact(const ProblemSpec& spec, const LatticeModel& model,
                                                  const ValueField& value, const std::vector<PolicyField>& policies,
                                                  const PolicyField* optimal = nullptr);

struct MonteCarloMartingaleReport {
  double worst_z = 0.0;  // max over checked u < s of (mean(M_s - M_u) - allowance) / SE
  double max_abs_z = 0.0;
  bool supermartingale = true;
  bool martingale = true;
};

/// E[M_s] <= E[M_u] + z SE + allowance for u <= s on a simulated bundle's
/// trace; with `expect_martingale`, also |E[M_s - M_u]| within the same
/// slack. `allowance` budgets the weak bias of the time stepping against the
/// lattice value; `from_start_only` restricts u to the first step.
MonteCarloMartingaleReport check_supermartingale_mc(const MTrace& trace, bool expect_martingale,
                                                    double z_level = 3.0, double allowance = 0.0,
                                                    bool from_start_only = false);

// ---------------------------------------------------------------------------
// Pasting policies

struct PartitionBin {
  Vector lo;  // x in [lo, hi)
  Vector hi;
  double zlo = 0.0;  // z in [zlo, zhi]
  double zhi = 0.0;
  Vector rep_x;
  double rep_z = 0.0;  // representative fuel dominates every fuel in the bin
};

struct PartitionScheme {
  std::vector<PartitionBin> bins;

  /// Throws SpecError on overlapping bins or representatives outside their bin.
  void validate() const;
  std::optional<std::size_t> locate(const Vector& x, double z) const;
  double diameter() const;
  /// Regular grid of bins over a box; fuel range split into z_bins pieces.
  static PartitionScheme regular(const Vector& lo, const Vector& hi, const std::vector<int>& cells, double zlo,
                                 double zhi, int z_bins);
};

/// Follow `base` before u_step; at u_step locate (X_u, Z_u) in the scheme and
/// follow that bin's policy, restarted at u_step, from then on (including
/// the decision at u_step). Outside every bin the pasted policy stops at u_step.
NoiseFunctionalPolicy concatenate_policies(NoiseFunctionalPolicy base, int u_step, PartitionScheme scheme,
                                           std::vector<NoiseFunctionalPolicy> bin_policies);

/// A lattice policy whose value from `start` is within 1/m of v there: at
/// every node it takes a pseudo-random branch among those within
/// 1/(m * (n_steps * (1 + longest exertion chain))) of the best.
PolicyField near_optimal_policy(const ProblemSpec& spec, const LatticeModel& model, const ValueField& value, int m,
                                std::uint64_t seed);

struct ConcatenationResult {
  int m = 0;
  double epsilon = 0.0;  // bin oscillation of v and of the bin policies' values
  double pasted = 0.0;   // Monte Carlo mean payoff of the pasted chain policy
  double rhs = 0.0;      // Monte Carlo mean of accrual to u + v(u, .) on survival + early payoffs
  double diff_se = 0.0;  // SE of the paired difference
  double margin = 0.0;   // mean(pasted - rhs) + 1/m + 2 eps + 3 SE (>= 0 passes)
  bool pass = false;
};

/// Lower bound of the pasting argument on the lattice chain: base policy up
/// to u_step, then per-bin 1/m-optimal policies chosen for the bin
/// representative. Bins partition the lattice nodes at u_step.
ConcatenationResult check_concatenation_bound(const ProblemSpec& spec, const LatticeModel& model,
                                              const ValueField& value, const PolicyField& base, NodeRef root,
                                              int u_step, const std::vector<std::vector<NodeRef>>& bins,
                                              const std::vector<NodeRef>& representatives, int m,
                                              std::size_t n_paths, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Statistical checks

/// Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2| (ties handled).
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// c(alpha) sqrt((n + m) / (n m)) with c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

struct KsEntry {
  std::string coordinate;
  double statistic = 0.0;
  double critical = 0.0;
  bool pass = true;
};

struct InvarianceResult {
  Estimate first;
  Estimate second;
  double combined_se = 0.0;
  std::vector<KsEntry> ks;
  bool mean_pass = false;
  bool pass = false;
};

struct InvarianceOptions {
  NoiseConstruction second_construction = NoiseConstruction::BrownianBridge;
  double alpha = 0.01;
  int threads = 1;
};

/// J under two independent noise constructions, plus KS tests on tau, rho,
/// X_T (per coordinate) and Z_T.
InvarianceResult check_reference_invariance(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy,
                                            const Vector& x0, double z0, const TimeGrid& grid,
                                            std::size_t n_paths, std::uint64_t seed1, std::uint64_t seed2,
                                            const InvarianceOptions& options = {});

struct StartPair {
  Vector x1;
  double z1 = 0.0;
  Vector x2;
  double z2 = 0.0;
};

struct ContinuityEntry {
  std::size_t pair = 0;
  std::size_t policy = 0;
  double mean_difference = 0.0;  // J(x1, z1; xi) - J(x2, z2; [xi] truncated)
  double std_error = 0.0;
};

struct ContinuityReport {
  std::vector<ContinuityEntry> entries;
  double max_abs_difference = 0.0;
  double max_std_error = 0.0;
};

/// Finite fuel only. The problem is restarted at grid.t0(). Each policy is
/// replayed from (x1, z1); its treble is replayed open loop from (x2, z2)
/// on the same noise with strict truncation at the smaller budget.
ContinuityReport check_truncation_continuity(const ProblemSpec& spec, const TimeGrid& grid,
                                             const std::vector<StartPair>& pairs,
                                             const std::vector<NoiseFunctionalPolicy>& policies, double delta,
                                             std::size_t n_paths, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

struct SuiteEntry {
  std::string name;
  std::string instance;
  double statistic = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  double runtime_seconds = 0.0;
  std::string detail;
};

struct VerificationSuiteReport {
  std::vector<SuiteEntry> entries;
  bool passed() const;
};

/// Runtimes go to the metadata block only, so reports are reproducible.
void write_suite_json(std::ostream& os, const VerificationSuiteReport& report, const std::string& timestamp);
void write_suite_table(std::ostream& os, const VerificationSuiteReport& report);

}  // namespace fuelgrid
