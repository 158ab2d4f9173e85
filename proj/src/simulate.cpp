#include "fuelgrid/simulate.hpp"

#include "fuelgrid/detail/parallel.hpp"
#include "fuelgrid/io.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

namespace fuelgrid {

namespace {

constexpr char kBundleMagic[4] = {'F', 'G', 'P', 'B'};
constexpr std::uint32_t kBundleVersion = 1;
constexpr std::uint32_t kNoFlip = 0xFFFFFFFFu;

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
  return std::mt19937_64(seq);
}

// Fills W at the interior indices of (a, b) given W(a), W(b).
void bridge_fill(Eigen::Ref<Eigen::RowVectorXd> w, int a, int b, double dt, std::mt19937_64& rng,
                 std::normal_distribution<double>& normal) {
  if (b - a < 2) return;
  const int m = a + (b - a) / 2;
  const double la = m - a;
  const double lb = b - m;
  const double mean = w(a) + la / (b - a) * (w(b) - w(a));
  const double sd = std::sqrt(la * lb / (b - a) * dt);
  w(m) = mean + sd * normal(rng);
  bridge_fill(w, a, m, dt, rng, normal);
  bridge_fill(w, m, b, dt, rng, normal);
}

}  // namespace

Matrix generate_noise(int noise_dim, const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                      const SimulationOptions& options) {
  const int n = grid.n_steps();
  const double dt = grid.dt();
  const std::uint64_t stream = options.antithetic ? path_index / 2 : path_index;
  const bool negate = options.antithetic && (path_index % 2 == 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix dw(noise_dim, n);
  if (options.construction == NoiseConstruction::Direct) {
    auto rng = substream(seed, stream, 0x0D1);
    const double s = std::sqrt(dt);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < noise_dim; ++i) dw(i, k) = s * normal(rng);
  } else {
    auto rng = substream(seed, stream, 0xB1D);
    Eigen::RowVectorXd w(n + 1);
    for (int i = 0; i < noise_dim; ++i) {
      w.setZero();
      w(n) = std::sqrt(dt * n) * normal(rng);
      bridge_fill(w, 0, n, dt, rng, normal);
      for (int k = 0; k < n; ++k) dw(i, k) = w(k + 1) - w(k);
    }
  }
  if (negate) dw = -dw;
  return dw;
}

int exit_step(const ProblemSpec& spec, const Matrix& states, const std::vector<double>& fuel) {
  const int n = static_cast<int>(states.cols()) - 1;
  for (int k = 0; k < n; ++k)
    if (!spec.domain(states.col(k), spec.payoff_fuel(fuel[static_cast<std::size_t>(k)]))) return k;
  return n;
}

std::vector<int> exit_time(const PathBundle& bundle, const ProblemSpec& spec) {
  std::vector<int> out;
  out.reserve(bundle.n_paths());
  for (const auto& p : bundle.paths) out.push_back(exit_step(spec, p.states, p.fuel));
  return out;
}

PathRecord simulate_path(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                         const TimeGrid& grid, Matrix noise, TruncationMode truncation, std::size_t path_index) {
  try {
    ReplayResult r = replay_policy(policy, noise, grid, spec.dims.state, StateTrack{&spec, x0, z0, truncation});
    PathRecord rec{std::move(noise), std::move(r.states), std::move(r.fuel), std::move(r.actions),
                   std::move(r.control), r.eta, r.eta.tau_step(), 0};
    rec.rho_step = exit_step(spec, rec.states, rec.fuel);
    return rec;
  } catch (const NumericalError& e) {
    throw NumericalError("path " + std::to_string(path_index) + ": " + e.what());
  }
}

namespace {

void check_simulation_inputs(const ProblemSpec& spec, const Vector& x0, double z0, const TimeGrid& grid) {
  require_valid_structure(spec);
  if (std::abs(grid.t0() - spec.start_time) > 1e-12) throw SpecError("simulation grid must start at start_time");
  if (x0.size() != spec.dims.state) throw SpecError("x0 has wrong dimension");
  if (spec.finite_fuel() && !(z0 >= 0.0 && z0 <= spec.zbar())) throw SpecError("z0 outside [0, zbar]");
  if (!(z0 >= 0.0)) throw SpecError("z0 must be >= 0");
}

}  // namespace

PathBundle simulate_paths(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                          const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options) {
  check_simulation_inputs(spec, x0, z0, grid);
  PathBundle bundle{grid, seed, {}};
  std::vector<std::optional<PathRecord>> slots(n_paths);
  detail::parallel_for(n_paths, options.threads, [&](std::size_t i) {
    slots[i] = simulate_path(spec, policy, x0, z0, grid, generate_noise(spec.dims.noise, grid, seed, i, options),
                             options.truncation, i);
  });
  bundle.paths.reserve(n_paths);
  for (auto& s : slots) bundle.paths.push_back(std::move(*s));
  return bundle;
}

void for_each_path(const ProblemSpec& spec, const NoiseFunctionalPolicy& policy, const Vector& x0, double z0,
                   const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options,
                   const std::function<void(std::size_t, const PathRecord&)>& visit) {
  check_simulation_inputs(spec, x0, z0, grid);
  const std::size_t block = 1024;
  std::vector<std::optional<PathRecord>> slots;
  for (std::size_t start = 0; start < n_paths; start += block) {
    const std::size_t count = std::min(block, n_paths - start);
    slots.assign(count, std::nullopt);
    detail::parallel_for(count, options.threads, [&](std::size_t i) {
      const std::size_t idx = start + i;
      slots[i] = simulate_path(spec, policy, x0, z0, grid,
                               generate_noise(spec.dims.noise, grid, seed, idx, options), options.truncation, idx);
    });
    for (std::size_t i = 0; i < count; ++i) visit(start + i, *slots[i]);
  }
}

void write_paths_csv(std::ostream& os, const PathBundle& bundle) {
  if (bundle.paths.empty()) return;
  const int d = static_cast<int>(bundle.paths.front().states.rows());
  const int dn = static_cast<int>(bundle.paths.front().noise.rows());
  const int n = bundle.grid.n_steps();
  std::vector<std::string> header{"path", "step", "time"};
  for (int i = 0; i < d; ++i) header.push_back("x_" + std::to_string(i));
  header.push_back("z");
  header.push_back("action");
  for (int i = 0; i < d; ++i) header.push_back("inc_plus_" + std::to_string(i));
  for (int i = 0; i < d; ++i) header.push_back("inc_minus_" + std::to_string(i));
  for (int i = 0; i < dn; ++i) header.push_back("dw_" + std::to_string(i));
  header.push_back("eta");
  io::write_csv_row(os, header);
  std::vector<std::string> row;
  for (std::size_t p = 0; p < bundle.paths.size(); ++p) {
    const auto& r = bundle.paths[p];
    for (int k = 0; k <= n; ++k) {
      row.clear();
      row.push_back(std::to_string(p));
      row.push_back(std::to_string(k));
      row.push_back(io::format_number(bundle.grid.time(k)));
      for (int i = 0; i < d; ++i) row.push_back(io::format_number(r.states(i, k)));
      row.push_back(io::format_number(r.fuel[static_cast<std::size_t>(k)]));
      row.push_back(k < n ? std::to_string(r.actions[static_cast<std::size_t>(k)]) : "");
      for (int i = 0; i < d; ++i) row.push_back(k < n ? io::format_number(r.control.inc_plus(i, k)) : "");
      for (int i = 0; i < d; ++i) row.push_back(k < n ? io::format_number(r.control.inc_minus(i, k)) : "");
      for (int i = 0; i < dn; ++i) row.push_back(k < n ? io::format_number(r.noise(i, k)) : "");
      row.push_back(r.eta.at(k) ? "1" : "0");
      io::write_csv_row(os, row);
    }
  }
}

void write_path_summary_csv(std::ostream& os, const PathBundle& bundle) {
  if (bundle.paths.empty()) return;
  const int d = static_cast<int>(bundle.paths.front().states.rows());
  const int n = bundle.grid.n_steps();
  std::vector<std::string> header{"path", "tau_step", "rho_step", "tau", "rho"};
  for (int i = 0; i < d; ++i) header.push_back("x_T_" + std::to_string(i));
  header.push_back("z_T");
  io::write_csv_row(os, header);
  for (std::size_t p = 0; p < bundle.paths.size(); ++p) {
    const auto& r = bundle.paths[p];
    std::vector<std::string> row{std::to_string(p), std::to_string(r.tau_step), std::to_string(r.rho_step),
                                 io::format_number(bundle.grid.time(r.tau_step)),
                                 io::format_number(bundle.grid.time(r.rho_step))};
    for (int i = 0; i < d; ++i) row.push_back(io::format_number(r.states(i, n)));
    row.push_back(io::format_number(r.fuel.back()));
    io::write_csv_row(os, row);
  }
}

void write_bundle_binary(std::ostream& os, const PathBundle& bundle) {
  const int n = bundle.grid.n_steps();
  const std::uint32_t d = bundle.paths.empty() ? 0 : static_cast<std::uint32_t>(bundle.paths.front().states.rows());
  const std::uint32_t dn = bundle.paths.empty() ? 0 : static_cast<std::uint32_t>(bundle.paths.front().noise.rows());
  os.write(kBundleMagic, 4);
  io::write_u32(os, kBundleVersion);
  io::write_u32(os, d);
  io::write_u32(os, dn);
  io::write_u32(os, static_cast<std::uint32_t>(n));
  io::write_u64(os, bundle.n_paths());
  io::write_u64(os, bundle.seed);
  io::write_f64(os, bundle.grid.t0());
  io::write_f64(os, bundle.grid.tN());
  for (const auto& r : bundle.paths) {
    io::write_u32(os, static_cast<std::uint32_t>(r.tau_step));
    io::write_u32(os, static_cast<std::uint32_t>(r.rho_step));
    io::write_u32(os, r.eta.flip_index ? static_cast<std::uint32_t>(*r.eta.flip_index) : kNoFlip);
    for (Eigen::Index k = 0; k < r.noise.size(); ++k) io::write_f64(os, r.noise.data()[k]);
    for (Eigen::Index k = 0; k < r.states.size(); ++k) io::write_f64(os, r.states.data()[k]);
    for (double z : r.fuel) io::write_f64(os, z);
    for (int a : r.actions) io::write_u32(os, static_cast<std::uint32_t>(a));
    for (Eigen::Index k = 0; k < r.control.inc_plus.size(); ++k) io::write_f64(os, r.control.inc_plus.data()[k]);
    for (Eigen::Index k = 0; k < r.control.inc_minus.size(); ++k) io::write_f64(os, r.control.inc_minus.data()[k]);
  }
}

PathBundle read_bundle_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kBundleMagic, 4))
    throw SpecError("not a path bundle dump");
  if (io::read_u32(is) != kBundleVersion) throw SpecError("unsupported path bundle version");
  const int d = static_cast<int>(io::read_u32(is));
  const int dn = static_cast<int>(io::read_u32(is));
  const int n = static_cast<int>(io::read_u32(is));
  const std::uint64_t count = io::read_u64(is);
  const std::uint64_t seed = io::read_u64(is);
  const double t0 = io::read_f64(is);
  const double tN = io::read_f64(is);
  PathBundle bundle{TimeGrid(t0, tN, n), seed, {}};
  bundle.paths.reserve(count);
  for (std::uint64_t p = 0; p < count; ++p) {
    PathRecord r{Matrix(dn, n), Matrix(d, n + 1), std::vector<double>(static_cast<std::size_t>(n) + 1),
                 std::vector<int>(static_cast<std::size_t>(n)), BVControlPath::zero(bundle.grid, d),
                 EtaPath{bundle.grid, std::nullopt}, 0, 0};
    r.tau_step = static_cast<int>(io::read_u32(is));
    r.rho_step = static_cast<int>(io::read_u32(is));
    const std::uint32_t flip = io::read_u32(is);
    if (flip != kNoFlip) r.eta.flip_index = static_cast<int>(flip);
    for (Eigen::Index k = 0; k < r.noise.size(); ++k) r.noise.data()[k] = io::read_f64(is);
    for (Eigen::Index k = 0; k < r.states.size(); ++k) r.states.data()[k] = io::read_f64(is);
    for (double& z : r.fuel) z = io::read_f64(is);
    for (int& a : r.actions) a = static_cast<int>(io::read_u32(is));
    for (Eigen::Index k = 0; k < r.control.inc_plus.size(); ++k) r.control.inc_plus.data()[k] = io::read_f64(is);
    for (Eigen::Index k = 0; k < r.control.inc_minus.size(); ++k) r.control.inc_minus.data()[k] = io::read_f64(is);
    bundle.paths.push_back(std::move(r));
  }
  return bundle;
}

}  // namespace fuelgrid
