#include "fuelgrid/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace fuelgrid {

double ProblemSpec::zbar() const {
  if (const auto* f = std::get_if<FiniteFuel>(&fuel)) return f->zbar;
  return std::numeric_limits<double>::infinity();
}

bool ProblemSpec::can_push(int coordinate, int sign) const {
  const auto& mask = sign > 0 ? allow_plus : allow_minus;
  if (mask.empty()) return true;
  return mask.at(static_cast<std::size_t>(coordinate));
}

void require_valid_structure(const ProblemSpec& spec) {
  if (!(spec.start_time >= 0.0) || !(spec.start_time < spec.horizon))
    throw SpecError("start_time must satisfy 0 <= start_time < horizon");
  if (spec.dims.state < 1 || spec.dims.noise < 1 || spec.dims.control < 1)
    throw SpecError("dimensions must be positive");
  if (!spec.drift || !spec.diffusion || !spec.running_gain || !spec.exit_gain || !spec.stop_gain ||
      !spec.cost_plus || !spec.cost_minus || !spec.domain)
    throw SpecError("every coefficient function must be set");
  if (spec.action_set.empty()) throw SpecError("action_set must be nonempty");
  for (const auto& a : spec.action_set)
    if (a.size() != spec.dims.control) throw SpecError("action dimension does not match dims.control");
  if (const auto* f = std::get_if<FiniteFuel>(&spec.fuel)) {
    if (!(f->zbar >= 0.0)) throw SpecError("finite fuel requires zbar >= 0");
  } else if (!(std::get<InfiniteFuel>(spec.fuel).p > 0.0)) {
    throw SpecError("infinite fuel requires p > 0");
  }
  if (!(spec.payoff_floor >= 0.0)) throw SpecError("payoff_floor must be >= 0");
  const auto d = static_cast<std::size_t>(spec.dims.state);
  if (!spec.allow_plus.empty() && spec.allow_plus.size() != d)
    throw SpecError("allow_plus must have one entry per state coordinate");
  if (!spec.allow_minus.empty() && spec.allow_minus.size() != d)
    throw SpecError("allow_minus must have one entry per state coordinate");
  if (const auto* s = std::get_if<SegmentIntegral>(&spec.cost_convention)) {
    if (s->quadrature_steps < 1) throw SpecError("segment integral needs at least one quadrature panel");
    if (!spec.costs_uniform)
      throw SpecError("segment-integral cost convention requires coordinate-uniform costs");
  }
}

const ValidationCheck& ValidationReport::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range("no validation check named " + name);
}

bool ValidationReport::passed() const {
  return std::none_of(checks.begin(), checks.end(),
                      [](const ValidationCheck& c) { return c.status == CheckStatus::Fail; });
}

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

double radical_inverse(std::uint64_t index, int base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
    index /= static_cast<std::uint64_t>(base);
    f /= base;
  }
  return result;
}

struct SamplePoint {
  double t;
  Vector x;
  double z;
};

std::vector<SamplePoint> sample_points(const ProblemSpec& spec, std::size_t count, std::uint64_t seed,
                                       const Vector& lo, const Vector& hi) {
  const int d = spec.dims.state;
  const Matrix u = halton_points(d + 2, count, seed);
  const double zmax = spec.finite_fuel() ? spec.zbar() : 0.0;
  std::vector<SamplePoint> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    SamplePoint p;
    p.t = spec.start_time + u(0, col) * (spec.horizon - spec.start_time);
    p.x = lo + (hi - lo).cwiseProduct(u.block(1, col, d, 1));
    p.z = u(d + 1, col) * zmax;
    pts.push_back(std::move(p));
  }
  return pts;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

Matrix halton_points(int dim, std::size_t count, std::uint64_t seed) {
  if (dim > static_cast<int>(std::size(kPrimes))) throw SpecError("halton_points: dimension too large");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector shift(dim);
  for (int j = 0; j < dim; ++j) shift(j) = unif(rng);
  Matrix out(dim, static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    for (int j = 0; j < dim; ++j) {
      double v = radical_inverse(i + 1, kPrimes[j]) + shift(j);
      out(j, static_cast<Eigen::Index>(i)) = v - std::floor(v);
    }
  return out;
}

ValidationReport validate_problem(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed,
                                  const ValidationOptions& options) {
  if (samples < 1) throw SpecError("validate_problem needs at least one sample");
  require_valid_structure(spec);

  const int d = spec.dims.state;
  const Vector lo = options.lo.size() == d ? options.lo : Vector(Vector::Constant(d, -1.0));
  const Vector hi = options.hi.size() == d ? options.hi : Vector(Vector::Constant(d, 1.0));
  const auto pts = sample_points(spec, samples, seed, lo, hi);
  const auto n_actions = spec.action_set.size();

  ValidationReport report;
  report.checks.push_back({"structure", CheckStatus::Pass, "dimensions, action set and fuel mode consistent", 0});

  // Output shapes and finiteness of every coefficient at every sample.
  {
    ValidationCheck c{"coefficient_shapes", CheckStatus::Pass, "", samples};
    std::size_t bad = 0;
    std::string first;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& p = pts[i];
      const auto& a = spec.action_set[i % n_actions];
      const double z = spec.payoff_fuel(p.z);
      const Vector mu = spec.drift(p.t, p.x, a);
      const Matrix sig = spec.diffusion(p.t, p.x, a);
      const Vector cp = spec.cost_plus(p.t, p.x);
      const Vector cm = spec.cost_minus(p.t, p.x);
      const double f = spec.running_gain(p.t, p.x, z, a);
      bool ok = mu.size() == d && sig.rows() == d && sig.cols() == spec.dims.noise && cp.size() == d &&
                cm.size() == d;
      ok = ok && mu.allFinite() && sig.allFinite() && cp.allFinite() && cm.allFinite() && std::isfinite(f);
      if (!ok) {
        if (bad++ == 0) first = "first offending sample at t=" + format_double(p.t);
      }
    }
    if (bad > 0) {
      c.status = CheckStatus::Fail;
      c.detail = std::to_string(bad) + " samples with wrong shape or non-finite values; " + first;
    } else {
      c.detail = "all coefficients finite with expected shapes";
    }
    report.checks.push_back(std::move(c));
  }

  auto floor_check = [&](const std::string& name, const GainFn& g) {
    ValidationCheck c{name, CheckStatus::Pass, "", samples};
    std::size_t below = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
      const double v = g(p.t, p.x, spec.payoff_fuel(p.z));
      worst = std::min(worst, v);
      if (!(v >= -spec.payoff_floor)) ++below;
    }
    c.statistic = static_cast<double>(below);
    c.detail = std::to_string(below) + " of " + std::to_string(samples) + " samples below -" +
               format_double(spec.payoff_floor) + " (min " + format_double(worst) + ")";
    if (below > 0) c.status = CheckStatus::Fail;
    report.checks.push_back(std::move(c));
  };
  floor_check("exit_gain_floor", spec.exit_gain);
  floor_check("stop_gain_floor", spec.stop_gain);

  // Lipschitz probe: global ratios over consecutive sample pairs plus local
  // ratios at two perturbation sizes. A ratio that blows up as the
  // perturbation shrinks looks non-Lipschitz.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  std::vector<Vector> dirs;
  dirs.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Vector e(d);
    for (int j = 0; j < d; ++j) e(j) = normal(rng);
    const double n = e.norm();
    dirs.push_back(n > 0 ? Vector(e / n) : Vector(Vector::Unit(d, 0)));
  }
  auto lipschitz_check = [&](const std::string& name, auto&& eval) {
    ValidationCheck c{name, CheckStatus::Pass, "", samples};
    double global = 0.0, coarse = 0.0, fine = 0.0;
    auto local = [&](double t, const Vector& x, const Vector& a, const Vector& dir) {
      for (double delta : {1e-2, 1e-5}) {
        const Vector y = x + delta * dir;
        const double r = (eval(t, x, a) - eval(t, y, a)).norm() / delta;
        double& slot = delta > 1e-3 ? coarse : fine;
        slot = std::max(slot, r);
      }
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& p = pts[i];
      const auto& a = spec.action_set[i % n_actions];
      if (i + 1 < pts.size()) {
        const Vector& y = pts[i + 1].x;
        const double dist = (p.x - y).norm();
        if (dist > 0) global = std::max(global, (eval(p.t, p.x, a) - eval(p.t, y, a)).norm() / dist);
      }
      local(p.t, p.x, a, dirs[i]);
    }
    // the centre of the probe box, where kinks like sqrt|x| tend to sit
    const Vector centre = 0.5 * (lo + hi);
    for (int j = 0; j < d; ++j)
      for (double sign : {1.0, -1.0}) local(pts[0].t, centre, spec.action_set[0], Vector(sign * Vector::Unit(d, j)));
    const double reference = std::max(global, coarse);
    const bool blows_up = (fine > 10.0 * reference && fine > 1e-6) || !std::isfinite(fine) || fine > 1e8;
    c.statistic = std::max({global, coarse, fine});
    c.detail = "max ratio " + format_double(global) + " over sample pairs, " + format_double(coarse) +
               " at 1e-2, " + format_double(fine) + " at 1e-5";
    if (blows_up) c.status = CheckStatus::Warn;
    report.checks.push_back(std::move(c));
  };
  lipschitz_check("drift_lipschitz",
                  [&](double t, const Vector& x, const Vector& a) -> Matrix { return spec.drift(t, x, a); });
  lipschitz_check("diffusion_lipschitz", [&](double t, const Vector& x, const Vector& a) -> Matrix {
    const Matrix s = spec.diffusion(t, x, a);
    return Eigen::Map<const Vector>(s.data(), s.size());
  });

  if (spec.segment_costs()) {
    ValidationCheck c{"cost_uniformity", CheckStatus::Pass, "", samples};
    std::size_t bad = 0;
    for (const auto& p : pts) {
      const Vector cp = spec.cost_plus(p.t, p.x);
      const Vector cm = spec.cost_minus(p.t, p.x);
      if ((cp.array() != cp(0)).any() || (cm.array() != cm(0)).any()) ++bad;
    }
    if (bad > 0)
      throw SpecError("segment-integral convention rejected: costs differ across coordinates at " +
                      std::to_string(bad) + " samples");
    c.detail = "cost_plus and cost_minus coordinate-uniform at every sample";
    report.checks.push_back(std::move(c));
  }
  return report;
}

std::uint64_t spec_fingerprint(const ProblemSpec& spec) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  auto mix_d = [&](double v) { mix(&v, sizeof v); };
  auto mix_m = [&](const Matrix& m) { mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); };
  mix(spec.name.data(), spec.name.size());
  mix(&spec.dims, sizeof spec.dims);
  mix_d(spec.horizon);
  mix_d(spec.start_time);
  mix_d(spec.payoff_floor);
  mix_d(spec.finite_fuel() ? spec.zbar() : -std::get<InfiniteFuel>(spec.fuel).p);
  for (const auto& a : spec.action_set) mix_m(a);
  const int d = spec.dims.state;
  const Matrix u = halton_points(d + 2, 3, 0);
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    const double t = spec.start_time + u(0, i) * (spec.horizon - spec.start_time);
    const Vector x = (2.0 * u.block(1, i, d, 1).array() - 1.0).matrix();
    const double z = spec.finite_fuel() ? u(d + 1, i) * spec.zbar() : 0.0;
    const auto& a = spec.action_set.front();
    mix_m(spec.drift(t, x, a));
    mix_m(spec.diffusion(t, x, a));
    mix_d(spec.running_gain(t, x, z, a));
    mix_d(spec.exit_gain(t, x, z));
    mix_d(spec.stop_gain(t, x, z));
    mix_m(spec.cost_plus(t, x));
    mix_m(spec.cost_minus(t, x));
    const bool in = spec.domain(x, z);
    mix(&in, sizeof in);
  }
  return h;
}

}  // namespace fuelgrid
