#include "fuelgrid/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fuelgrid {

namespace config {

const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + "." + key + ": missing required field");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": must be finite");
  return v;
}

long long integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<long long>();
}

bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

std::string string(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

Vector vector(const Json& j, const std::string& where, Eigen::Index expected) {
  Vector v;
  if (j.is_number()) {
    v = Vector::Constant(1, number(j, where));
  } else if (j.is_array()) {
    v.resize(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where + "[" + std::to_string(i) + "]");
  } else {
    throw ConfigError(where + ": expected a number or an array of numbers");
  }
  if (expected >= 0 && v.size() != expected)
    throw ConfigError(where + ": expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
  return v;
}

void allow_keys(const Json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : obj.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + "." + k + ": unknown field");
  }
}

}  // namespace config

using namespace config;

namespace {

Matrix matrix(const Json& j, const std::string& where, Eigen::Index rows, Eigen::Index cols) {
  if (j.is_number() && rows == 1 && cols == 1) return Matrix::Constant(1, 1, number(j, where));
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ConfigError(where + ": expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string w = where + "[" + std::to_string(r) + "]";
    m.row(r) = vector(j[static_cast<std::size_t>(r)], w, cols).transpose();
  }
  return m;
}

std::vector<Matrix> matrix_list(const Json& j, const std::string& where, std::size_t count, Eigen::Index rows,
                                Eigen::Index cols) {
  if (!j.is_array() || j.size() != count)
    throw ConfigError(where + ": expected a list of " + std::to_string(count) + " matrices");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(matrix(j[i], where + "[" + std::to_string(i) + "]", rows, cols));
  return out;
}

std::string type_of(const Json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  return string(require(j, "type", where), where + ".type");
}

template <class T>
T optional_or(const Json& obj, const char* key, T fallback, const std::string& where, T (*read)(const Json&, const std::string&)) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return read(obj.at(key), where + "." + key);
}

double opt_number(const Json& obj, const char* key, double fallback, const std::string& where) {
  return optional_or<double>(obj, key, fallback, where, &number);
}

int coordinate_field(const Json& obj, int d, const std::string& where) {
  if (!obj.contains("coordinate")) return 0;
  const long long c = integer(obj.at("coordinate"), where + ".coordinate");
  if (c < 0 || c >= d) throw ConfigError(where + ".coordinate: out of range");
  return static_cast<int>(c);
}

DriftFn drift_from(const Json& j, const Dimensions& dims, const std::string& where) {
  const std::string type = type_of(j, where);
  if (type == "zero") return [d = dims.state](double, const Vector&, const Vector&) -> Vector { return Vector::Zero(d); };
  if (type != "affine") throw ConfigError(where + ".type: unknown drift '" + type + "' (zero, affine)");
  allow_keys(j, {"type", "offset", "state", "action"}, where);
  Vector b = j.contains("offset") ? vector(j["offset"], where + ".offset", dims.state) : Vector::Zero(dims.state);
  Matrix A = j.contains("state") ? matrix(j["state"], where + ".state", dims.state, dims.state)
                                 : Matrix::Zero(dims.state, dims.state);
  Matrix B = j.contains("action") ? matrix(j["action"], where + ".action", dims.state, dims.control)
                                  : Matrix::Zero(dims.state, dims.control);
  return [b, A, B](double, const Vector& x, const Vector& a) -> Vector { return b + A * x + B * a; };
}

DiffusionFn diffusion_from(const Json& j, const Dimensions& dims, const std::string& where) {
  const std::string type = type_of(j, where);
  const auto d = dims.state, dn = dims.noise;
  if (type == "zero") return [d, dn](double, const Vector&, const Vector&) -> Matrix { return Matrix::Zero(d, dn); };
  if (type == "constant") {
    allow_keys(j, {"type", "matrix"}, where);
    Matrix S = matrix(require(j, "matrix", where), where + ".matrix", d, dn);
    return [S](double, const Vector&, const Vector&) -> Matrix { return S; };
  }
  if (type != "affine") throw ConfigError(where + ".type: unknown diffusion '" + type + "' (zero, constant, affine)");
  allow_keys(j, {"type", "constant", "state", "action"}, where);
  Matrix S0 = j.contains("constant") ? matrix(j["constant"], where + ".constant", d, dn) : Matrix::Zero(d, dn);
  std::vector<Matrix> Sx = j.contains("state")
                               ? matrix_list(j["state"], where + ".state", static_cast<std::size_t>(d), d, dn)
                               : std::vector<Matrix>(static_cast<std::size_t>(d), Matrix::Zero(d, dn));
  std::vector<Matrix> Sa = j.contains("action")
                               ? matrix_list(j["action"], where + ".action", static_cast<std::size_t>(dims.control), d, dn)
                               : std::vector<Matrix>(static_cast<std::size_t>(dims.control), Matrix::Zero(d, dn));
  return [S0, Sx, Sa](double, const Vector& x, const Vector& a) -> Matrix {
    Matrix S = S0;
    for (std::size_t i = 0; i < Sx.size(); ++i) S += x(static_cast<Eigen::Index>(i)) * Sx[i];
    for (std::size_t i = 0; i < Sa.size(); ++i) S += a(static_cast<Eigen::Index>(i)) * Sa[i];
    return S;
  };
}

using Term = std::function<double(double t, const Vector& x, double z, const Vector& a)>;

Term gain_term(const Json& j, const Dimensions& dims, bool allow_action, const std::string& where) {
  const std::string type = type_of(j, where);
  if (type == "zero") return [](double, const Vector&, double, const Vector&) { return 0.0; };
  if (type == "constant") {
    allow_keys(j, {"type", "value"}, where);
    const double c = number(require(j, "value", where), where + ".value");
    return [c](double, const Vector&, double, const Vector&) { return c; };
  }
  if (type == "polynomial") {
    allow_keys(j, {"type", "coordinate", "coeffs"}, where);
    const int i = coordinate_field(j, dims.state, where);
    const Vector c = vector(require(j, "coeffs", where), where + ".coeffs");
    return [i, c](double, const Vector& x, double, const Vector&) {
      double v = 0.0;
      for (Eigen::Index k = c.size() - 1; k >= 0; --k) v = v * x(i) + c(k);
      return v;
    };
  }
  if (type == "quadratic") {
    allow_keys(j, {"type", "constant", "linear", "matrix"}, where);
    const double c = opt_number(j, "constant", 0.0, where);
    const Vector l = j.contains("linear") ? vector(j["linear"], where + ".linear", dims.state) : Vector::Zero(dims.state);
    const Matrix Q = j.contains("matrix") ? matrix(j["matrix"], where + ".matrix", dims.state, dims.state)
                                          : Matrix::Zero(dims.state, dims.state);
    return [c, l, Q](double, const Vector& x, double, const Vector&) { return c + l.dot(x) + x.dot(Q * x); };
  }
  if (type == "hinge") {
    allow_keys(j, {"type", "coordinate", "strike", "side", "scale"}, where);
    const int i = coordinate_field(j, dims.state, where);
    const double k = number(require(j, "strike", where), where + ".strike");
    const double s = opt_number(j, "scale", 1.0, where);
    const std::string side = string(require(j, "side", where), where + ".side");
    if (side != "call" && side != "put") throw ConfigError(where + ".side: expected 'call' or 'put'");
    const double dir = side == "call" ? 1.0 : -1.0;
    return [i, k, s, dir](double, const Vector& x, double, const Vector&) {
      return s * std::max(dir * (x(i) - k), 0.0);
    };
  }
  if (type == "exponential") {
    allow_keys(j, {"type", "scale", "rate"}, where);
    const double s = opt_number(j, "scale", 1.0, where);
    const double r = number(require(j, "rate", where), where + ".rate");
    return [s, r](double t, const Vector&, double, const Vector&) { return s * std::exp(r * t); };
  }
  if (type == "fuel_linear") {
    allow_keys(j, {"type", "slope"}, where);
    const double s = number(require(j, "slope", where), where + ".slope");
    return [s](double, const Vector&, double z, const Vector&) { return s * z; };
  }
  if (type == "action_linear" || type == "action_quadratic") {
    if (!allow_action) throw ConfigError(where + ".type: action terms are only allowed in running_gain");
    allow_keys(j, {"type", "coeffs"}, where);
    const Vector c = vector(require(j, "coeffs", where), where + ".coeffs", dims.control);
    if (type == "action_linear") return [c](double, const Vector&, double, const Vector& a) { return c.dot(a); };
    return [c](double, const Vector&, double, const Vector& a) { return c.dot(a.cwiseProduct(a)); };
  }
  if (type == "sum") {
    allow_keys(j, {"type", "terms"}, where);
    const Json& terms = require(j, "terms", where);
    if (!terms.is_array()) throw ConfigError(where + ".terms: expected an array");
    std::vector<Term> parts;
    for (std::size_t i = 0; i < terms.size(); ++i)
      parts.push_back(gain_term(terms[i], dims, allow_action, where + ".terms[" + std::to_string(i) + "]"));
    return [parts](double t, const Vector& x, double z, const Vector& a) {
      double v = 0.0;
      for (const auto& p : parts) v += p(t, x, z, a);
      return v;
    };
  }
  throw ConfigError(where + ".type: unknown gain '" + type +
                    "' (zero, constant, polynomial, quadratic, hinge, exponential, fuel_linear, sum" +
                    (allow_action ? ", action_linear, action_quadratic)" : ")"));
}

GainFn gain_from(const Json& j, const Dimensions& dims, const std::string& where) {
  Term t = gain_term(j, dims, false, where);
  const Vector none = Vector::Zero(dims.control);
  return [t, none](double s, const Vector& x, double z) { return t(s, x, z, none); };
}

struct CostSpec {
  CostFn fn;
  bool uniform = false;
};

CostSpec cost_from(const Json& j, int d, const std::string& where) {
  const std::string type = type_of(j, where);
  if (type == "zero") return {[d](double, const Vector&) -> Vector { return Vector::Zero(d); }, true};
  if (type == "constant") {
    allow_keys(j, {"type", "value"}, where);
    const Json& v = require(j, "value", where);
    const Vector c = v.is_number() ? Vector::Constant(d, number(v, where + ".value")) : vector(v, where + ".value", d);
    return {[c](double, const Vector&) -> Vector { return c; }, (c.array() == c(0)).all()};
  }
  if (type == "affine") {
    allow_keys(j, {"type", "offset", "slope"}, where);
    const Json& o = require(j, "offset", where);
    const Vector b = o.is_number() ? Vector::Constant(d, number(o, where + ".offset")) : vector(o, where + ".offset", d);
    const Matrix S = j.contains("slope") ? matrix(j["slope"], where + ".slope", d, d) : Matrix::Zero(d, d);
    bool uniform = (b.array() == b(0)).all();
    for (int r = 1; r < d; ++r) uniform = uniform && S.row(r) == S.row(0);
    return {[b, S](double, const Vector& x) -> Vector { return b + S * x; }, uniform};
  }
  if (type == "polynomial") {
    allow_keys(j, {"type", "coordinate", "coeffs"}, where);
    const int i = coordinate_field(j, d, where);
    const Vector c = vector(require(j, "coeffs", where), where + ".coeffs");
    return {[i, c, d](double, const Vector& x) -> Vector {
              double v = 0.0;
              for (Eigen::Index k = c.size() - 1; k >= 0; --k) v = v * x(i) + c(k);
              return Vector::Constant(d, v);
            },
            true};
  }
  throw ConfigError(where + ".type: unknown cost '" + type + "' (zero, constant, affine, polynomial)");
}

DomainFn domain_from(const Json& j, int d, const std::string& where) {
  const std::string type = type_of(j, where);
  if (type == "everything") return [](const Vector&, double) { return true; };
  if (type == "box") {
    allow_keys(j, {"type", "lo", "hi"}, where);
    const Vector lo = vector(require(j, "lo", where), where + ".lo", d);
    const Vector hi = vector(require(j, "hi", where), where + ".hi", d);
    return [lo, hi](const Vector& x, double) { return (x.array() > lo.array()).all() && (x.array() < hi.array()).all(); };
  }
  if (type == "half_space") {
    allow_keys(j, {"type", "normal", "offset"}, where);
    const Vector n = vector(require(j, "normal", where), where + ".normal", d);
    const double b = number(require(j, "offset", where), where + ".offset");
    return [n, b](const Vector& x, double) { return n.dot(x) > b; };
  }
  if (type == "ball") {
    allow_keys(j, {"type", "center", "radius"}, where);
    const Vector c = vector(require(j, "center", where), where + ".center", d);
    const double r = number(require(j, "radius", where), where + ".radius");
    return [c, r](const Vector& x, double) { return (x - c).norm() < r; };
  }
  if (type == "fuel_below") {
    allow_keys(j, {"type", "level"}, where);
    const double level = number(require(j, "level", where), where + ".level");
    return [level](const Vector&, double z) { return z < level; };
  }
  if (type == "intersection") {
    allow_keys(j, {"type", "parts"}, where);
    const Json& parts = require(j, "parts", where);
    if (!parts.is_array()) throw ConfigError(where + ".parts: expected an array");
    std::vector<DomainFn> fs;
    for (std::size_t i = 0; i < parts.size(); ++i)
      fs.push_back(domain_from(parts[i], d, where + ".parts[" + std::to_string(i) + "]"));
    return [fs](const Vector& x, double z) {
      for (const auto& f : fs)
        if (!f(x, z)) return false;
      return true;
    };
  }
  throw ConfigError(where + ".type: unknown domain '" + type +
                    "' (everything, box, half_space, ball, fuel_below, intersection)");
}

std::vector<bool> mask_from(const Json& j, int d, const std::string& where) {
  if (j.is_boolean()) return std::vector<bool>(static_cast<std::size_t>(d), j.get<bool>());
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw ConfigError(where + ": expected true/false or one flag per state coordinate");
  std::vector<bool> m;
  for (std::size_t i = 0; i < j.size(); ++i) m.push_back(boolean(j[i], where + "[" + std::to_string(i) + "]"));
  return m;
}

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    std::string msg = e.what();
    if (const auto p = msg.find("; last read"); p != std::string::npos) msg = msg.substr(p + 2);
    throw ConfigError(source + ": " + line_column(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + msg);
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

ProblemSpec problem_from_json(const Json& j, const std::string& where) {
  allow_keys(j,
             {"name", "horizon", "start_time", "dims", "drift", "diffusion", "running_gain", "exit_gain", "stop_gain",
              "cost_plus", "cost_minus", "domain", "action_set", "fuel", "cost_convention", "payoff_floor",
              "singular_directions"},
             where);
  ProblemSpec s;
  s.name = j.contains("name") ? string(j["name"], where + ".name") : "problem";
  s.horizon = number(require(j, "horizon", where), where + ".horizon");
  s.start_time = opt_number(j, "start_time", 0.0, where);
  if (!(s.start_time < s.horizon)) throw ConfigError(where + ".start_time: must be below horizon");
  if (!(s.start_time >= 0.0)) throw ConfigError(where + ".start_time: must be >= 0");
  if (j.contains("dims")) {
    const Json& d = j["dims"];
    const std::string w = where + ".dims";
    allow_keys(d, {"state", "noise", "control"}, w);
    auto dim = [&](const char* key) {
      if (!d.contains(key)) return 1;
      const long long v = integer(d[key], w + "." + key);
      if (v < 1 || v > 64) throw ConfigError(w + "." + key + ": must be between 1 and 64");
      return static_cast<int>(v);
    };
    s.dims = Dimensions{dim("state"), dim("noise"), dim("control")};
  }
  const int d = s.dims.state;
  s.drift = drift_from(require(j, "drift", where), s.dims, where + ".drift");
  s.diffusion = diffusion_from(require(j, "diffusion", where), s.dims, where + ".diffusion");
  {
    Term f = j.contains("running_gain") ? gain_term(j["running_gain"], s.dims, true, where + ".running_gain")
                                        : gain_term("zero", s.dims, true, where + ".running_gain");
    s.running_gain = [f](double t, const Vector& x, double z, const Vector& a) { return f(t, x, z, a); };
  }
  s.exit_gain = gain_from(require(j, "exit_gain", where), s.dims, where + ".exit_gain");
  s.stop_gain = gain_from(require(j, "stop_gain", where), s.dims, where + ".stop_gain");
  const CostSpec cp = j.contains("cost_plus") ? cost_from(j["cost_plus"], d, where + ".cost_plus")
                                              : cost_from("zero", d, where + ".cost_plus");
  const CostSpec cm = j.contains("cost_minus") ? cost_from(j["cost_minus"], d, where + ".cost_minus")
                                               : cost_from("zero", d, where + ".cost_minus");
  s.cost_plus = cp.fn;
  s.cost_minus = cm.fn;
  s.costs_uniform = cp.uniform && cm.uniform;
  s.domain = j.contains("domain") ? domain_from(j["domain"], d, where + ".domain") : domain_from("everything", d, "");

  const Json& acts = require(j, "action_set", where);
  if (!acts.is_array() || acts.empty()) throw ConfigError(where + ".action_set: expected a nonempty array");
  for (std::size_t i = 0; i < acts.size(); ++i)
    s.action_set.push_back(vector(acts[i], where + ".action_set[" + std::to_string(i) + "]", s.dims.control));

  if (j.contains("fuel")) {
    const Json& f = j["fuel"];
    const std::string w = where + ".fuel";
    const std::string type = type_of(f, w);
    if (type == "finite") {
      allow_keys(f, {"type", "zbar"}, w);
      const double zbar = number(require(f, "zbar", w), w + ".zbar");
      if (!(zbar >= 0.0)) throw ConfigError(w + ".zbar: must be >= 0");
      s.fuel = FiniteFuel{zbar};
    } else if (type == "infinite") {
      allow_keys(f, {"type", "p"}, w);
      const double p = opt_number(f, "p", 2.0, w);
      if (!(p > 0.0)) throw ConfigError(w + ".p: must be > 0");
      s.fuel = InfiniteFuel{p};
    } else {
      throw ConfigError(w + ".type: expected 'finite' or 'infinite'");
    }
  }
  if (j.contains("cost_convention")) {
    const Json& c = j["cost_convention"];
    const std::string w = where + ".cost_convention";
    const std::string type = type_of(c, w);
    if (type == "stieltjes") {
      s.cost_convention = Stieltjes{};
    } else if (type == "segment_integral") {
      int steps = 1000;
      if (c.is_object()) {
        allow_keys(c, {"type", "quadrature_steps"}, w);
        if (c.contains("quadrature_steps")) steps = static_cast<int>(integer(c["quadrature_steps"], w + ".quadrature_steps"));
      }
      if (steps < 1) throw ConfigError(w + ".quadrature_steps: must be >= 1");
      if (!s.costs_uniform) throw ConfigError(w + ": segment_integral needs coordinate-uniform cost_plus and cost_minus");
      s.cost_convention = SegmentIntegral{steps};
    } else {
      throw ConfigError(w + ".type: expected 'stieltjes' or 'segment_integral'");
    }
  }
  s.payoff_floor = opt_number(j, "payoff_floor", 0.0, where);
  if (!(s.payoff_floor >= 0.0)) throw ConfigError(where + ".payoff_floor: must be >= 0");
  if (j.contains("singular_directions")) {
    const Json& m = j["singular_directions"];
    const std::string w = where + ".singular_directions";
    allow_keys(m, {"plus", "minus"}, w);
    if (m.contains("plus")) s.allow_plus = mask_from(m["plus"], d, w + ".plus");
    if (m.contains("minus")) s.allow_minus = mask_from(m["minus"], d, w + ".minus");
  }
  try {
    require_valid_structure(s);
  } catch (const SpecError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

LatticeSpec lattice_from_json(const Json& j, int state_dim, const std::string& where) {
  allow_keys(j, {"lo", "hi", "h", "n_steps", "auto_shrink", "max_shrink"}, where);
  LatticeSpec l;
  l.lo = vector(require(j, "lo", where), where + ".lo", state_dim);
  l.hi = vector(require(j, "hi", where), where + ".hi", state_dim);
  const Json& h = require(j, "h", where);
  l.h = h.is_number() ? Vector::Constant(state_dim, number(h, where + ".h")) : vector(h, where + ".h", state_dim);
  if ((l.h.array() <= 0.0).any()) throw ConfigError(where + ".h: spacings must be positive");
  if ((l.hi.array() <= l.lo.array()).any()) throw ConfigError(where + ".hi: must exceed lo in every coordinate");
  const long long n = integer(require(j, "n_steps", where), where + ".n_steps");
  if (n < 1 || n > 10'000'000) throw ConfigError(where + ".n_steps: must be between 1 and 1e7");
  l.n_steps = static_cast<int>(n);
  if (j.contains("auto_shrink")) l.auto_shrink = boolean(j["auto_shrink"], where + ".auto_shrink");
  if (j.contains("max_shrink")) l.max_shrink = static_cast<int>(integer(j["max_shrink"], where + ".max_shrink"));
  return l;
}

SolverOptions solver_options_from_json(const Json& j, const std::string& where) {
  SolverOptions o;
  if (j.is_null()) return o;
  allow_keys(j, {"tol_slice", "max_iter", "tol_tie"}, where);
  o.tol_slice = opt_number(j, "tol_slice", o.tol_slice, where);
  o.tol_tie = opt_number(j, "tol_tie", o.tol_tie, where);
  if (j.contains("max_iter")) o.max_iter = integer(j["max_iter"], where + ".max_iter");
  if (!(o.tol_slice > 0.0)) throw ConfigError(where + ".tol_slice: must be > 0");
  if (!(o.tol_tie >= 0.0)) throw ConfigError(where + ".tol_tie: must be >= 0");
  if (o.max_iter < 0) throw ConfigError(where + ".max_iter: must be >= 0");
  return o;
}

}  // namespace fuelgrid
