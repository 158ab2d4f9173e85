#pragma once

#include "fuelgrid/problem.hpp"
#include "fuelgrid/solver.hpp"

#include "json.hpp"

#include <string>

namespace fuelgrid {

using Json = nlohmann::json;

/// Config schema violation. The message starts with the offending field path.
class ConfigError : public SpecError {
 public:
  using SpecError::SpecError;
};

/// Parse a JSON file; syntax errors report line and column.
Json read_json_file(const std::string& path);
Json parse_json_text(const std::string& text, const std::string& source = "<config>");

/// Build a problem from the coefficient library described in docs/config.md.
ProblemSpec problem_from_json(const Json& j, const std::string& where = "problem");
LatticeSpec lattice_from_json(const Json& j, int state_dim, const std::string& where = "lattice");
SolverOptions solver_options_from_json(const Json& j, const std::string& where = "solver");

// Field helpers shared with the run config.
namespace config {

const Json& require(const Json& obj, const char* key, const std::string& where);
double number(const Json& j, const std::string& where);
long long integer(const Json& j, const std::string& where);
bool boolean(const Json& j, const std::string& where);
std::string string(const Json& j, const std::string& where);
/// Scalar accepted for a length-1 vector.
Vector vector(const Json& j, const std::string& where, Eigen::Index expected = -1);
void allow_keys(const Json& obj, std::initializer_list<const char*> keys, const std::string& where);

}  // namespace config

}  // namespace fuelgrid
