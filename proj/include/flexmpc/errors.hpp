#pragma once

#include <stdexcept>
#include <string>

namespace flexmpc {

// Iterative routine hit its cap without meeting its tolerance.
struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& what, double residual_)
      : std::runtime_error(what), residual(residual_) {}
};

// A point that must be feasible is not (e.g. a start violating box bounds).
struct FeasibilityError : std::runtime_error {
  int coordinate;
  FeasibilityError(const std::string& what, int coordinate_)
      : std::runtime_error(what), coordinate(coordinate_) {}
};

// A guarantee of the method itself failed at runtime; signals a tolerance
// breach upstream, not bad user input.
struct AlgorithmInvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario file rejected; message names the offending field.
struct ScenarioParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace flexmpc
