#pragma once

#include <stdexcept>
#include <string>

namespace mjls {

// Invalid model data: bad kernel rows, shape mismatches in configuration,
// densities that do not integrate to one.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine failed to produce its result (non-convergence, loss of
// definiteness, an unstable closed loop where a stable one is required).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mjls
