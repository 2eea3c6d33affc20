#pragma once

#include <stdexcept>
#include <string>

namespace hylo {

/// Invalid configuration or problem specification (bad grid extents,
/// inadmissible exponents, inconsistent section values). Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// API contract violation (state/spec mismatch, zero state where a nontrivial
/// one is required). Also maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Iteration failures: non-convergent eigensolves, NaN during evolution.
/// Maps to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hylo
