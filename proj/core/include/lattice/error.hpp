#pragma once

#include <stdexcept>
#include <string>

namespace lattice {

/// Invalid arguments or malformed configuration (CLI exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data that violates a model precondition: empty categories, schema
/// mismatches, zero-probability observations (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its stopping criterion or hit a
/// singular system (CLI exit code 3).
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lattice
