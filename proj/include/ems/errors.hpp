#pragma once

#include <stdexcept>
#include <string>

namespace ems {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInstanceError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The dispatch problem handed to a solver has no feasible decision.
class ModelingError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive search exceeded its leaf budget; callers fall back to the
/// linearized solver.
class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

/// A policy produced a decision that is illegal for the live system state.
class SimulationFault : public Error {
 public:
  using Error::Error;
};

}  // namespace ems
