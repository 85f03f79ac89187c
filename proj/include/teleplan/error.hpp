#pragma once

#include <stdexcept>
#include <string>

namespace teleplan {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied argument violates a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// An input file does not match the documented schema. `column()` names the
// offending field when one is known.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& message, std::string column = {})
      : Error(message), column_(std::move(column)) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

// Parsed data is well-formed but violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A site id or index that does not exist in the scenario.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Internal consistency broken between cooperating objects (e.g. a trajectory
// replayed against a scenario it was not sampled from).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite objective or gradient.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace teleplan
