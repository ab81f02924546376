#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fmx {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid numeric or structural parameter (gamma <= 0, max_atoms < 1, ...).
struct ParameterError : Error {
  using Error::Error;
};

// Malformed input text. `line` is 1-based, 0 when not tied to a line.
struct FormatError : Error {
  int line = 0;
  explicit FormatError(const std::string& msg, int line_no = 0)
      : Error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
};

struct UnknownElementError : Error {
  std::string element;
  explicit UnknownElementError(const std::string& symbol)
      : Error("unknown element '" + symbol + "' and no wildcard row in parameter table"),
        element(symbol) {}
};

// Fragment lists that fail to partition the atom set.
struct PartitionError : Error {
  enum class Kind { Duplicate, Uncovered };
  Kind kind;
  std::vector<int> indices;  // offending 0-based atom indices
  PartitionError(Kind k, std::vector<int> idx, const std::string& msg)
      : Error(msg), kind(k), indices(std::move(idx)) {}
};

struct IndexError : Error {
  using Error::Error;
};

// Dense KKT solve failed (singular or numerically indefinite system).
struct SingularSystemError : Error {
  int fragment_id = -1;
  explicit SingularSystemError(const std::string& msg, int frag = -1)
      : Error(msg), fragment_id(frag) {}
};

// Iteration limit reached. Carries the residual history so drivers can back off.
struct NonConvergenceError : Error {
  std::vector<double> residual_history;
  NonConvergenceError(const std::string& msg, std::vector<double> history)
      : Error(msg), residual_history(std::move(history)) {}
};

// Ornstein-Zernike denominator passed below the configured guard.
struct DivergenceError : Error {
  using Error::Error;
};

// exp() overflow inside the HNC closure.
struct ClosureOverflowError : Error {
  using Error::Error;
};

// Site or atom too close to (or outside) a grid box face.
struct SpillError : Error {
  using Error::Error;
};

// Mediator payload/kind mismatch, or a transform asked to change meaning.
struct SemanticError : Error {
  using Error::Error;
};

struct NotFoundError : Error {
  using Error::Error;
};

struct VersionError : Error {
  using Error::Error;
};

struct CycleError : Error {
  using Error::Error;
};

// System too large for the dense verification oracle.
struct SizeGuardError : Error {
  using Error::Error;
};

}  // namespace fmx
