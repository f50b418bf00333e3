#pragma once

#include <stdexcept>
#include <string>

namespace parablend {

// Every failure the library reports derives from std::runtime_error so callers
// can catch broadly; the subclasses only exist to let tests and the CLI tell
// the failure modes apart.

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Spatial derivatives were requested exactly on the boundary between two
// smooth pieces of a partial construction.
class SeamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SupportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace parablend
