#pragma once

#include <stdexcept>
#include <string>

namespace fedchs {

// Caller broke a documented precondition (dimension mismatch, bad weights, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss evaluation produced a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyShardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PartitionInfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A theorem precondition (beta range, step-size cap) does not hold.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedchs
