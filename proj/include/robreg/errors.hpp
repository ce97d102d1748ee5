#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace robreg {

/// Input outside the mathematical domain of an operation (non-finite values,
/// zero-norm leverage, dimension mismatch).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A derivative requested where it does not exist (Huber kink, Absolute loss).
class UnsupportedPoint : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A specification object that violates its invariants.
class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative solver failure; carries the iteration at which it happened.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite input");
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidSpec(msg);
}

}  // namespace detail
}  // namespace robreg
