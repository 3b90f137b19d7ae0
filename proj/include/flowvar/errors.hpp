#pragma once

#include <stdexcept>
#include <string>

namespace flowvar {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// (I + t*Theta) not invertible at some evaluation time; carries that time.
struct SingularityError : std::runtime_error {
  double t;
  explicit SingularityError(double time, const std::string& what)
      : std::runtime_error(what), t(time) {}
};

// Two stored interpolant keys within tolerance but with different
// displacements; the lookup field would be ill-defined.
struct AmbiguityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite state encountered while integrating or training.
struct DivergenceError : std::runtime_error {
  long step;
  explicit DivergenceError(long step_index, const std::string& what)
      : std::runtime_error(what), step(step_index) {}
};

}  // namespace flowvar
