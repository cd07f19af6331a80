#pragma once

#include <stdexcept>

namespace quench {

// Non-finite states, exploding losses and similar numerical breakdowns.
// The CLI maps this to its own exit code, distinct from usage errors.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace quench
