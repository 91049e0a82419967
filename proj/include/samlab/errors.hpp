#pragma once

#include <stdexcept>
#include <string>

namespace samlab {

// Invalid configuration (bad file, bad flag combination, invariant
// violation). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible vector/matrix shapes passed to an evaluation.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A run tripped the divergence guard (parameter norm above the limit or a
// non-finite entry). Carries the offending step for diagnostics.
struct DivergenceError : std::runtime_error {
  DivergenceError(long step, double norm)
      : std::runtime_error("run diverged at step " + std::to_string(step) +
                           " (parameter norm " + std::to_string(norm) + ")"),
        step(step),
        norm(norm) {}
  long step;
  double norm;
};

}  // namespace samlab
