// Error taxonomy shared by every module.
//
// All failures surface as a single exception type carrying a stable error
// code whose name is printed by the CLI (exit code 3) and asserted by tests.
// Codes are part of the external contract; do not renumber or rename.
#pragma once

#include <stdexcept>
#include <string>

namespace bsdelab {

enum class errc {
  budget_exceeded,            // tree would exceed the leaf budget
  invalid_dim,                // Brownian dimension outside {1, 2}
  shape_mismatch,             // process shape/size incompatible with operation
  unsliceable,                // single-step slices already exceed delta
  singular_step,              // (I - alpha*dt) not invertible at some node
  measure_not_equivalent,     // a Girsanov weight is <= 0 (dt too coarse)
  not_triangular,             // upper-triangular coefficient entry above tolerance
  no_contraction,             // Picard difference grew for 3 consecutive sweeps
  max_iterations,             // iteration cap reached before the tolerance
  singular_factor,            // (I + A*dB) singular: exponential not invertible
  step_too_coarse,            // driver Lipschitz bound L satisfies L*dt >= 1
  truncation_not_stabilized,  // no k in the schedule bounded its own solution
  north_pole,                 // stereographic chart undefined at the north pole
};

// Stable UpperCamelCase name used on stderr and in test assertions.
const char* errc_name(errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const noexcept { return code_; }
  const char* name() const noexcept { return errc_name(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bsdelab
