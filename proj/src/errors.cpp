#include "bsdelab/errors.hpp"

namespace bsdelab {

const char* errc_name(errc code) noexcept {
  switch (code) {
    case errc::budget_exceeded: return "BudgetExceeded";
    case errc::invalid_dim: return "InvalidDim";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::unsliceable: return "Unsliceable";
    case errc::singular_step: return "SingularStep";
    case errc::measure_not_equivalent: return "MeasureNotEquivalent";
    case errc::not_triangular: return "NotTriangular";
    case errc::no_contraction: return "NoContraction";
    case errc::max_iterations: return "MaxIterations";
    case errc::singular_factor: return "SingularFactor";
    case errc::step_too_coarse: return "StepTooCoarse";
    case errc::truncation_not_stabilized: return "TruncationNotStabilized";
    case errc::north_pole: return "NorthPole";
  }
  return "UnknownError";
}

}  // namespace bsdelab
