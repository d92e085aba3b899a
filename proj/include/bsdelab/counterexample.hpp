// The sphere-martingale instance: a closed-form nontrivial pair (Y, Z) with
// Y_T = 0 that solves Y = int(A Z) dt - int Z dB up to a one-step defect
// vanishing under refinement, together with the reverse-Hoelder failure
// experiment for the stochastic exponential of its coefficient A.
//
// Construction (d = 1, n = 2): eta = +pi where B_T >= 0 and -pi otherwise
// (the boundary case B_T = 0 counts as >= 0 and has positive probability on
// even depths, so the convention is load-bearing); M is the exact martingale
// of eta with integrand H; U = (cos M, sin M) walks the unit circle and is
// overridden by the exact value (-1, 0) at the leaves so Y = U + (1,0)
// vanishes there bitwise; Z = H(-sin M, cos M) is tangent to the circle; and
// A is built from the Christoffel symbols of the stereographic chart,
// evaluated at U, scaled so that A Z = (|H|^2/2) U is exactly the drift the
// closed-form pair needs.
#pragma once

#include <array>
#include <vector>

#include "bsdelab/linear.hpp"
#include "bsdelab/process.hpp"

namespace bsdelab {

// Christoffel symbols of the sphere metric in the stereographic chart:
// G^k_ij = -2/(1+|x|^2) * (x_j d_ik + x_i d_jk - x_k d_ij), packed as
// [k*4 + i*2 + j]; symmetric in (i, j).
std::array<double, 8> christoffel(double x1, double x2);

// Stereographic projection from the unit sphere minus the north pole:
// (x1, x2, y) -> (x1/(1-y), x2/(1-y)).  Throws NorthPole when y = 1.
std::array<double, 2> stereographic(const std::array<double, 3>& p);

struct SphereInstance {
  TreeModel tree;     // d = 1
  AdaptedProcess M;   // scalar, includes terminal: the +/-pi martingale
  AdaptedProcess H;   // scalar with d-vector entry: integrand of M
  AdaptedProcess Y;   // vector_2, includes terminal
  AdaptedProcess Z;   // vector_2, d-vector entries
  AdaptedProcess A;   // matrix_22, d-vector entries
};

// Builds the instance on a depth-N tree (N >= 2).
SphereInstance build_instance(int N);

// E[ max over the path of the one-step defect of (Y, Z) against drift A Z ].
// The essential supremum of the same defect is constant in N (a node whose
// conditional jump of M is +/-pi survives at every depth), so the report
// averages the pathwise peak, which decreases under refinement.
double residual(const SphereInstance& inst);

struct CounterexampleRow {
  int N = 0;
  double residual = 0, sup_Y = 0, bmo_Z = 0, bmo_A = 0;
  double rp_125 = 0, rp_15 = 0, rp_2 = 0, rp_3 = 0, mp_2 = 0;
};

// One row per depth: defect, solution size, bmo norms, and reverse-Hoelder
// probes of the stochastic exponential of A at p in {1.25, 1.5, 2, 3} plus
// the M^2 norm.  Serialized by the CLI as CSV.
std::vector<CounterexampleRow> non_uniqueness_report(const std::vector<int>& Ns);

}  // namespace bsdelab
