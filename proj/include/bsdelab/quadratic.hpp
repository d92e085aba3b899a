// Triangular quadratic systems: driver metadata and checkers, the smooth
// truncation, the Lipschitz solver, the truncation cascade, the a-priori
// bound certificate, and the stability experiment.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsdelab/linear.hpp"
#include "bsdelab/process.hpp"

namespace bsdelab {

// A-priori-bound data: a positively spanning family {a_m} and a constant
// rate rho >= 0 such that a_m^T f(t,w,y,z) <= rho + |a_m^T z|^2 / 2.
struct ABData {
  std::vector<std::vector<double>> a_vecs;
  double rho = 0.0;
};

// An evaluable random field f(level, node, y, z) -> out, all of size n (z has
// n*d entries, axis-major within each row: z[i*d + axis]).  eval must be a
// pure function of its arguments.  L bounds the y-sensitivity (the per-node
// implicit solve is an L*dt-contraction); kappa is the sublinear modulus used
// by the triangularity probe, default sqrt(1+x) - 1.
struct Driver {
  int n = 1;
  std::function<void(int level, std::size_t node, const double* y,
                     const double* z, double* out)>
      eval;
  double L = 0.0;
  std::function<double(double)> kappa;
  std::optional<ABData> ab;
  std::string name = "custom";
};

double default_kappa(double x);

// Smoothing profile: identity on [0,1], the concave C^1 blend
// 1 + (x-1) - (x-1)^2/4 on [1,3], constant 2 beyond.  Nondecreasing,
// psi(x) <= x, derivative in [0,1].
double psi(double x);

// Radial projection pi_k(z) = (k/|z|) psi(|z|/k) z (identity for |z| <= k,
// norm bounded by 2k); |z| is the Euclidean magnitude of all n*d entries.
void project_z(double k, int len, const double* z, double* out);

// Wraps the driver so eval sees pi_k(z) -- z has base.n * dim entries, which
// eval alone cannot know, hence the explicit dim.  Metadata is copied
// unchanged (the a-priori bound for the truncated field holds with amplified
// data (rho + max_m |a_m|^2, {2 a_m}), which callers construct when needed).
Driver truncate_driver(const Driver& base, double k, int dim);

// True iff nonnegative combinations of a_vecs reach every one of the 2n
// targets +/-e_i (then the positive cone is all of R^n).  Decided by
// nonnegative least squares with residual tolerance 1e-9.
bool positively_spans(const std::vector<std::vector<double>>& a_vecs, int n);

struct ABGrid {
  double y_lo = -2, y_hi = 2;
  double z_lo = -3, z_hi = 3;
  int points = 5;       // grid points per scalar dimension
  int node_cap = 4;     // nodes sampled per level
  int level_stride = 0; // 0 = auto (about 4 levels)
};

struct ABReport {
  double worst_margin = 0.0;  // min over samples of rho + |a^T z|^2/2 - a^T f
  bool pass = false;          // worst_margin >= -1e-9
  long samples = 0;
};

// Samples the a-priori-bound inequality on a product grid of nodes, y-box and
// z-box.  Sampling can only falsify, never certify; the report says so.
ABReport check_ab(const TreeModel& model, const Driver& driver,
                  const ABGrid& grid);

struct TriangularProbe {
  std::uint64_t seed = 1;
  int trials = 2000;
  double y_range = 2.0;
  double z_range = 8.0;
};

struct TriangularReport {
  double worst_ratio = 0.0;  // observed |df^i| over the allowed bound
  bool pass = false;         // worst_ratio <= 1 + 1e-6
};

// Finite-difference probe of the triangular growth condition: vary one
// z-block at a time and compare |f^i(y,z') - f^i(y,z)| against
//   L (1 + |z| + |z'|) |dz^j|                                  for j <= i,
//   L (1 + |y| + |y| + kappa(|z|) + kappa(|z'|)) |dz^j|        for j >  i,
// so above-diagonal dependence must be sub-quadratic.
TriangularReport check_triangular(const TreeModel& model, const Driver& driver,
                                  double L,
                                  const std::function<double(double)>& kappa,
                                  const TriangularProbe& probe);

// Backward solver for z-explicit drivers: Z from child differences, then the
// implicit scalar system Y_u = mean(Y_children) + f(u, Y_u, Z_u) dt by damped
// fixed point.  Requires L*dt < 1 (StepTooCoarse); MaxIterations if a node
// solve stalls.  residual_sup measured against this driver.
Solution solve_lipschitz(const TreeModel& model, const std::vector<double>& xi,
                         const Driver& driver);

// Truncation cascade: solve with pi_k for k along the schedule (default 2,
// 4, ..., 256) and accept the first k whose solution satisfies sup|Z| <= k
// and sup|Y| <= k; the accepted pair then satisfies the untruncated equation
// (asserted: residual against the base driver <= 1e-10 for d = 1).
// TruncationNotStabilized when no k accepts; the diagnostic k_trace records
// {k, sup_Z, sup_Y} for every attempt.
Solution solve_quadratic(const TreeModel& model, const std::vector<double>& xi,
                         const Driver& driver,
                         const std::vector<double>& k_schedule = {});

struct ABCertificate {
  std::vector<double> margins;  // per a_m: min over nodes of the slack
  double worst = 0.0;
  bool pass = false;
};

// Certifies the a-priori bound on a solved pair: for each a_m the process
// R = exp(2 a_m^T Y + 2 rho t) must grow per step at least by the envelope
//   prod_axis cosh(2 (a_m^T Z)_axis sqrt(dt)) * exp(-|a_m^T Z|^2 dt),
// an exact consequence of a_m^T f <= rho + |a_m^T z|^2/2 and the one-step
// tree algebra, valid at every step size.  Checked with slack tol*dt,
// tol = 10 (1 + max R) dt; a violated node drives the margin negative (the
// negative control Y -> Y + t is caught this way).
ABCertificate ab_supermartingale_check(const Solution& sol, const ABData& ab);

struct StabilityRow {
  double eps = 0, lhs = 0, rhs = 0, ratio = 0;
};

// Compares two solvable instances: LHS = sup|Y2-Y1| + bmo(Z2-Z1), RHS =
// sup|xi2-xi1| + bmo_half of (f2-f1)(Y1, Z1).  ratio = LHS/RHS (0 when both
// sides vanish).
StabilityRow stability_compare(const TreeModel& model,
                               const std::vector<double>& xi1,
                               const Driver& d1,
                               const std::vector<double>& xi2,
                               const Driver& d2, double eps_label);

// --- builtin drivers and terminals ------------------------------------------

// f = 0 (n = 1); a-priori data {+1, -1}, rho = 0.
Driver make_zero_driver();

// f(z) = |z|^2/2 (n = 1, d = 1); a-priori data {+1, -1}, rho = 0.
Driver make_colehopf_driver();

// f1 = (z1)^2/2, f2 = z1 z2 (n = 2, d = 1); a-priori data
// {(1,1), (1,-1), (-1,0)}, rho = 0 (axis directions (0,+/-1) do NOT satisfy
// the bound for f2, so they are deliberately absent).
Driver make_tri2_driver();

// Terminal-condition builders over the leaf values of B (first axis).
std::vector<double> terminal_bt(const TreeModel& model);        // xi = B_T
std::vector<double> terminal_sign_bt(const TreeModel& model);   // +/-1, >= 0 convention
std::vector<double> terminal_cos_bt(const TreeModel& model);    // cos(B_T)
std::vector<double> terminal_tri2(const TreeModel& model);      // (sign, cos) pairs
std::vector<double> terminal_zero(const TreeModel& model, int n);

// log of the exact tree expectation of e^xi: the ground truth for the scalar
// driver |z|^2/2 (Y_0 = log E[exp xi]).
double colehopf_oracle(const TreeModel& model, const std::vector<double>& xi);

}  // namespace bsdelab
