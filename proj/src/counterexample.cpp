#include "bsdelab/counterexample.hpp"

#include <cmath>

#include "bsdelab/norms.hpp"

namespace bsdelab {

std::array<double, 8> christoffel(double x1, double x2) {
  const double x[2] = {x1, x2};
  const double pref = -2.0 / (1.0 + x1 * x1 + x2 * x2);
  std::array<double, 8> g{};
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double v = x[j] * (i == k ? 1.0 : 0.0) +
                         x[i] * (j == k ? 1.0 : 0.0) -
                         x[k] * (i == j ? 1.0 : 0.0);
        g[k * 4 + i * 2 + j] = pref * v;
      }
  return g;
}

std::array<double, 2> stereographic(const std::array<double, 3>& p) {
  const double denom = 1.0 - p[2];
  if (std::abs(denom) < 1e-12)
    raise(errc::north_pole, "chart undefined at (0, 0, 1)");
  return {p[0] / denom, p[1] / denom};
}

SphereInstance build_instance(int N) {
  if (N < 2)
    raise(errc::shape_mismatch,
          "instance needs N >= 2 so the terminal sign actually branches");
  SphereInstance inst;
  inst.tree = build_tree(N, 1.0, 1);
  const TreeModel& model = inst.tree;
  const double pi = std::acos(-1.0);

  // eta = +/-pi by the sign of B_T, where B_T = 0 counts as positive.
  auto B = brownian_component(model, 0);
  std::vector<double> eta(model.leaf_count());
  for (std::size_t leaf = 0; leaf < eta.size(); ++leaf)
    eta[leaf] = B[N][leaf] >= 0.0 ? pi : -pi;

  inst.M = AdaptedProcess::make(model, Shape::scalar, false, true, 1);
  inst.M.values = backward_means(model, eta, 1);
  inst.H = represent_z(inst.M);

  inst.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, 2);
  inst.Z = AdaptedProcess::make(model, Shape::vector_n, true, false, 2);
  inst.A = AdaptedProcess::make(model, Shape::matrix_nn, true, false, 2);

  for (int k = 0; k < N; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      const double m = inst.M.at(k, u);
      const double c = std::cos(m), s = std::sin(m);
      const double hh = inst.H.at(k, u, 0, 0, 0);
      inst.Y.at(k, u, 0) = c + 1.0;
      inst.Y.at(k, u, 1) = s;
      const double z1 = -s * hh, z2 = c * hh;
      inst.Z.at(k, u, 0, 0, 0) = z1;
      inst.Z.at(k, u, 1, 0, 0) = z2;
      // A row i collects the Christoffel contraction so that A Z equals the
      // geodesic drift (|H|^2/2) U of the circle-valued martingale.
      const auto gam = christoffel(c, s);
      for (int i = 0; i < 2; ++i) {
        inst.A.at(k, u, i, 0, 0) =
            0.5 * (gam[i * 4 + 0] * z1 + 2.0 * gam[i * 4 + 1] * z2);
        inst.A.at(k, u, i, 1, 0) = 0.5 * (gam[i * 4 + 3] * z2);
      }
    }
  // Exact terminal: U_T = (-1, 0) bitwise, so Y_T = 0 (libm cos/sin at the
  // floating-point pi would leak ~1e-16 into the terminal condition).
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf) {
    inst.Y.at(N, leaf, 0) = 0.0;
    inst.Y.at(N, leaf, 1) = 0.0;
  }
  return inst;
}

double residual(const SphereInstance& inst) {
  LinearCoefficients coeffs = LinearCoefficients::zeros(inst.tree, 2);
  coeffs.A = inst.A;
  AdaptedProcess f = linear_driver_values(coeffs, inst.Y, inst.Z);
  return expected_peak_defect(inst.Y, inst.Z, f);
}

std::vector<CounterexampleRow> non_uniqueness_report(
    const std::vector<int>& Ns) {
  std::vector<CounterexampleRow> rows;
  rows.reserve(Ns.size());
  for (int N : Ns) {
    SphereInstance inst = build_instance(N);
    CounterexampleRow row;
    row.N = N;
    row.residual = residual(inst);
    row.sup_Y = sup_norm(inst.Y);
    row.bmo_Z = bmo_norm(inst.Z);
    row.bmo_A = bmo_norm(inst.A);
    MatrixExponential ex = stochastic_exponential(inst.A);
    row.rp_125 = reverse_hoelder_probe(ex, 1.25, false).rp_ratio;
    row.rp_15 = reverse_hoelder_probe(ex, 1.5, false).rp_ratio;
    ReverseHoelderReport two = reverse_hoelder_probe(ex, 2.0, false);
    row.rp_2 = two.rp_ratio;
    row.mp_2 = two.mp_norm;
    row.rp_3 = reverse_hoelder_probe(ex, 3.0, false).rp_ratio;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bsdelab
