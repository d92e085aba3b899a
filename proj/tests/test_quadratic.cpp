// Quadratic machinery: the smooth truncation, spanning/bound/growth checkers,
// the Lipschitz and truncation-cascade solvers, the supermartingale
// certificate with its negative controls, and the stability comparison.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <vector>

#include "bsdelab/linear.hpp"
#include "bsdelab/quadratic.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/tree.hpp"

using namespace bsdelab;

TEST_CASE("smoothing profile: pinned values, monotone, dominated by x") {
  CHECK(psi(0.0) == 0.0);
  CHECK(psi(0.5) == 0.5);   // identity region
  CHECK(psi(1.0) == 1.0);
  CHECK(psi(2.0) == doctest::Approx(1.75).epsilon(1e-15));  // blend region
  CHECK(psi(3.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(psi(4.0) == 2.0);   // plateau
  CHECK(psi(100.0) == 2.0);
  double prev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = i * 0.01;
    const double p = psi(x);
    CHECK(p <= x + 1e-15);
    CHECK(p >= prev - 1e-15);           // nondecreasing
    CHECK(p - prev <= 0.01 + 1e-12);    // slope at most 1
    prev = p;
  }
}

TEST_CASE("radial projection: exact identity inside, capped outside") {
  const double z_small[2] = {0.3, -0.4};  // |z| = 0.5 <= k
  double out[2];
  project_z(1.0, 2, z_small, out);
  CHECK(out[0] == 0.3);
  CHECK(out[1] == -0.4);

  const double z_big[2] = {30.0, -40.0};  // |z| = 50, far past 3k
  project_z(1.0, 2, z_big, out);
  const double mag = std::hypot(out[0], out[1]);
  CHECK(mag == doctest::Approx(2.0).epsilon(1e-14));  // cap at 2k
  // direction preserved
  CHECK(out[0] * z_big[1] == doctest::Approx(out[1] * z_big[0]).epsilon(1e-12));

  for (double r : {0.5, 1.0, 1.7, 2.9, 3.0, 8.0}) {
    const double z1[1] = {r};
    double o1[1];
    project_z(1.0, 1, z1, o1);
    CHECK(std::abs(o1[0]) <= 2.0 + 1e-14);
    CHECK(o1[0] == doctest::Approx(psi(r)).epsilon(1e-14));
  }
}

TEST_CASE("positive spanning of the builtin bound families") {
  CHECK(positively_spans({{1.0}, {-1.0}}, 1));
  CHECK(positively_spans({{1, 1}, {1, -1}, {-1, 0}}, 2));
  CHECK_FALSE(positively_spans({{1, 0}, {0, 1}}, 2));  // no negative cone
  CHECK_FALSE(positively_spans({{1.0}}, 1));
  try {
    positively_spans({{1, 0}, {1}}, 2);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::shape_mismatch);
  }
}

TEST_CASE("sublinear modulus") {
  CHECK(default_kappa(0.0) == 0.0);
  CHECK(default_kappa(3.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(default_kappa(8.0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("truncated driver: identity inside the ball, bounded outside") {
  const Driver base = make_colehopf_driver();
  const Driver cut = truncate_driver(base, 2.0, 1);
  double y = 0, z, f_base, f_cut;
  z = 1.0;
  base.eval(0, 0, &y, &z, &f_base);
  cut.eval(0, 0, &y, &z, &f_cut);
  CHECK(f_base == 0.5);
  CHECK(f_cut == f_base);  // bitwise: the projection copies small z
  z = 10.0;
  cut.eval(0, 0, &y, &z, &f_cut);
  CHECK(f_cut == doctest::Approx(8.0).epsilon(1e-14));  // |pi_2(10)| = 4
  for (double big : {5.0, 20.0, 1000.0}) {
    z = big;
    cut.eval(0, 0, &y, &z, &f_cut);
    CHECK(f_cut <= 8.0 + 1e-12);  // (2k)^2 / 2
  }
}

TEST_CASE("bound sampler accepts the builtins and rejects a broken family") {
  const TreeModel m = build_tree(6, 1.0, 1);
  CHECK(check_ab(m, make_zero_driver(), {}).pass);
  CHECK(check_ab(m, make_colehopf_driver(), {}).pass);
  CHECK(check_ab(m, make_tri2_driver(), {}).pass);

  // The axis direction (0, 1) sees a^T f = z1 z2, which no |a^T z|^2/2
  // can dominate: the sampler must find a violation.
  Driver broken = make_tri2_driver();
  broken.ab = ABData{{{0.0, 1.0}}, 0.0};
  const ABReport rep = check_ab(m, broken, {});
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_margin < -1.0);

  Driver bare = make_zero_driver();
  bare.ab.reset();
  CHECK_THROWS_AS(check_ab(m, bare, {}), Error);
}

TEST_CASE("triangular growth probe: builtin passes, quadratic upper block fails") {
  const TreeModel m = build_tree(4, 1.0, 1);
  const TriangularReport ok =
      check_triangular(m, make_tri2_driver(), 1.0, default_kappa, {});
  CHECK(ok.pass);
  CHECK(ok.worst_ratio < 1.0);

  Driver bad;
  bad.n = 2;
  bad.L = 1.0;
  bad.kappa = default_kappa;
  bad.name = "upper-quadratic";
  bad.eval = [](int, std::size_t, const double*, const double* z, double* out) {
    out[0] = 0.5 * z[1] * z[1];  // row 1 quadratic in row 2's z: not allowed
    out[1] = 0.0;
  };
  const TriangularReport rep =
      check_triangular(m, bad, 1.0, default_kappa, {});
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_ratio > 1.05);
}

TEST_CASE("Lipschitz solver reproduces a linear oracle") {
  const RandomLinearInstance inst = random_linear_instance(41);
  const TreeModel& m = inst.model;
  const int n = inst.n;
  const int d = m.dim;
  Driver drv;
  drv.n = n;
  double l = 0;
  for (int k = 0; k < m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      l = std::max(l, inst.coeffs.alpha.node_abs(k, u));
  drv.L = l;
  drv.eval = [&inst, n, d](int k, std::size_t u, const double* y,
                           const double* z, double* out) {
    for (int i = 0; i < n; ++i) {
      double acc = inst.coeffs.beta.at(k, u, i);
      for (int j = 0; j < n; ++j) {
        acc += inst.coeffs.alpha.at(k, u, i, j) * y[j];
        for (int ax = 0; ax < d; ++ax)
          acc += inst.coeffs.A.at(k, u, i, j, ax) * z[j * d + ax];
      }
      out[i] = acc;
    }
  };
  const Solution s = solve_lipschitz(m, inst.xi, drv);
  const Solution ref = solve_backward_exact(m, inst.xi, inst.coeffs);
  double worst = 0;
  for (std::size_t k = 0; k < s.Y.values.size(); ++k)
    for (std::size_t i = 0; i < s.Y.values[k].size(); ++i)
      worst = std::max(worst,
                       std::abs(s.Y.values[k][i] - ref.Y.values[k][i]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("Lipschitz solver refuses steps coarser than the y-sensitivity") {
  const TreeModel m = build_tree(4, 1.0, 1);  // dt = 1/4
  Driver drv = make_zero_driver();
  drv.L = 5.0;  // L dt = 1.25 >= 1
  try {
    solve_lipschitz(m, terminal_bt(m), drv);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::step_too_coarse);
  }
  drv.L = 0.0;
  CHECK_THROWS_AS(solve_lipschitz(m, std::vector<double>(3, 0.0), drv), Error);
}

TEST_CASE("terminal builders") {
  const TreeModel m = build_tree(2, 1.0, 1);
  const auto bt = terminal_bt(m);
  const double h = m.step;
  REQUIRE(bt.size() == 4);
  CHECK(bt[0] == -2 * h);
  CHECK(bt[1] == 0.0);
  CHECK(bt[2] == 0.0);
  CHECK(bt[3] == 2 * h);
  const auto sgn = terminal_sign_bt(m);
  CHECK(sgn == std::vector<double>{-1.0, 1.0, 1.0, 1.0});  // >= 0 is plus
  const auto cs = terminal_cos_bt(m);
  CHECK(cs[0] == doctest::Approx(std::cos(2 * h)).epsilon(1e-15));
  CHECK(cs[1] == 1.0);
  const auto tr2 = terminal_tri2(m);
  REQUIRE(tr2.size() == 8);
  CHECK(tr2[0] == -1.0);                  // sign component, leaf 0
  CHECK(tr2[1] == doctest::Approx(std::cos(2 * h)).epsilon(1e-15));
  CHECK(tr2[6] == 1.0);
  const auto zb = terminal_zero(m, 3);
  CHECK(zb.size() == 12);
  for (double v : zb) CHECK(v == 0.0);
}

TEST_CASE("exponential-expectation oracle: frozen value and shape guard") {
  const TreeModel m = build_tree(4, 1.0, 1);
  CHECK(colehopf_oracle(m, terminal_bt(m)) ==
        doctest::Approx(0.480458027833).epsilon(1e-12));
  CHECK(colehopf_oracle(m, terminal_zero(m, 1)) == 0.0);
  CHECK_THROWS_AS(colehopf_oracle(m, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("zero driver and zero terminal give the zero solution") {
  const TreeModel m = build_tree(5, 1.0, 1);
  const Solution s = solve_quadratic(m, terminal_zero(m, 1),
                                     make_zero_driver());
  for (const auto& level : s.Y.values)
    for (double v : level) CHECK(v == 0.0);
  CHECK(s.diag.accepted_k == 2);  // first scheduled level already bounds 0
  CHECK(s.diag.residual_sup == 0.0);
}

TEST_CASE("truncation cascade on the exponential driver") {
  const TreeModel m = build_tree(8, 1.0, 1);
  const Solution s =
      solve_quadratic(m, terminal_bt(m), make_colehopf_driver());
  // Closed form: Y = B + (T - t)/2 with Z = 1, so the root is T/2.
  CHECK(s.Y.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.diag.accepted_k == 4);
  REQUIRE(s.diag.k_trace.size() == 2);   // k = 2 rejected, k = 4 accepted
  CHECK(s.diag.k_trace[0][0] == 2.0);
  CHECK(s.diag.k_trace[1][0] == 4.0);
  CHECK(s.diag.k_trace[0][2] > 2.0);     // sup |Y| broke the k = 2 ball
  CHECK(s.diag.residual_sup <= 1e-10);
  for (int k = 0; k < 8; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      CHECK(s.Z.at(k, u, 0, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  // Same accepted level at a finer step.
  const TreeModel m12 = build_tree(12, 1.0, 1);
  const Solution s12 =
      solve_quadratic(m12, terminal_bt(m12), make_colehopf_driver());
  CHECK(s12.diag.accepted_k == 4);
  CHECK(s12.Y.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("cascade reports failure when the schedule never stabilizes") {
  const TreeModel m = build_tree(12, 1.0, 1);
  try {
    solve_quadratic(m, terminal_bt(m), make_colehopf_driver(), {2.0});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::truncation_not_stabilized);
  }
}

TEST_CASE("triangular system agrees with its stage-by-stage solution") {
  const TreeModel m = build_tree(6, 1.0, 1);
  const Solution full =
      solve_quadratic(m, terminal_tri2(m), make_tri2_driver());

  // Stage 1: the scalar exponential equation for the sign terminal.
  const Solution first =
      solve_quadratic(m, terminal_sign_bt(m), make_colehopf_driver());
  // Stage 2: linear in (y2, z2) once z1 is known: drift coefficient Z1.
  LinearCoefficients c = LinearCoefficients::zeros(m, 1);
  for (int k = 0; k < m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      c.A.at(k, u, 0, 0, 0) = first.Z.at(k, u, 0, 0, 0);
  const Solution second = solve_backward_exact(m, terminal_cos_bt(m), c);

  double worst = 0;
  for (int k = 0; k <= m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u) {
      worst = std::max(worst,
                       std::abs(full.Y.at(k, u, 0) - first.Y.at(k, u, 0)));
      worst = std::max(worst,
                       std::abs(full.Y.at(k, u, 1) - second.Y.at(k, u, 0)));
    }
  CHECK(worst <= 1e-6);
}

TEST_CASE("supermartingale certificate accepts solved builtins") {
  const TreeModel m4 = build_tree(4, 1.0, 1);
  const Solution zero =
      solve_quadratic(m4, terminal_zero(m4, 1), make_zero_driver());
  const ABCertificate c0 =
      ab_supermartingale_check(zero, *make_zero_driver().ab);
  CHECK(c0.pass);

  const TreeModel m8 = build_tree(8, 1.0, 1);
  const Solution ch =
      solve_quadratic(m8, terminal_bt(m8), make_colehopf_driver());
  const ABCertificate c1 =
      ab_supermartingale_check(ch, *make_colehopf_driver().ab);
  CHECK(c1.pass);
  CHECK(c1.worst >= -1e-9);
  CHECK(c1.margins.size() == 2);

  const TreeModel m10 = build_tree(10, 1.0, 1);
  const Solution tri =
      solve_quadratic(m10, terminal_tri2(m10), make_tri2_driver());
  const ABCertificate c2 =
      ab_supermartingale_check(tri, *make_tri2_driver().ab);
  CHECK(c2.pass);
  CHECK(c2.margins.size() == 3);
}

TEST_CASE("certificate catches an upward-shifted solution") {
  const TreeModel m = build_tree(10, 1.0, 1);
  Solution tri = solve_quadratic(m, terminal_tri2(m), make_tri2_driver());
  for (int k = 0; k <= m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      for (int i = 0; i < 2; ++i) tri.Y.at(k, u, i) += m.time_at(k);
  const ABCertificate cert =
      ab_supermartingale_check(tri, *make_tri2_driver().ab);
  CHECK_FALSE(cert.pass);
  CHECK(cert.worst == doctest::Approx(-0.080868).epsilon(1e-4));
}

TEST_CASE("certificate catches a downward-shifted scalar solution") {
  const TreeModel m = build_tree(12, 1.0, 1);
  Solution ch = solve_quadratic(m, terminal_bt(m), make_colehopf_driver());
  for (int k = 0; k <= m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      ch.Y.at(k, u, 0) -= m.time_at(k);
  const ABCertificate cert =
      ab_supermartingale_check(ch, *make_colehopf_driver().ab);
  CHECK_FALSE(cert.pass);
  CHECK(cert.worst < -1.0);
}

TEST_CASE("certificate rejects mismatched bound vectors") {
  const TreeModel m = build_tree(4, 1.0, 1);
  const Solution s =
      solve_quadratic(m, terminal_zero(m, 1), make_zero_driver());
  CHECK_THROWS_AS(ab_supermartingale_check(s, ABData{{{1.0, 0.0}}, 0.0}),
                  Error);
}

TEST_CASE("stability: identical instances compare to zero") {
  const TreeModel m = build_tree(6, 1.0, 1);
  const Driver drv = make_colehopf_driver();
  const auto xi = terminal_bt(m);
  const StabilityRow row = stability_compare(m, xi, drv, xi, drv, 0.0);
  CHECK(row.lhs == 0.0);
  CHECK(row.ratio == 0.0);
}

TEST_CASE("stability under a terminal shift: the ratio is one") {
  const TreeModel m = build_tree(6, 1.0, 1);
  const Driver drv = make_colehopf_driver();
  const auto xi1 = terminal_bt(m);
  for (double eps : {1.0, 0.5, 0.25}) {
    auto xi2 = xi1;
    for (double& v : xi2) v += eps;
    const StabilityRow row = stability_compare(m, xi1, drv, xi2, drv, eps);
    CHECK(row.eps == eps);
    CHECK(row.rhs == doctest::Approx(eps).epsilon(1e-9));
    CHECK(row.ratio == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("stability under a driver shift: the ratio is one") {
  const TreeModel m = build_tree(6, 1.0, 1);
  const Driver base = make_colehopf_driver();
  const double eps = 0.25;
  Driver shifted = base;
  const auto inner = base.eval;
  shifted.eval = [inner, eps](int k, std::size_t u, const double* y,
                              const double* z, double* out) {
    inner(k, u, y, z, out);
    out[0] += eps;
  };
  shifted.name = "colehopf+eps";
  const auto xi = terminal_bt(m);
  const StabilityRow row = stability_compare(m, xi, base, xi, shifted, eps);
  // Y2 - Y1 = eps (T - t) exactly, so both sides equal eps T.
  CHECK(row.lhs == doctest::Approx(eps).epsilon(1e-9));
  CHECK(row.rhs == doctest::Approx(eps).epsilon(1e-9));
  CHECK(row.ratio == doctest::Approx(1.0).epsilon(1e-9));
}
