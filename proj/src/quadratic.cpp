#include "bsdelab/quadratic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "bsdelab/norms.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

double default_kappa(double x) { return std::sqrt(1.0 + x) - 1.0; }

double psi(double x) {
  if (x <= 1.0) return x;
  if (x >= 3.0) return 2.0;
  const double t = x - 1.0;
  return 1.0 + t - 0.25 * t * t;
}

void project_z(double k, int len, const double* z, double* out) {
  double s = 0;
  for (int c = 0; c < len; ++c) s += z[c] * z[c];
  const double mag = std::sqrt(s);
  if (mag <= k) {  // identity branch kept exact (no scale round-trip)
    std::memcpy(out, z, sizeof(double) * static_cast<std::size_t>(len));
    return;
  }
  const double scale = k / mag * psi(mag / k);
  for (int c = 0; c < len; ++c) out[c] = scale * z[c];
}

Driver truncate_driver(const Driver& base, double k, int dim) {
  Driver out = base;
  const int len = base.n * dim;
  auto inner = base.eval;
  out.eval = [inner, k, len](int level, std::size_t node, const double* y,
                             const double* z, double* f) {
    std::vector<double> zp(len);
    project_z(k, len, z, zp.data());
    inner(level, node, y, zp.data(), f);
  };
  out.name = base.name + "|trunc";
  return out;
}

namespace {

// Lawson-Hanson nonnegative least squares: min |A x - b| over x >= 0.
// Returns the residual norm.  Dimensions here are tiny (n <= 4, m <= 16).
double nnls_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const int m = static_cast<int>(A.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(m, false);
  const double tol = 1e-12 * (1.0 + b.norm());

  for (int outer = 0; outer < 3 * m + 10; ++outer) {
    Eigen::VectorXd w = A.transpose() * (b - A * x);
    int best = -1;
    double best_w = tol;
    for (int j = 0; j < m; ++j)
      if (!passive[j] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;

    for (int inner = 0; inner < 3 * m + 10; ++inner) {
      std::vector<int> idx;
      for (int j = 0; j < m; ++j)
        if (passive[j]) idx.push_back(j);
      Eigen::MatrixXd Ap(A.rows(), idx.size());
      for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(c) = A.col(idx[c]);
      Eigen::VectorXd s =
          Ap.completeOrthogonalDecomposition().solve(b);
      if ([&] {
            for (int c = 0; c < s.size(); ++c)
              if (s(c) <= 0) return false;
            return true;
          }()) {
        x.setZero();
        for (std::size_t c = 0; c < idx.size(); ++c) x(idx[c]) = s(c);
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < idx.size(); ++c)
        if (s(c) <= 0)
          alpha = std::min(alpha, x(idx[c]) / (x(idx[c]) - s(c)));
      for (std::size_t c = 0; c < idx.size(); ++c)
        x(idx[c]) += alpha * (s(c) - x(idx[c]));
      for (std::size_t c = 0; c < idx.size(); ++c)
        if (x(idx[c]) <= 1e-14) {
          x(idx[c]) = 0;
          passive[idx[c]] = false;
        }
    }
  }
  return (A * x - b).norm();
}

}  // namespace

bool positively_spans(const std::vector<std::vector<double>>& a_vecs, int n) {
  if (a_vecs.empty()) return false;
  Eigen::MatrixXd A(n, a_vecs.size());
  for (std::size_t m = 0; m < a_vecs.size(); ++m) {
    if (static_cast<int>(a_vecs[m].size()) != n)
      raise(errc::shape_mismatch, "a-priori-bound vector has wrong length");
    for (int i = 0; i < n; ++i) A(i, m) = a_vecs[m][i];
  }
  for (int i = 0; i < n; ++i)
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
      target(i) = sign;
      if (nnls_residual(A, target) > 1e-9) return false;
    }
  return true;
}

ABReport check_ab(const TreeModel& model, const Driver& driver,
                  const ABGrid& grid) {
  if (!driver.ab)
    raise(errc::shape_mismatch, "driver carries no a-priori-bound data");
  const ABData& ab = *driver.ab;
  const int n = driver.n;
  const int d = model.dim;
  const int stride =
      grid.level_stride > 0 ? grid.level_stride
                            : std::max(1, model.depth / 4);

  ABReport rep;
  rep.worst_margin = std::numeric_limits<double>::infinity();

  const int zlen = n * d;
  std::vector<int> yi(n, 0), zi(zlen, 0);
  std::vector<double> y(n), z(zlen), f(n);
  auto grid_value = [&](int ticks, double lo, double hi) {
    return grid.points == 1 ? 0.5 * (lo + hi)
                            : lo + (hi - lo) * ticks / (grid.points - 1);
  };

  for (int level = 0; level < model.depth; level += stride) {
    const std::size_t nodes = model.nodes_at(level);
    const std::size_t picks =
        std::min<std::size_t>(nodes, static_cast<std::size_t>(grid.node_cap));
    for (std::size_t pick = 0; pick < picks; ++pick) {
      const std::size_t node = pick * (nodes / picks);
      std::fill(yi.begin(), yi.end(), 0);
      for (;;) {  // odometer over the y grid
        for (int i = 0; i < n; ++i) y[i] = grid_value(yi[i], grid.y_lo, grid.y_hi);
        std::fill(zi.begin(), zi.end(), 0);
        for (;;) {  // odometer over the z grid
          for (int c = 0; c < zlen; ++c)
            z[c] = grid_value(zi[c], grid.z_lo, grid.z_hi);
          driver.eval(level, node, y.data(), z.data(), f.data());
          for (const auto& a : ab.a_vecs) {
            double af = 0, az_sq = 0;
            for (int i = 0; i < n; ++i) af += a[i] * f[i];
            for (int l = 0; l < d; ++l) {
              double az = 0;
              for (int i = 0; i < n; ++i) az += a[i] * z[i * d + l];
              az_sq += az * az;
            }
            rep.worst_margin =
                std::min(rep.worst_margin, ab.rho + 0.5 * az_sq - af);
            ++rep.samples;
          }
          int c = 0;
          while (c < zlen && ++zi[c] == grid.points) zi[c++] = 0;
          if (c == zlen) break;
        }
        int i = 0;
        while (i < n && ++yi[i] == grid.points) yi[i++] = 0;
        if (i == n) break;
      }
    }
  }
  rep.pass = rep.worst_margin >= -1e-9;
  return rep;
}

TriangularReport check_triangular(const TreeModel& model, const Driver& driver,
                                  double L,
                                  const std::function<double(double)>& kappa,
                                  const TriangularProbe& probe) {
  const int n = driver.n;
  const int d = model.dim;
  SplitMix64 rng(probe.seed);
  auto norm_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  TriangularReport rep;
  std::vector<double> y(n), z(n * d), z2(n * d), f(n), f2(n);
  for (int t = 0; t < probe.trials; ++t) {
    const int level = static_cast<int>(rng.next() % model.depth);
    const std::size_t node = rng.next() % model.nodes_at(level);
    for (int i = 0; i < n; ++i) y[i] = rng.uniform(-probe.y_range, probe.y_range);
    for (int c = 0; c < n * d; ++c)
      z[c] = rng.uniform(-probe.z_range, probe.z_range);
    const int i = static_cast<int>(rng.next() % n);
    const int j = static_cast<int>(rng.next() % n);
    z2 = z;
    for (int l = 0; l < d; ++l)
      z2[j * d + l] = rng.uniform(-probe.z_range, probe.z_range);

    driver.eval(level, node, y.data(), z.data(), f.data());
    driver.eval(level, node, y.data(), z2.data(), f2.data());
    double dz = 0;
    for (int l = 0; l < d; ++l) {
      const double e = z2[j * d + l] - z[j * d + l];
      dz += e * e;
    }
    dz = std::sqrt(dz);
    if (dz < 1e-12) continue;
    const double zn = norm_of(z), zn2 = norm_of(z2), yn = norm_of(y);
    const double bound =
        j <= i ? L * (1.0 + zn + zn2) * dz
               : L * (1.0 + 2.0 * yn + kappa(zn) + kappa(zn2)) * dz;
    if (bound <= 0) continue;
    rep.worst_ratio = std::max(rep.worst_ratio, std::abs(f2[i] - f[i]) / bound);
  }
  rep.pass = rep.worst_ratio <= 1.0 + 1e-6;
  return rep;
}

Solution solve_lipschitz(const TreeModel& model, const std::vector<double>& xi,
                         const Driver& driver) {
  const int n = driver.n;
  const int d = model.dim;
  if (xi.size() != model.leaf_count() * static_cast<std::size_t>(n))
    raise(errc::shape_mismatch, "terminal data does not hold n per leaf");
  if (!(driver.L * model.dt < 1.0))
    raise(errc::step_too_coarse,
          "y-sensitivity L = " + std::to_string(driver.L) +
              " needs L * dt < 1 for the per-node solve");

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  sol.Z = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  sol.Y.values[model.depth] = xi;

  const double zscale = 1.0 / (model.branching * model.step);
  std::vector<double> mean(n), ycur(n), ynext(n), f(n);

  for (int k = model.depth - 1; k >= 0; --k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      for (int i = 0; i < n; ++i) {
        for (int l = 0; l < d; ++l) {
          double acc = 0;
          for (int c = 0; c < model.branching; ++c)
            acc += TreeModel::increment_sign(c, l) *
                   sol.Y.at(k + 1, u * model.branching + c, i);
          sol.Z.at(k, u, i, 0, l) = acc * zscale;
        }
        if (model.branching == 2) {
          mean[i] =
              (sol.Y.at(k + 1, 2 * u, i) + sol.Y.at(k + 1, 2 * u + 1, i)) * 0.5;
        } else {
          mean[i] =
              ((sol.Y.at(k + 1, 4 * u, i) + sol.Y.at(k + 1, 4 * u + 1, i)) * 0.5 +
               (sol.Y.at(k + 1, 4 * u + 2, i) + sol.Y.at(k + 1, 4 * u + 3, i)) *
                   0.5) *
              0.5;
        }
        ycur[i] = mean[i];
      }
      // Damped fixed point for Y_u = mean + f(Y_u, Z_u) dt; the gate L dt < 1
      // makes the undamped map a contraction, damping only guards overshoot.
      double prev_step = std::numeric_limits<double>::infinity();
      double damp = 1.0;
      for (int it = 0;; ++it) {
        if (it >= 200)
          raise(errc::max_iterations,
                "node fixed point stalled at level " + std::to_string(k));
        ++sol.diag.iterations;
        driver.eval(k, u, ycur.data(), sol.Z.node_ptr(k, u), f.data());
        double step = 0;
        for (int i = 0; i < n; ++i) {
          const double prop = mean[i] + f[i] * model.dt;
          ynext[i] = ycur[i] + damp * (prop - ycur[i]);
          step = std::max(step, std::abs(ynext[i] - ycur[i]));
        }
        ycur = ynext;
        if (step <= 1e-14 * (1.0 + std::abs(ycur[0]))) break;
        if (step >= prev_step) damp = std::max(0.25, damp * 0.5);
        prev_step = step;
      }
      for (int i = 0; i < n; ++i) sol.Y.at(k, u, i) = ycur[i];
    }

  // Residual and norms against this driver.
  AdaptedProcess fv = AdaptedProcess::make(model, Shape::vector_n, false, false, n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      driver.eval(k, u, sol.Y.node_ptr(k, u), sol.Z.node_ptr(k, u),
                  fv.node_ptr(k, u));
  sol.diag.residual_sup = sup_defect(sol.Y, sol.Z, fv);
  sol.diag.y_norms = make_norm_report(sol.Y);
  sol.diag.z_norms = make_norm_report(sol.Z);
  return sol;
}

Solution solve_quadratic(const TreeModel& model, const std::vector<double>& xi,
                         const Driver& driver,
                         const std::vector<double>& k_schedule) {
  std::vector<double> schedule = k_schedule;
  if (schedule.empty())
    for (double k = 2; k <= 256; k *= 2) schedule.push_back(k);

  std::vector<std::vector<double>> trace;
  for (double k : schedule) {
    Driver trunc = truncate_driver(driver, k, model.dim);
    Solution sol = solve_lipschitz(model, xi, trunc);
    const double sup_z = sup_norm(sol.Z);
    const double sup_y = sup_norm(sol.Y);
    trace.push_back({k, sup_z, sup_y});
    if (sup_z <= k && sup_y <= k) {
      // |Z| <= k everywhere, so pi_k(Z) = Z and the pair solves the
      // untruncated equation; re-measure the residual against it.
      const int n = driver.n;
      AdaptedProcess fv =
          AdaptedProcess::make(model, Shape::vector_n, false, false, n);
      for (int lev = 0; lev < model.depth; ++lev)
        for (std::size_t u = 0; u < model.nodes_at(lev); ++u)
          driver.eval(lev, u, sol.Y.node_ptr(lev, u), sol.Z.node_ptr(lev, u),
                      fv.node_ptr(lev, u));
      sol.diag.residual_sup = sup_defect(sol.Y, sol.Z, fv);
      sol.diag.accepted_k = static_cast<int>(k);
      sol.diag.k_trace = std::move(trace);
      return sol;
    }
  }
  raise(errc::truncation_not_stabilized,
        "no truncation level bounded its own solution (tried " +
            std::to_string(schedule.size()) + " levels up to " +
            std::to_string(schedule.back()) + ")");
}

ABCertificate ab_supermartingale_check(const Solution& sol, const ABData& ab) {
  const TreeModel& model = sol.Y.model;
  const int n = sol.Y.rows();
  const int d = model.dim;
  const int N = model.depth;

  ABCertificate cert;
  cert.worst = std::numeric_limits<double>::infinity();
  for (const auto& a : ab.a_vecs) {
    if (static_cast<int>(a.size()) != n)
      raise(errc::shape_mismatch, "a-priori-bound vector has wrong length");
    // R_k = exp(2 a.Y_k + 2 rho t_k), level by level.
    std::vector<std::vector<double>> R(N + 1);
    double r_max = 0;
    for (int k = 0; k <= N; ++k) {
      R[k].resize(model.nodes_at(k));
      const double comp = 2.0 * ab.rho * model.time_at(k);
      for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
        double ay = 0;
        for (int i = 0; i < n; ++i) ay += a[i] * sol.Y.at(k, u, i);
        R[k][u] = std::exp(2.0 * ay + comp);
        r_max = std::max(r_max, R[k][u]);
      }
    }
    const double tol = 10.0 * (1.0 + r_max) * model.dt;

    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < N; ++k)
      for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
        double mean = 0;
        for (int c = 0; c < model.branching; ++c)
          mean += R[k + 1][u * model.branching + c];
        mean /= model.branching;
        double env = 1.0, az_sq = 0;
        for (int l = 0; l < d; ++l) {
          double az = 0;
          for (int i = 0; i < n; ++i) az += a[i] * sol.Z.at(k, u, i, 0, l);
          env *= std::cosh(2.0 * az * model.step);
          az_sq += az * az;
        }
        env *= std::exp(-az_sq * model.dt);
        margin = std::min(margin, mean - R[k][u] * env + tol * model.dt);
      }
    cert.margins.push_back(margin);
    cert.worst = std::min(cert.worst, margin);
  }
  cert.pass = cert.worst >= 0.0;
  return cert;
}

StabilityRow stability_compare(const TreeModel& model,
                               const std::vector<double>& xi1,
                               const Driver& d1,
                               const std::vector<double>& xi2,
                               const Driver& d2, double eps_label) {
  if (d1.n != d2.n)
    raise(errc::shape_mismatch, "drivers must share the state dimension");
  const int n = d1.n;
  Solution s1 = solve_quadratic(model, xi1, d1);
  Solution s2 = solve_quadratic(model, xi2, d2);

  AdaptedProcess dY = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  AdaptedProcess dZ = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  for (int k = 0; k <= model.depth; ++k)
    for (std::size_t c = 0; c < dY.values[k].size(); ++c)
      dY.values[k][c] = s2.Y.values[k][c] - s1.Y.values[k][c];
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t c = 0; c < dZ.values[k].size(); ++c)
      dZ.values[k][c] = s2.Z.values[k][c] - s1.Z.values[k][c];

  double dxi = 0;
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf) {
    double s = 0;
    for (int i = 0; i < n; ++i) {
      const double e = xi2[leaf * n + i] - xi1[leaf * n + i];
      s += e * e;
    }
    dxi = std::max(dxi, std::sqrt(s));
  }

  // Driver distance evaluated along the first solution.
  AdaptedProcess df = AdaptedProcess::make(model, Shape::vector_n, false, false, n);
  std::vector<double> f1(n), f2(n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      d1.eval(k, u, s1.Y.node_ptr(k, u), s1.Z.node_ptr(k, u), f1.data());
      d2.eval(k, u, s1.Y.node_ptr(k, u), s1.Z.node_ptr(k, u), f2.data());
      for (int i = 0; i < n; ++i) df.at(k, u, i) = f2[i] - f1[i];
    }

  StabilityRow row;
  row.eps = eps_label;
  row.lhs = sup_norm(dY) + bmo_norm(dZ);
  row.rhs = dxi + bmo_half_norm(df);
  row.ratio = row.rhs > 0 ? row.lhs / row.rhs : 0.0;
  return row;
}

// --- builtins ----------------------------------------------------------------

Driver make_zero_driver() {
  Driver drv;
  drv.n = 1;
  drv.eval = [](int, std::size_t, const double*, const double*, double* out) {
    out[0] = 0.0;
  };
  drv.L = 0.0;
  drv.kappa = default_kappa;
  drv.ab = ABData{{{1.0}, {-1.0}}, 0.0};
  drv.name = "zero";
  return drv;
}

Driver make_colehopf_driver() {
  Driver drv;
  drv.n = 1;
  drv.eval = [](int, std::size_t, const double*, const double* z, double* out) {
    out[0] = 0.5 * z[0] * z[0];
  };
  drv.L = 0.0;
  drv.kappa = default_kappa;
  drv.ab = ABData{{{1.0}, {-1.0}}, 0.0};
  drv.name = "colehopf";
  return drv;
}

Driver make_tri2_driver() {
  Driver drv;
  drv.n = 2;
  drv.eval = [](int, std::size_t, const double*, const double* z, double* out) {
    out[0] = 0.5 * z[0] * z[0];
    out[1] = z[0] * z[1];
  };
  drv.L = 0.0;
  drv.kappa = default_kappa;
  // (0, +/-1) fail the bound for f2 = z1 z2, so the family leans on (1, +/-1).
  drv.ab = ABData{{{1.0, 1.0}, {1.0, -1.0}, {-1.0, 0.0}}, 0.0};
  drv.name = "tri2";
  return drv;
}

std::vector<double> terminal_bt(const TreeModel& model) {
  return brownian_component(model, 0).back();
}

std::vector<double> terminal_sign_bt(const TreeModel& model) {
  std::vector<double> xi = terminal_bt(model);
  for (double& v : xi) v = v >= 0.0 ? 1.0 : -1.0;
  return xi;
}

std::vector<double> terminal_cos_bt(const TreeModel& model) {
  std::vector<double> xi = terminal_bt(model);
  for (double& v : xi) v = std::cos(v);
  return xi;
}

std::vector<double> terminal_tri2(const TreeModel& model) {
  const std::vector<double> bt = terminal_bt(model);
  std::vector<double> xi(2 * bt.size());
  for (std::size_t leaf = 0; leaf < bt.size(); ++leaf) {
    xi[2 * leaf] = bt[leaf] >= 0.0 ? 1.0 : -1.0;
    xi[2 * leaf + 1] = std::cos(bt[leaf]);
  }
  return xi;
}

std::vector<double> terminal_zero(const TreeModel& model, int n) {
  return std::vector<double>(model.leaf_count() * static_cast<std::size_t>(n),
                             0.0);
}

double colehopf_oracle(const TreeModel& model, const std::vector<double>& xi) {
  if (xi.size() != model.leaf_count())
    raise(errc::shape_mismatch, "oracle needs one terminal value per leaf");
  std::vector<double> e(xi.size());
  for (std::size_t leaf = 0; leaf < xi.size(); ++leaf)
    e[leaf] = std::exp(xi[leaf]);
  return std::log(backward_means(model, e, 1)[0][0]);
}

}  // namespace bsdelab
