#include "bsdelab/linear.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bsdelab/rng.hpp"

namespace bsdelab {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// (A z)^i = sum_k <A^i_k, z^k>: contract the matrix coefficient against a
// vector value along both the state index and the Brownian axis.
void apply_vec_matrix(const AdaptedProcess& A, int level, std::size_t node,
                      const double* z, int n, int d, double* out) {
  for (int i = 0; i < n; ++i) {
    double acc = 0;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < d; ++l) acc += A.at(level, node, i, k, l) * z[k * d + l];
    out[i] = acc;
  }
}

// Fills diagnostics common to every solver.
void finalize(Solution& sol, const AdaptedProcess& f) {
  sol.diag.residual_sup = sup_defect(sol.Y, sol.Z, f);
  sol.diag.y_norms = make_norm_report(sol.Y);
  sol.diag.z_norms = make_norm_report(sol.Z);
}

}  // namespace

LinearCoefficients LinearCoefficients::zeros(const TreeModel& model, int n) {
  LinearCoefficients c;
  c.alpha = AdaptedProcess::make(model, Shape::matrix_nn, false, false, n);
  c.A = AdaptedProcess::make(model, Shape::matrix_nn, true, false, n);
  c.beta = AdaptedProcess::make(model, Shape::vector_n, false, false, n);
  return c;
}

AdaptedProcess represent_z(const AdaptedProcess& Y) {
  const TreeModel& model = Y.model;
  const int n = Y.rows();
  const int d = model.dim;
  AdaptedProcess Z = AdaptedProcess::make(model, Y.shape, true, false, n);
  const double scale = 1.0 / (model.branching * model.step);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < d; ++l) {
          double acc = 0;
          for (int c = 0; c < model.branching; ++c)
            acc += TreeModel::increment_sign(c, l) *
                   Y.at(k + 1, u * model.branching + c, i);
          Z.at(k, u, i, 0, l) = acc * scale;
        }
  return Z;
}

AdaptedProcess linear_driver_values(const LinearCoefficients& coeffs,
                                    const AdaptedProcess& Y,
                                    const AdaptedProcess& Z) {
  const TreeModel& model = Y.model;
  const int n = Y.rows();
  const int d = model.dim;
  AdaptedProcess f = AdaptedProcess::make(model, Shape::vector_n, false, false, n);
  std::vector<double> az(n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      apply_vec_matrix(coeffs.A, k, u, Z.node_ptr(k, u), n, d, az.data());
      for (int i = 0; i < n; ++i) {
        double acc = az[i] + coeffs.beta.at(k, u, i);
        for (int j = 0; j < n; ++j)
          acc += coeffs.alpha.at(k, u, i, j) * Y.at(k, u, j);
        f.at(k, u, i) = acc;
      }
    }
  return f;
}

namespace {

// Walks every node/child pair and hands the one-step defect magnitude to the
// sink: sink(level, child_path_index, |D|).
template <typename Sink>
void for_each_defect(const AdaptedProcess& Y, const AdaptedProcess& Z,
                     const AdaptedProcess& f, Sink sink) {
  const TreeModel& model = Y.model;
  const int n = Y.rows();
  const int d = model.dim;
  const double dt = model.dt, h = model.step;
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int c = 0; c < model.branching; ++c) {
        const std::size_t v = u * model.branching + c;
        double s = 0;
        for (int i = 0; i < n; ++i) {
          double zd = 0;
          for (int l = 0; l < d; ++l)
            zd += Z.at(k, u, i, 0, l) * TreeModel::increment_sign(c, l) * h;
          const double Di =
              Y.at(k, u, i) - Y.at(k + 1, v, i) - f.at(k, u, i) * dt + zd;
          s += Di * Di;
        }
        sink(k, v, std::sqrt(s));
      }
}

}  // namespace

double sup_defect(const AdaptedProcess& Y, const AdaptedProcess& Z,
                  const AdaptedProcess& f) {
  double best = 0;
  for_each_defect(Y, Z, f,
                  [&](int, std::size_t, double m) { best = std::max(best, m); });
  return best;
}

double expected_peak_defect(const AdaptedProcess& Y, const AdaptedProcess& Z,
                            const AdaptedProcess& f) {
  const TreeModel& model = Y.model;
  std::vector<double> peak(model.leaf_count(), 0.0);
  for_each_defect(Y, Z, f, [&](int k, std::size_t child, double m) {
    const std::size_t span = model.nodes_at(model.depth - k - 1);
    for (std::size_t l = child * span; l < (child + 1) * span; ++l)
      peak[l] = std::max(peak[l], m);
  });
  double acc = 0;
  for (double p : peak) acc += p;
  return acc / static_cast<double>(peak.size());
}

Solution solve_backward_exact(const TreeModel& model,
                              const std::vector<double>& xi,
                              const LinearCoefficients& coeffs) {
  const int n = coeffs.beta.rows();
  const int d = model.dim;
  if (xi.size() != model.leaf_count() * static_cast<std::size_t>(n))
    raise(errc::shape_mismatch, "terminal data does not hold n per leaf");

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  sol.Z = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  sol.Y.values[model.depth] = xi;

  std::vector<double> az(n);
  RowMat lhs(n, n);
  Eigen::VectorXd rhs(n), mean(n);
  const double zscale = 1.0 / (model.branching * model.step);

  for (int k = model.depth - 1; k >= 0; --k) {
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      // Z from child differences, then the implicit-in-Y linear step.
      for (int i = 0; i < n; ++i) {
        for (int l = 0; l < d; ++l) {
          double acc = 0;
          for (int c = 0; c < model.branching; ++c)
            acc += TreeModel::increment_sign(c, l) *
                   sol.Y.at(k + 1, u * model.branching + c, i);
          sol.Z.at(k, u, i, 0, l) = acc * zscale;
        }
        // Pairwise halving keeps the child mean consistent with the exact
        // conditional-expectation scheme.
        if (model.branching == 2) {
          mean(i) = (sol.Y.at(k + 1, 2 * u, i) + sol.Y.at(k + 1, 2 * u + 1, i)) * 0.5;
        } else {
          mean(i) = ((sol.Y.at(k + 1, 4 * u, i) + sol.Y.at(k + 1, 4 * u + 1, i)) * 0.5 +
                     (sol.Y.at(k + 1, 4 * u + 2, i) + sol.Y.at(k + 1, 4 * u + 3, i)) * 0.5) *
                    0.5;
        }
      }
      apply_vec_matrix(coeffs.A, k, u, sol.Z.node_ptr(k, u), n, d, az.data());
      for (int i = 0; i < n; ++i) {
        rhs(i) = mean(i) + (az[i] + coeffs.beta.at(k, u, i)) * model.dt;
        for (int j = 0; j < n; ++j)
          lhs(i, j) = (i == j ? 1.0 : 0.0) - coeffs.alpha.at(k, u, i, j) * model.dt;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
      if (!lu.isInvertible())
        raise(errc::singular_step,
              "(I - alpha dt) singular at level " + std::to_string(k));
      Eigen::VectorXd y = lu.solve(rhs);
      for (int i = 0; i < n; ++i) sol.Y.at(k, u, i) = y(i);
    }
  }
  finalize(sol, linear_driver_values(coeffs, sol.Y, sol.Z));
  return sol;
}

std::pair<AdaptedProcess, AdaptedProcess> martingale_represent(
    const TreeModel& model, const std::vector<double>& xi, int n) {
  auto levels = backward_means(model, xi, n);
  AdaptedProcess M = AdaptedProcess::make(
      model, n == 1 ? Shape::scalar : Shape::vector_n, false, true, n);
  M.values = std::move(levels);
  AdaptedProcess Z = represent_z(M);
  return {std::move(M), std::move(Z)};
}

Solution solve_1d_girsanov(const TreeModel& model, const std::vector<double>& xi,
                           const LinearCoefficients& coeffs) {
  const int n = coeffs.beta.rows();
  const int d = model.dim;
  if (n != 1) raise(errc::shape_mismatch, "Girsanov solver requires n = 1");
  if (xi.size() != model.leaf_count())
    raise(errc::shape_mismatch, "terminal data does not hold 1 per leaf");
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      if (coeffs.alpha.at(k, u) != 0.0)
        raise(errc::shape_mismatch,
              "Girsanov solver requires alpha = 0 (weighted averages only "
              "represent the drift A Z + beta)");

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, 1);
  sol.Y.values[model.depth] = xi;

  // Backward weighted averages: Y_u = E^Q_u[xi + sum beta dt] where the
  // one-step weights are the discrete density factors (1 + A dB).
  for (int k = model.depth - 1; k >= 0; --k) {
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      double acc = 0;
      for (int c = 0; c < model.branching; ++c) {
        double w = 1.0;
        for (int l = 0; l < d; ++l)
          w += coeffs.A.at(k, u, 0, 0, l) * TreeModel::increment_sign(c, l) *
               model.step;
        if (!(w > 0))
          raise(errc::measure_not_equivalent,
                "Girsanov weight " + std::to_string(w) + " at level " +
                    std::to_string(k) + " (|A| sqrt(dt) too large)");
        acc += w * sol.Y.at(k + 1, u * model.branching + c);
      }
      sol.Y.at(k, u) = acc / model.branching + coeffs.beta.at(k, u) * model.dt;
    }
  }
  sol.Z = represent_z(sol.Y);
  finalize(sol, linear_driver_values(coeffs, sol.Y, sol.Z));
  return sol;
}

Solution solve_triangular_cascade(const TreeModel& model,
                                  const std::vector<double>& xi,
                                  const LinearCoefficients& coeffs,
                                  ScalarMode mode) {
  const int n = coeffs.beta.rows();
  const int d = model.dim;
  constexpr double kTriTol = 1e-14;
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          for (int l = 0; l < d; ++l)
            if (std::abs(coeffs.A.at(k, u, i, j, l)) > kTriTol)
              raise(errc::not_triangular,
                    "A has an upper-triangular entry above tolerance");
          if (std::abs(coeffs.alpha.at(k, u, i, j)) > kTriTol)
            raise(errc::not_triangular,
                  "alpha has an upper-triangular entry above tolerance");
        }

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  sol.Z = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf)
    for (int i = 0; i < n; ++i)
      sol.Y.at(model.depth, leaf, i) = xi[leaf * n + i];

  // Row i: scalar equation with drift A^i_i Z^i + alpha^i_i Y^i and the
  // already-solved rows folded into the inhomogeneity.
  for (int i = 0; i < n; ++i) {
    LinearCoefficients row = LinearCoefficients::zeros(model, 1);
    for (int k = 0; k < model.depth; ++k)
      for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
        row.alpha.at(k, u) = coeffs.alpha.at(k, u, i, i);
        for (int l = 0; l < d; ++l)
          row.A.at(k, u, 0, 0, l) = coeffs.A.at(k, u, i, i, l);
        double b = coeffs.beta.at(k, u, i);
        for (int j = 0; j < i; ++j) {
          b += coeffs.alpha.at(k, u, i, j) * sol.Y.at(k, u, j);
          for (int l = 0; l < d; ++l)
            b += coeffs.A.at(k, u, i, j, l) * sol.Z.at(k, u, j, 0, l);
        }
        row.beta.at(k, u) = b;
      }
    std::vector<double> xi_row(model.leaf_count());
    for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf)
      xi_row[leaf] = xi[leaf * n + i];

    Solution srow = mode == ScalarMode::girsanov
                        ? solve_1d_girsanov(model, xi_row, row)
                        : solve_backward_exact(model, xi_row, row);
    for (int k = 0; k <= model.depth; ++k)
      for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
        sol.Y.at(k, u, i) = srow.Y.at(k, u);
        if (k < model.depth)
          for (int l = 0; l < d; ++l)
            sol.Z.at(k, u, i, 0, l) = srow.Z.at(k, u, 0, 0, l);
      }
  }
  finalize(sol, linear_driver_values(coeffs, sol.Y, sol.Z));
  return sol;
}

Solution solve_sliced_picard(const TreeModel& model,
                             const std::vector<double>& xi,
                             const LinearCoefficients& coeffs, double delta) {
  const int n = coeffs.beta.rows();
  const int d = model.dim;
  const int N = model.depth;
  if (!(delta > 0)) raise(errc::shape_mismatch, "delta must be positive");

  // Greedy level cuts sized so both coefficient norms fit the slice budget.
  std::vector<int> cuts{0};
  int a = 0;
  while (a < N) {
    auto fits = [&](int b) {
      return bmo_window(coeffs.A, a, b) <= delta &&
             bmo_half_window(coeffs.alpha, a, b) <= delta;
    };
    if (!fits(a + 1))
      raise(errc::unsliceable, "a single step exceeds the slice budget delta = " +
                                   std::to_string(delta));
    int b = a + 1;
    while (b < N && fits(b + 1)) ++b;
    cuts.push_back(b);
    a = b;
  }

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  sol.Z = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  sol.Y.values[N] = xi;
  sol.diag.slices = static_cast<int>(cuts.size()) - 1;

  std::vector<double> az(n);
  const double zscale = 1.0 / (model.branching * model.step);

  for (int s = static_cast<int>(cuts.size()) - 2; s >= 0; --s) {
    const int lo = cuts[s], hi = cuts[s + 1];
    // Iterates of the driver-frozen map on levels [lo, hi); the terminal
    // values at level hi were fixed by the later slice (or are xi).
    AdaptedProcess R = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
    AdaptedProcess V = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
    R.values[hi] = sol.Y.values[hi];

    double prev_diff = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (int iter = 1;; ++iter) {
      if (iter > 60)
        raise(errc::max_iterations, "Picard slice did not converge in 60 sweeps");
      ++sol.diag.iterations;

      // One backward sweep with the inhomogeneity frozen at (R, V).
      AdaptedProcess Ynew = R;  // reuse layout; level hi stays the terminal
      AdaptedProcess Znew = V;
      double dy_sup = 0;
      AdaptedProcess dZ = AdaptedProcess::make(model, Shape::vector_n, true, false, n);
      for (int k = hi - 1; k >= lo; --k)
        for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
          for (int i = 0; i < n; ++i)
            for (int l = 0; l < d; ++l) {
              double acc = 0;
              for (int c = 0; c < model.branching; ++c)
                acc += TreeModel::increment_sign(c, l) *
                       Ynew.at(k + 1, u * model.branching + c, i);
              Znew.at(k, u, i, 0, l) = acc * zscale;
            }
          apply_vec_matrix(coeffs.A, k, u, V.node_ptr(k, u), n, d, az.data());
          for (int i = 0; i < n; ++i) {
            double mean;
            if (model.branching == 2) {
              mean = (Ynew.at(k + 1, 2 * u, i) + Ynew.at(k + 1, 2 * u + 1, i)) * 0.5;
            } else {
              mean = ((Ynew.at(k + 1, 4 * u, i) + Ynew.at(k + 1, 4 * u + 1, i)) * 0.5 +
                      (Ynew.at(k + 1, 4 * u + 2, i) + Ynew.at(k + 1, 4 * u + 3, i)) * 0.5) *
                     0.5;
            }
            double g = az[i] + coeffs.beta.at(k, u, i);
            for (int j = 0; j < n; ++j)
              g += coeffs.alpha.at(k, u, i, j) * R.at(k, u, j);
            Ynew.at(k, u, i) = mean + g * model.dt;
          }
          for (int i = 0; i < n; ++i) {
            dy_sup = std::max(dy_sup, std::abs(Ynew.at(k, u, i) - R.at(k, u, i)));
            for (int l = 0; l < d; ++l)
              dZ.at(k, u, i, 0, l) = Znew.at(k, u, i, 0, l) - V.at(k, u, i, 0, l);
          }
        }
      const double diff = dy_sup + bmo_norm(dZ);
      if (std::isfinite(prev_diff) && prev_diff > 0) {
        sol.diag.max_contraction =
            std::max(sol.diag.max_contraction, diff / prev_diff);
        growing = diff >= prev_diff ? growing + 1 : 0;
        if (growing >= 3)
          raise(errc::no_contraction,
                "Picard differences grew for 3 consecutive sweeps (delta too "
                "large)");
      }
      R = std::move(Ynew);
      V = std::move(Znew);
      if (diff <= 1e-10) break;
      prev_diff = diff;
    }
    for (int k = lo; k < hi; ++k) {
      sol.Y.values[k] = R.values[k];
      sol.Z.values[k] = V.values[k];
    }
  }
  finalize(sol, linear_driver_values(coeffs, sol.Y, sol.Z));
  return sol;
}

Solution solve_outer_product(const TreeModel& model,
                             const std::vector<double>& xi,
                             const AdaptedProcess& a,
                             const std::vector<double>& b,
                             const AdaptedProcess& beta) {
  const int n = a.rows();
  const int d = model.dim;
  if (static_cast<int>(b.size()) != n)
    raise(errc::shape_mismatch, "b must be a constant n-vector");

  // Scalar equation for (U, V) = (b^T Y, b^T Z): drift (b^T a) V + b^T beta.
  LinearCoefficients uc = LinearCoefficients::zeros(model, 1);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      for (int l = 0; l < d; ++l) {
        double acc = 0;
        for (int i = 0; i < n; ++i) acc += b[i] * a.at(k, u, i, 0, l);
        uc.A.at(k, u, 0, 0, l) = acc;
      }
      double bb = 0;
      for (int i = 0; i < n; ++i) bb += b[i] * beta.at(k, u, i);
      uc.beta.at(k, u) = bb;
    }
  std::vector<double> xi_u(model.leaf_count(), 0.0);
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf)
    for (int i = 0; i < n; ++i) xi_u[leaf] += b[i] * xi[leaf * n + i];
  Solution su = solve_1d_girsanov(model, xi_u, uc);

  // Representation-type system: Y = xi + int(a V + beta) dt - int Z dB.
  LinearCoefficients yc = LinearCoefficients::zeros(model, n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i) {
        double av = 0;
        for (int l = 0; l < d; ++l)
          av += a.at(k, u, i, 0, l) * su.Z.at(k, u, 0, 0, l);
        yc.beta.at(k, u, i) = av + beta.at(k, u, i);
      }
  Solution sol = solve_backward_exact(model, xi, yc);

  // The scalar integrand must coincide with b^T Z.
  double worst = 0;
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int l = 0; l < d; ++l) {
        double bz = 0;
        for (int i = 0; i < n; ++i) bz += b[i] * sol.Z.at(k, u, i, 0, l);
        worst = std::max(worst, std::abs(bz - su.Z.at(k, u, 0, 0, l)));
      }
  if (worst > 1e-9)
    raise(errc::shape_mismatch,
          "outer-product consistency V = b^T Z failed: " + std::to_string(worst));

  // Residual against the full coefficient A = a b^T.
  LinearCoefficients full = LinearCoefficients::zeros(model, n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i) {
        full.beta.at(k, u, i) = beta.at(k, u, i);
        for (int j = 0; j < n; ++j)
          for (int l = 0; l < d; ++l)
            full.A.at(k, u, i, j, l) = a.at(k, u, i, 0, l) * b[j];
      }
  sol.diag.iterations = su.diag.iterations;
  finalize(sol, linear_driver_values(full, sol.Y, sol.Z));
  return sol;
}

MatrixExponential stochastic_exponential(const AdaptedProcess& A) {
  const TreeModel& model = A.model;
  const int n = A.rows();
  const int d = model.dim;

  MatrixExponential ex;
  ex.S = AdaptedProcess::make(model, Shape::matrix_nn, false, true, n);
  ex.X_inv = AdaptedProcess::make(model, Shape::matrix_nn, false, true, n);
  ex.valid.resize(model.depth + 1);
  for (int k = 0; k <= model.depth; ++k)
    ex.valid[k].assign(model.nodes_at(k), 1);
  for (int i = 0; i < n; ++i) {
    ex.S.at(0, 0, i, i) = 1.0;
    ex.X_inv.at(0, 0, i, i) = 1.0;
  }

  RowMat factor(n, n), S(n, n), X(n, n);
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          S(i, j) = ex.S.at(k, u, i, j);
          X(i, j) = ex.X_inv.at(k, u, i, j);
        }
      for (int c = 0; c < model.branching; ++c) {
        const std::size_t v = u * model.branching + c;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double db = 0;
            for (int l = 0; l < d; ++l)
              db += A.at(k, u, i, j, l) * TreeModel::increment_sign(c, l) *
                    model.step;
            factor(i, j) = (i == j ? 1.0 : 0.0) + db;
          }
        RowMat Sc = S * factor;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) ex.S.at(k + 1, v, i, j) = Sc(i, j);

        Eigen::FullPivLU<Eigen::MatrixXd> lu(factor);
        if (ex.valid[k][u] && lu.isInvertible()) {
          RowMat Xc = RowMat(lu.inverse()) * X;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) ex.X_inv.at(k + 1, v, i, j) = Xc(i, j);
        } else {
          ex.valid[k + 1][v] = 0;
          ex.all_valid = false;
        }
      }
    }
  // Invalidity is hereditary: mark whole subtrees below a singular factor.
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      if (!ex.valid[k][u])
        for (int c = 0; c < model.branching; ++c)
          ex.valid[k + 1][u * model.branching + c] = 0;
  return ex;
}

Solution representation_solve(const TreeModel& model,
                              const std::vector<double>& xi,
                              const AdaptedProcess& A) {
  const int n = A.rows();
  MatrixExponential ex = stochastic_exponential(A);
  if (!ex.all_valid)
    raise(errc::singular_factor,
          "stochastic exponential is singular somewhere; the representation "
          "formula needs the inverse process");

  // E_u[S_T xi] by exact backward means, then Y_u = X_inv_u * E_u[S_T xi].
  std::vector<double> g(model.leaf_count() * n);
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf)
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int j = 0; j < n; ++j)
        acc += ex.S.at(model.depth, leaf, i, j) * xi[leaf * n + j];
      g[leaf * n + i] = acc;
    }
  auto means = backward_means(model, g, n);

  Solution sol;
  sol.Y = AdaptedProcess::make(model, Shape::vector_n, false, true, n);
  sol.Y.values[model.depth] = xi;  // exact terminal, not X_inv S xi
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i) {
        double acc = 0;
        for (int j = 0; j < n; ++j)
          acc += ex.X_inv.at(k, u, i, j) * means[k][u * n + j];
        sol.Y.at(k, u, i) = acc;
      }
  sol.Z = represent_z(sol.Y);

  LinearCoefficients coeffs = LinearCoefficients::zeros(model, n);
  coeffs.A = A;
  finalize(sol, linear_driver_values(coeffs, sol.Y, sol.Z));
  return sol;
}

namespace {

ReverseHoelderReport reverse_hoelder_impl(const MatrixExponential& ex, double p,
                                          bool want_tilde) {
  const TreeModel& model = ex.S.model;
  const int n = ex.S.rows();
  const int N = model.depth;

  ReverseHoelderReport rep;

  // rp_ratio: conditional tails of |S_T|^p against |S_u|^p.
  std::vector<double> g(model.leaf_count());
  for (std::size_t leaf = 0; leaf < model.leaf_count(); ++leaf)
    g[leaf] = std::pow(ex.S.node_abs(N, leaf), p);
  rep.rp_ratio = 1.0;
  for (int k = N;; --k) {
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      rep.rp_ratio =
          std::max(rep.rp_ratio, g[u] / std::pow(ex.S.node_abs(k, u), p));
    if (k == 0) break;
    std::vector<double> next;
    for (int axis = 0; axis < model.dim; ++axis) {
      next.resize(g.size() / 2);
      for (std::size_t q = 0; q < next.size(); ++q)
        next[q] = (g[2 * q] + g[2 * q + 1]) * 0.5;
      g.swap(next);
    }
  }

  // mp_norm: running pathwise maximum of |S| at leaf resolution.
  std::vector<double> running(model.leaf_count(), 0.0);
  for (int k = 0; k <= N; ++k) {
    const std::size_t span = model.nodes_at(N - k);
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      const double a = ex.S.node_abs(k, u);
      for (std::size_t l = u * span; l < (u + 1) * span; ++l)
        running[l] = std::max(running[l], a);
    }
  }
  double acc = 0;
  for (double r : running) acc += std::pow(r, p);
  rep.mp_norm = std::pow(acc / static_cast<double>(running.size()), 1.0 / p);

  if (!want_tilde) return rep;
  if (!ex.all_valid)
    raise(errc::singular_factor,
          "rp_tilde needs the inverse process at every node");

  // rp_tilde: for every base node u, the conditional mean of the pathwise
  // maximum of |X_inv_u S_t|^p over the subtree.
  std::vector<double> peak;
  for (int a = 0; a <= N; ++a)
    for (std::size_t u = 0; u < model.nodes_at(a); ++u) {
      const std::size_t span = model.nodes_at(N - a);
      peak.assign(span, std::pow(std::sqrt(static_cast<double>(n)), p));
      for (int b = a + 1; b <= N; ++b) {
        const std::size_t lead = model.nodes_at(b - a);
        const std::size_t sub = model.nodes_at(N - b);
        for (std::size_t w = 0; w < lead; ++w) {
          const std::size_t v = u * lead + w;
          double fro = 0;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              double acc2 = 0;
              for (int m = 0; m < n; ++m)
                acc2 += ex.X_inv.at(a, u, i, m) * ex.S.at(b, v, m, j);
              fro += acc2 * acc2;
            }
          const double val = std::pow(std::sqrt(fro), p);
          for (std::size_t l = w * sub; l < (w + 1) * sub; ++l)
            peak[l] = std::max(peak[l], val);
        }
      }
      double mean = 0;
      for (double x : peak) mean += x;
      mean /= static_cast<double>(span);
      rep.rp_tilde = std::max(rep.rp_tilde, mean);
    }
  return rep;
}

}  // namespace

ReverseHoelderReport reverse_hoelder_probe(const MatrixExponential& exponential,
                                           double p, bool want_tilde) {
  if (!(p > 1)) raise(errc::shape_mismatch, "reverse-Hoelder probe needs p > 1");
  return reverse_hoelder_impl(exponential, p, want_tilde);
}

// --- seeded oracle suite -----------------------------------------------------

namespace {

// Draw order is part of the external contract (documented in the header and
// README); the flat value layout already runs node-major / row-major with the
// axis innermost, so filling in storage order realizes it.
RandomLinearInstance draw_linear_instance(SplitMix64& rng) {
  const int n = 1 + static_cast<int>(rng.next() % 3);
  const int d = 1 + static_cast<int>(rng.next() % 2);
  const int N = 2 + static_cast<int>(rng.next() % 7);

  RandomLinearInstance inst;
  inst.model = build_tree(N, 1.0, d);
  inst.n = n;
  inst.coeffs = LinearCoefficients::zeros(inst.model, n);
  auto fill = [&rng, N](AdaptedProcess& p, double lo, double hi) {
    for (int k = 0; k < N; ++k)
      for (double& v : p.values[k]) v = rng.uniform(lo, hi);
  };
  fill(inst.coeffs.alpha, -0.3, 0.3);
  fill(inst.coeffs.A, -0.35, 0.35);
  fill(inst.coeffs.beta, -1.0, 1.0);
  inst.xi.resize(inst.model.leaf_count() * static_cast<std::size_t>(n));
  for (double& v : inst.xi) v = rng.uniform(-1.0, 1.0);

  double step_a = 0, step_alpha = 0;
  for (int k = 0; k < N; ++k)
    for (std::size_t u = 0; u < inst.model.nodes_at(k); ++u) {
      step_a = std::max(step_a, inst.coeffs.A.node_abs(k, u));
      step_alpha = std::max(step_alpha, inst.coeffs.alpha.node_abs(k, u));
    }
  inst.delta = 1.05 * std::max(step_a * std::sqrt(inst.model.dt),
                               step_alpha * inst.model.dt);
  return inst;
}

double y_deviation(const Solution& s, const Solution& oracle) {
  double dev = 0;
  for (std::size_t k = 0; k < s.Y.values.size(); ++k)
    for (std::size_t i = 0; i < s.Y.values[k].size(); ++i)
      dev = std::max(dev, std::abs(s.Y.values[k][i] - oracle.Y.values[k][i]));
  return dev;
}

}  // namespace

RandomLinearInstance random_linear_instance(std::uint64_t seed) {
  SplitMix64 rng(seed);
  return draw_linear_instance(rng);
}

OracleSuiteRow oracle_suite_case(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const RandomLinearInstance inst = draw_linear_instance(rng);
  const TreeModel& model = inst.model;
  const int n = inst.n;
  const int d = model.dim;
  const int N = model.depth;

  const Solution oracle = solve_backward_exact(model, inst.xi, inst.coeffs);
  OracleSuiteRow row;
  row.n = n;
  row.d = d;
  row.N = N;
  row.y_sup = oracle.diag.y_norms.s_inf;
  row.z_bmo = oracle.diag.z_norms.bmo;
  auto note = [&row](const char* solver, double dev) {
    if (row.solver.empty() || dev > row.deviation) {
      row.solver = solver;
      row.deviation = dev;
    }
  };

  const Solution picard =
      solve_sliced_picard(model, inst.xi, inst.coeffs, inst.delta);
  row.iterations = picard.diag.iterations;
  note("sliced_picard", y_deviation(picard, oracle));

  // Lower-triangular restriction for the cascade; additionally a zero alpha
  // diagonal for its Girsanov mode (folded lower entries stay).
  LinearCoefficients tri = inst.coeffs;
  for (int k = 0; k < N; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          tri.alpha.at(k, u, i, j) = 0;
          for (int l = 0; l < d; ++l) tri.A.at(k, u, i, j, l) = 0;
        }
  note("cascade",
       y_deviation(solve_triangular_cascade(model, inst.xi, tri),
                   solve_backward_exact(model, inst.xi, tri)));

  LinearCoefficients tri_nodiag = tri;
  for (int k = 0; k < N; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i) tri_nodiag.alpha.at(k, u, i, i) = 0;
  note("cascade_girsanov",
       y_deviation(solve_triangular_cascade(model, inst.xi, tri_nodiag,
                                            ScalarMode::girsanov),
                   solve_backward_exact(model, inst.xi, tri_nodiag)));

  if (n == 1) {
    LinearCoefficients drift_only = inst.coeffs;
    for (int k = 0; k < N; ++k)
      for (double& v : drift_only.alpha.values[k]) v = 0;
    note("girsanov",
         y_deviation(solve_1d_girsanov(model, inst.xi, drift_only),
                     solve_backward_exact(model, inst.xi, drift_only)));
  }

  // Outer-product case A = a b^T; (b, a) continue the instance's stream, so
  // the base draws above are untouched.
  std::vector<double> b(n);
  for (double& v : b) v = rng.uniform(-0.7, 0.7);
  AdaptedProcess a =
      AdaptedProcess::make(model, Shape::vector_n, true, false, n);
  for (int k = 0; k < N; ++k)
    for (double& v : a.values[k]) v = rng.uniform(-0.3, 0.3);
  LinearCoefficients outer = LinearCoefficients::zeros(model, n);
  outer.beta = inst.coeffs.beta;
  for (int k = 0; k < N; ++k)
    for (std::size_t u = 0; u < model.nodes_at(k); ++u)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int l = 0; l < d; ++l)
            outer.A.at(k, u, i, j, l) = a.at(k, u, i, 0, l) * b[j];
  note("outer_product",
       y_deviation(
           solve_outer_product(model, inst.xi, a, b, inst.coeffs.beta),
           solve_backward_exact(model, inst.xi, outer)));

  LinearCoefficients drift = LinearCoefficients::zeros(model, n);
  drift.A = inst.coeffs.A;
  note("representation",
       y_deviation(representation_solve(model, inst.xi, inst.coeffs.A),
                   solve_backward_exact(model, inst.xi, drift)));
  return row;
}

}  // namespace bsdelab
