// Python bindings for the laboratory's main operations.
//
// Everything crosses the boundary as plain data (floats, lists, dicts); the
// adapted-process containers stay on the C++ side.  Library failures surface
// as bsdelab.Error whose message starts with the stable error name.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "bsdelab/counterexample.hpp"
#include "bsdelab/linear.hpp"
#include "bsdelab/norms.hpp"
#include "bsdelab/quadratic.hpp"
#include "bsdelab/tree.hpp"

namespace py = pybind11;

namespace {

py::dict solution_summary(const bsdelab::Solution& sol,
                          const bsdelab::Driver& driver) {
  py::dict out;
  out["y0"] = sol.Y.at(0, 0);
  out["accepted_k"] = sol.diag.accepted_k;
  out["residual"] = sol.diag.residual_sup;
  out["iterations"] = sol.diag.iterations;
  out["sup_y"] = sol.diag.y_norms.s_inf;
  out["bmo_z"] = sol.diag.z_norms.bmo;
  if (driver.ab) {
    const bsdelab::ABCertificate cert =
        bsdelab::ab_supermartingale_check(sol, *driver.ab);
    out["ab_margin"] = cert.worst;
    out["ab_pass"] = cert.pass;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(bsdelab, m) {
  m.doc() =
      "Numerical laboratory for multidimensional backward equations on an "
      "exact discrete Brownian tree";
  m.attr("__version__") = "1.0.0";

  py::register_exception<bsdelab::Error>(m, "Error");

  m.def("psi", &bsdelab::psi, py::arg("x"),
        "smooth truncation profile: identity on [0,1], plateau 2 from 3 on");

  m.def(
      "project_z",
      [](double k, const std::vector<double>& z) {
        std::vector<double> out(z.size());
        bsdelab::project_z(k, static_cast<int>(z.size()), z.data(),
                           out.data());
        return out;
      },
      py::arg("k"), py::arg("z"),
      "radial truncation: identity for |z| <= k, magnitude capped at 2k");

  m.def("positively_spans", &bsdelab::positively_spans, py::arg("a_vecs"),
        py::arg("n"),
        "whether nonnegative combinations of a_vecs cover all of R^n");

  m.def(
      "tree_info",
      [](int N, double T, int d) {
        const bsdelab::TreeModel model = bsdelab::build_tree(N, T, d);
        py::dict info;
        info["depth"] = model.depth;
        info["horizon"] = model.horizon;
        info["dim"] = model.dim;
        info["dt"] = model.dt;
        info["step"] = model.step;
        info["branching"] = model.branching;
        info["leaves"] = model.leaf_count();
        return info;
      },
      py::arg("N"), py::arg("T") = 1.0, py::arg("d") = 1,
      "model parameters of the exact tree (validates the leaf budget)");

  m.def(
      "martingale_represent",
      [](int N, double T, int d, const std::vector<double>& leaf_values,
         int n) {
        const bsdelab::TreeModel model = bsdelab::build_tree(N, T, d);
        auto [mart, integrand] =
            bsdelab::martingale_represent(model, leaf_values, n);
        return py::make_tuple(mart.values, integrand.values);
      },
      py::arg("N"), py::arg("T"), py::arg("d"), py::arg("leaf_values"),
      py::arg("n") = 1,
      "conditional-expectation process and its integrand, as per-level flat "
      "value arrays");

  m.def(
      "counterexample_residual",
      [](int N) { return bsdelab::residual(bsdelab::build_instance(N)); },
      py::arg("N"),
      "expected pathwise peak defect of the closed-form sphere instance");

  m.def(
      "counterexample_report",
      [](const std::vector<int>& depths) {
        py::list rows;
        for (const bsdelab::CounterexampleRow& r :
             bsdelab::non_uniqueness_report(depths)) {
          py::dict row;
          row["N"] = r.N;
          row["residual"] = r.residual;
          row["sup_Y"] = r.sup_Y;
          row["bmo_Z"] = r.bmo_Z;
          row["bmo_A"] = r.bmo_A;
          row["rp_1.25"] = r.rp_125;
          row["rp_1.5"] = r.rp_15;
          row["rp_2"] = r.rp_2;
          row["rp_3"] = r.rp_3;
          row["mp_2"] = r.mp_2;
          rows.append(row);
        }
        return rows;
      },
      py::arg("depths"),
      "one dict per depth: defect, solution size, reverse-Hoelder probes");

  m.def(
      "oracle_case",
      [](std::uint64_t seed) {
        const bsdelab::OracleSuiteRow row = bsdelab::oracle_suite_case(seed);
        py::dict out;
        out["solver"] = row.solver;
        out["n"] = row.n;
        out["d"] = row.d;
        out["N"] = row.N;
        out["deviation"] = row.deviation;
        out["iterations"] = row.iterations;
        out["y_sup"] = row.y_sup;
        out["z_bmo"] = row.z_bmo;
        return out;
      },
      py::arg("seed"),
      "one seeded solver-agreement case; deviation is the worst sup-norm "
      "gap against the exact backward oracle");

  m.def(
      "quadratic_builtin",
      [](const std::string& driver_name, int N, double T,
         const std::string& terminal_name) {
        bsdelab::Driver driver;
        if (driver_name == "zero")
          driver = bsdelab::make_zero_driver();
        else if (driver_name == "colehopf")
          driver = bsdelab::make_colehopf_driver();
        else if (driver_name == "tri2")
          driver = bsdelab::make_tri2_driver();
        else
          throw py::value_error("driver must be zero | colehopf | tri2");
        const bsdelab::TreeModel model = bsdelab::build_tree(N, T, 1);
        const std::string terminal =
            terminal_name.empty() ? (driver.n == 2 ? "tri2" : "bt")
                                  : terminal_name;
        std::vector<double> xi;
        if (terminal == "bt")
          xi = bsdelab::terminal_bt(model);
        else if (terminal == "sign-bt")
          xi = bsdelab::terminal_sign_bt(model);
        else if (terminal == "cos-bt")
          xi = bsdelab::terminal_cos_bt(model);
        else if (terminal == "tri2")
          xi = bsdelab::terminal_tri2(model);
        else if (terminal == "zero")
          xi = bsdelab::terminal_zero(model, driver.n);
        else
          throw py::value_error(
              "terminal must be bt | sign-bt | cos-bt | tri2 | zero");
        if (xi.size() !=
            model.leaf_count() * static_cast<std::size_t>(driver.n))
          throw py::value_error("terminal '" + terminal +
                                "' does not match the driver's dimension");
        const bsdelab::Solution sol =
            bsdelab::solve_quadratic(model, xi, driver);
        py::dict out = solution_summary(sol, driver);
        if (driver_name == "colehopf")
          out["oracle"] = bsdelab::colehopf_oracle(model, xi);
        return out;
      },
      py::arg("driver"), py::arg("N"), py::arg("T") = 1.0,
      py::arg("terminal") = std::string(),
      "truncation-cascade solve of a builtin driver; returns a summary dict");

  m.def(
      "colehopf_oracle_bt",
      [](int N, double T) {
        const bsdelab::TreeModel model = bsdelab::build_tree(N, T, 1);
        return bsdelab::colehopf_oracle(model, bsdelab::terminal_bt(model));
      },
      py::arg("N"), py::arg("T") = 1.0,
      "log of the exact tree expectation of exp(B_T)");
}
