// bsde-lab: batch experiment runner over the tree laboratory.
//
// Subcommands: norms, linear, counterexample, reverse-holder, quadratic,
// stability.  Every run writes one CSV (header row, comma separated, full
// round-trip decimal fields) plus a sidecar `<out>.meta` holding the resolved
// config echo, tool version and wall time.  Identical config + seed produce
// byte-identical CSVs; the sidecar is informational and not part of that
// contract.  A flat key=value config file can preset any option of a
// subcommand except the required --out (`--config run.cfg`); explicit
// command-line flags win.
//
// Exit codes: 0 success, 2 config/usage error, 3 solver or tolerance error
// (the stable error name goes to stderr).
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsdelab/counterexample.hpp"
#include "bsdelab/csvio.hpp"
#include "bsdelab/linear.hpp"
#include "bsdelab/norms.hpp"
#include "bsdelab/quadratic.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/tree.hpp"

namespace {

constexpr char kVersion[] = "1.0.0";

using bsdelab::AdaptedProcess;
using bsdelab::CsvTable;
using bsdelab::format_double;
using bsdelab::Shape;
using bsdelab::SplitMix64;
using bsdelab::TreeModel;

// Raised when a run completes but violates a documented tolerance (the
// linear oracle suite); mapped to exit code 3 like solver errors.
struct ToleranceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class RunTimer {
 public:
  RunTimer() : start_(std::chrono::steady_clock::now()) {}
  std::string elapsed_ms() const {
    const auto dt = std::chrono::steady_clock::now() - start_;
    return std::to_string(
        std::chrono::duration_cast<std::chrono::milliseconds>(dt).count());
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void emit(const std::string& out, const CsvTable& table,
          std::map<std::string, std::string> meta, const RunTimer& timer) {
  bsdelab::write_csv(out, table);
  meta["version"] = kVersion;
  meta["wall_time_ms"] = timer.elapsed_ms();
  bsdelab::write_sidecar(out, meta);
}

template <typename T>
std::string join_csv(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, double>)
      s += format_double(values[i]);
    else
      s += std::to_string(values[i]);
  }
  return s;
}

// --- norms -------------------------------------------------------------------

struct NormsOpts {
  std::string process = "random";
  int N = 8, d = 1, n = 1;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::string out;
};

void run_norms(const NormsOpts& o) {
  RunTimer timer;
  CsvTable table;
  table.header = {"name", "s_inf", "s_2",      "s_4", "bmo",
                  "bmo_half",     "l_22", "l_42", "l_24"};
  auto add = [&table](const std::string& name, const AdaptedProcess& g) {
    const bsdelab::NormReport r = bsdelab::make_norm_report(g);
    table.rows.push_back({name, format_double(r.s_inf), format_double(r.s_2),
                          format_double(r.s_4), format_double(r.bmo),
                          format_double(r.bmo_half), format_double(r.l_22),
                          format_double(r.l_42), format_double(r.l_24)});
  };

  if (o.process == "random") {
    const TreeModel model = bsdelab::build_tree(o.N, o.T, o.d);
    AdaptedProcess g =
        AdaptedProcess::make(model, Shape::vector_n, true, false, o.n);
    SplitMix64 rng(o.seed);
    for (auto& level : g.values)
      for (double& v : level) v = rng.uniform(-1.0, 1.0);
    add("random", g);
  } else if (o.process == "brownian") {
    const TreeModel model = bsdelab::build_tree(o.N, o.T, o.d);
    for (int axis = 0; axis < o.d; ++axis) {
      AdaptedProcess g =
          AdaptedProcess::make(model, Shape::scalar, false, true, 1);
      g.values = bsdelab::brownian_component(model, axis);
      add("brownian_" + std::to_string(axis), g);
    }
  } else {  // counterexample
    const bsdelab::SphereInstance inst = bsdelab::build_instance(o.N);
    add("M", inst.M);
    add("H", inst.H);
    add("Y", inst.Y);
    add("Z", inst.Z);
    add("A", inst.A);
  }

  emit(o.out, table,
       {{"command", "norms"},
        {"process", o.process},
        {"N", std::to_string(o.N)},
        {"d", std::to_string(o.d)},
        {"n", std::to_string(o.n)},
        {"T", format_double(o.T)},
        {"seed", std::to_string(o.seed)},
        {"out", o.out}},
       timer);
}

// --- linear ------------------------------------------------------------------

struct LinearOpts {
  bool oracle_suite = false;
  int seeds = 100;
  std::uint64_t seed = 1;
  std::string out;
};

void run_linear(const LinearOpts& o) {
  RunTimer timer;
  CsvTable table;
  table.header = {"solver", "n", "d", "N", "residual", "iterations", "y_sup",
                  "z_bmo"};
  double worst = 0;
  for (int i = 0; i < o.seeds; ++i) {
    const bsdelab::OracleSuiteRow row =
        bsdelab::oracle_suite_case(o.seed + static_cast<std::uint64_t>(i));
    worst = std::max(worst, row.deviation);
    table.rows.push_back({row.solver, std::to_string(row.n),
                          std::to_string(row.d), std::to_string(row.N),
                          format_double(row.deviation),
                          std::to_string(row.iterations),
                          format_double(row.y_sup), format_double(row.z_bmo)});
  }
  emit(o.out, table,
       {{"command", "linear"},
        {"oracle-suite", "true"},
        {"seeds", std::to_string(o.seeds)},
        {"seed", std::to_string(o.seed)},
        {"out", o.out}},
       timer);
  if (worst > 1e-8)
    throw ToleranceFailure("linear oracle suite: max residual " +
                           format_double(worst) + " exceeds 1e-8");
}

// --- counterexample ----------------------------------------------------------

struct CounterexampleOpts {
  std::vector<int> depths = {8, 10, 12};
  std::string out;
};

void run_counterexample(const CounterexampleOpts& o) {
  RunTimer timer;
  CsvTable table;
  table.header = {"N",      "residual", "sup_Y", "bmo_Z", "bmo_A",
                  "rp_1.25", "rp_1.5",  "rp_2",  "rp_3",  "mp_2"};
  for (const bsdelab::CounterexampleRow& r :
       bsdelab::non_uniqueness_report(o.depths))
    table.rows.push_back(
        {std::to_string(r.N), format_double(r.residual),
         format_double(r.sup_Y), format_double(r.bmo_Z),
         format_double(r.bmo_A), format_double(r.rp_125),
         format_double(r.rp_15), format_double(r.rp_2), format_double(r.rp_3),
         format_double(r.mp_2)});
  emit(o.out, table,
       {{"command", "counterexample"},
        {"depths", join_csv(o.depths)},
        {"out", o.out}},
       timer);
}

// --- reverse-holder ----------------------------------------------------------

struct ReverseHoelderOpts {
  std::string process = "scalar-cos";
  double scale = 0.5;
  std::vector<int> depths = {8, 10, 12, 14, 16};
  std::vector<double> ps = {1.25, 2.0};
  bool skip_tilde = false;
  std::string out;
};

void run_reverse_hoelder(const ReverseHoelderOpts& o) {
  RunTimer timer;
  CsvTable table;
  table.header = {"name", "N", "p", "rp_ratio", "rp_tilde", "mp_norm"};
  for (int N : o.depths) {
    AdaptedProcess A;
    if (o.process == "scalar-cos") {
      const TreeModel model = bsdelab::build_tree(N, 1.0, 1);
      A = AdaptedProcess::make(model, Shape::matrix_nn, true, false, 1);
      const auto B = bsdelab::brownian_component(model, 0);
      for (int k = 0; k < N; ++k)
        for (std::size_t u = 0; u < model.nodes_at(k); ++u)
          A.at(k, u) = o.scale * std::cos(B[k][u]);
    } else {  // counterexample
      A = bsdelab::build_instance(N).A;
    }
    const bsdelab::MatrixExponential ex = bsdelab::stochastic_exponential(A);
    for (double p : o.ps) {
      const bsdelab::ReverseHoelderReport rep =
          bsdelab::reverse_hoelder_probe(ex, p, !o.skip_tilde);
      table.rows.push_back({o.process, std::to_string(N), format_double(p),
                            format_double(rep.rp_ratio),
                            format_double(rep.rp_tilde),
                            format_double(rep.mp_norm)});
    }
  }
  emit(o.out, table,
       {{"command", "reverse-holder"},
        {"process", o.process},
        {"scale", format_double(o.scale)},
        {"depths", join_csv(o.depths)},
        {"p", join_csv(o.ps)},
        {"skip-tilde", o.skip_tilde ? "true" : "false"},
        {"out", o.out}},
       timer);
}

// --- quadratic ---------------------------------------------------------------

struct QuadraticOpts {
  std::string driver = "colehopf";
  std::string terminal;  // empty = driver default
  int N = 12, d = 1, n = 0;
  double T = 1.0;
  std::vector<double> k_schedule;
  std::string out;
};

bsdelab::Driver named_driver(const std::string& name) {
  if (name == "zero") return bsdelab::make_zero_driver();
  if (name == "colehopf") return bsdelab::make_colehopf_driver();
  return bsdelab::make_tri2_driver();
}

std::vector<double> named_terminal(const std::string& name,
                                   const TreeModel& model, int n) {
  if (name == "bt") return bsdelab::terminal_bt(model);
  if (name == "sign-bt") return bsdelab::terminal_sign_bt(model);
  if (name == "cos-bt") return bsdelab::terminal_cos_bt(model);
  if (name == "tri2") return bsdelab::terminal_tri2(model);
  return bsdelab::terminal_zero(model, n);
}

void run_quadratic(const QuadraticOpts& o) {
  RunTimer timer;
  const bsdelab::Driver driver = named_driver(o.driver);
  if (o.n != 0 && o.n != driver.n)
    throw CLI::ValidationError("--n", "driver '" + o.driver + "' has n = " +
                                          std::to_string(driver.n));
  if (o.d != 1 && o.driver != "zero")
    throw CLI::ValidationError("--d",
                               "builtin driver '" + o.driver + "' needs d = 1");
  const std::string terminal =
      o.terminal.empty() ? (driver.n == 2 ? "tri2" : "bt") : o.terminal;
  const TreeModel model = bsdelab::build_tree(o.N, o.T, o.d);
  const std::vector<double> xi = named_terminal(terminal, model, driver.n);
  if (xi.size() != model.leaf_count() * static_cast<std::size_t>(driver.n))
    throw CLI::ValidationError(
        "--terminal", "terminal '" + terminal + "' does not produce " +
                          std::to_string(driver.n) + " values per leaf");

  const bsdelab::Solution sol =
      bsdelab::solve_quadratic(model, xi, driver, o.k_schedule);
  std::string ab_margin = "", ab_pass = "";
  if (driver.ab) {
    const bsdelab::ABCertificate cert =
        bsdelab::ab_supermartingale_check(sol, *driver.ab);
    ab_margin = format_double(cert.worst);
    ab_pass = cert.pass ? "1" : "0";
  }
  std::string oracle = "", oracle_gap = "";
  if (o.driver == "colehopf") {
    const double y0_star = bsdelab::colehopf_oracle(model, xi);
    oracle = format_double(y0_star);
    oracle_gap = format_double(std::abs(sol.Y.at(0, 0) - y0_star));
  }

  CsvTable table;
  table.header = {"driver", "terminal", "n",        "d",
                  "N",      "T",        "accepted_k", "y0",
                  "residual", "sup_y",  "bmo_z",    "ab_margin",
                  "ab_pass",  "oracle", "oracle_gap"};
  table.rows.push_back(
      {o.driver, terminal, std::to_string(driver.n), std::to_string(o.d),
       std::to_string(o.N), format_double(o.T),
       std::to_string(sol.diag.accepted_k), format_double(sol.Y.at(0, 0)),
       format_double(sol.diag.residual_sup),
       format_double(sol.diag.y_norms.s_inf),
       format_double(sol.diag.z_norms.bmo), ab_margin, ab_pass, oracle,
       oracle_gap});
  emit(o.out, table,
       {{"command", "quadratic"},
        {"driver", o.driver},
        {"terminal", terminal},
        {"n", std::to_string(driver.n)},
        {"d", std::to_string(o.d)},
        {"N", std::to_string(o.N)},
        {"T", format_double(o.T)},
        {"k-schedule",
         o.k_schedule.empty() ? "default" : join_csv(o.k_schedule)},
        {"out", o.out}},
       timer);
}

// --- stability ---------------------------------------------------------------

struct StabilityOpts {
  std::string driver = "colehopf";
  std::string terminal = "bt";
  std::string mode = "xi-shift";
  int N = 8;
  double T = 1.0;
  int eps_count = 4;
  std::string out;
};

void run_stability(const StabilityOpts& o) {
  RunTimer timer;
  const bsdelab::Driver base = named_driver(o.driver);
  if (base.n != 1)
    throw CLI::ValidationError("--driver",
                               "stability sweep uses scalar drivers");
  const TreeModel model = bsdelab::build_tree(o.N, o.T, 1);
  const std::vector<double> xi = named_terminal(o.terminal, model, base.n);

  CsvTable table;
  table.header = {"eps", "lhs", "rhs", "ratio"};
  double eps = 1.0;
  for (int j = 0; j < o.eps_count; ++j, eps *= 0.5) {
    bsdelab::StabilityRow row;
    if (o.mode == "xi-shift") {
      std::vector<double> xi2 = xi;
      for (double& v : xi2) v += eps;
      row = bsdelab::stability_compare(model, xi, base, xi2, base, eps);
    } else {  // driver-shift
      bsdelab::Driver shifted = base;
      const auto base_eval = base.eval;
      const int n = base.n;
      const double shift = eps;
      shifted.eval = [base_eval, n, shift](int level, std::size_t node,
                                           const double* y, const double* z,
                                           double* out) {
        base_eval(level, node, y, z, out);
        for (int i = 0; i < n; ++i) out[i] += shift;
      };
      shifted.name = base.name + "+eps";
      row = bsdelab::stability_compare(model, xi, base, xi, shifted, eps);
    }
    table.rows.push_back({format_double(row.eps), format_double(row.lhs),
                          format_double(row.rhs), format_double(row.ratio)});
  }
  emit(o.out, table,
       {{"command", "stability"},
        {"driver", o.driver},
        {"terminal", o.terminal},
        {"mode", o.mode},
        {"N", std::to_string(o.N)},
        {"T", format_double(o.T)},
        {"eps-count", std::to_string(o.eps_count)},
        {"out", o.out}},
       timer);
}

// Applies a flat key=value config file to a subcommand's options.  CLI11 only
// processes `set_config` on the root app, and the flat format has no sections
// to route keys through it, so the file is applied by hand: every key must be
// one of the subcommand's long option names, and keys whose option was already
// given on the command line are skipped so explicit flags win.
void apply_flat_config(CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : bsdelab::parse_config(path)) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config")
      throw CLI::ConfigError("unknown config key '" + key + "' for " +
                             sub->get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

// Adds --config to the subcommand and runs `body` after the file (if any) has
// been folded into the bound option values.
template <typename Fn>
void finish_subcommand(CLI::App* sub, Fn body) {
  auto cfg = std::make_shared<std::string>();
  sub->add_option("--config", *cfg,
                  "flat key=value config file; explicit flags override");
  sub->callback([sub, cfg, body] {
    if (!cfg->empty()) apply_flat_config(sub, *cfg);
    body();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bsde-lab: exact-tree laboratory for backward equations"};
  app.require_subcommand(1);

  NormsOpts norms;
  CLI::App* sn = app.add_subcommand("norms", "norm report for a named process");
  sn->add_option("--process", norms.process, "process to measure")
      ->check(CLI::IsMember({"random", "brownian", "counterexample"}));
  sn->add_option("--N", norms.N, "tree depth")->check(CLI::PositiveNumber);
  sn->add_option("--d", norms.d, "Brownian dimension");
  sn->add_option("--n", norms.n, "state dimension")->check(CLI::PositiveNumber);
  sn->add_option("--T", norms.T, "horizon")->check(CLI::PositiveNumber);
  sn->add_option("--seed", norms.seed, "generator seed");
  sn->add_option("--out", norms.out, "output CSV path")->required();
  finish_subcommand(sn, [&norms] { run_norms(norms); });

  LinearOpts linear;
  CLI::App* sl =
      app.add_subcommand("linear", "seeded solver-agreement oracle suite");
  sl->add_flag("--oracle-suite", linear.oracle_suite,
               "run the oracle-equivalence suite (the only mode)");
  sl->add_option("--seeds", linear.seeds, "number of seeded instances")
      ->check(CLI::PositiveNumber);
  sl->add_option("--seed", linear.seed, "base seed (instance i uses seed+i)");
  sl->add_option("--out", linear.out, "output CSV path")->required();
  finish_subcommand(sl, [&linear] { run_linear(linear); });

  CounterexampleOpts cx;
  CLI::App* sc = app.add_subcommand(
      "counterexample", "closed-form non-uniqueness instance across depths");
  sc->add_option("--depths", cx.depths, "comma-separated tree depths")
      ->delimiter(',');
  sc->add_option("--out", cx.out, "output CSV path")->required();
  finish_subcommand(sc, [&cx] { run_counterexample(cx); });

  ReverseHoelderOpts rh;
  CLI::App* sr = app.add_subcommand(
      "reverse-holder", "reverse-Hoelder probes of a stochastic exponential");
  sr->add_option("--process", rh.process, "coefficient process")
      ->check(CLI::IsMember({"scalar-cos", "counterexample"}));
  sr->add_option("--scale", rh.scale, "amplitude of the scalar-cos process");
  sr->add_option("--depths", rh.depths, "comma-separated tree depths")
      ->delimiter(',');
  sr->add_option("--p", rh.ps, "comma-separated exponents p > 1")
      ->delimiter(',');
  sr->add_flag("--skip-tilde", rh.skip_tilde,
               "skip the inverse-weighted probe (reports 0)");
  sr->add_option("--out", rh.out, "output CSV path")->required();
  finish_subcommand(sr, [&rh] { run_reverse_hoelder(rh); });

  QuadraticOpts quad;
  CLI::App* sq =
      app.add_subcommand("quadratic", "truncation-cascade quadratic solve");
  sq->add_option("--driver", quad.driver, "builtin driver")
      ->check(CLI::IsMember({"zero", "colehopf", "tri2"}));
  sq->add_option("--terminal", quad.terminal,
                 "terminal condition (default: bt, or tri2 for the tri2 driver)")
      ->check(CLI::IsMember({"bt", "sign-bt", "cos-bt", "tri2", "zero"}));
  sq->add_option("--n", quad.n, "state dimension (must match the driver)");
  sq->add_option("--d", quad.d, "Brownian dimension");
  sq->add_option("--N", quad.N, "tree depth")->check(CLI::PositiveNumber);
  sq->add_option("--T", quad.T, "horizon")->check(CLI::PositiveNumber);
  sq->add_option("--k-schedule", quad.k_schedule,
                 "comma-separated truncation radii")
      ->delimiter(',');
  sq->add_option("--out", quad.out, "output CSV path")->required();
  finish_subcommand(sq, [&quad] { run_quadratic(quad); });

  StabilityOpts stab;
  CLI::App* ss = app.add_subcommand(
      "stability", "perturbation sweep: estimate LHS vs RHS across eps");
  ss->add_option("--driver", stab.driver, "builtin scalar driver")
      ->check(CLI::IsMember({"zero", "colehopf"}));
  ss->add_option("--terminal", stab.terminal, "terminal condition")
      ->check(CLI::IsMember({"bt", "sign-bt", "cos-bt", "zero"}));
  ss->add_option("--mode", stab.mode, "which datum is perturbed")
      ->check(CLI::IsMember({"xi-shift", "driver-shift"}));
  ss->add_option("--N", stab.N, "tree depth")->check(CLI::PositiveNumber);
  ss->add_option("--T", stab.T, "horizon")->check(CLI::PositiveNumber);
  ss->add_option("--eps-count", stab.eps_count,
                 "number of eps values 1, 1/2, 1/4, ...")
      ->check(CLI::PositiveNumber);
  ss->add_option("--out", stab.out, "output CSV path")->required();
  finish_subcommand(ss, [&stab] { run_stability(stab); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const bsdelab::Error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const ToleranceFailure& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
