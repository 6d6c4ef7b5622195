// Command-line driver: experiment sweeps on the two benchmark problems, the
// duality self-check and an IRL1 demonstration on a random instance.
//
// Settings are layered: built-in problem defaults, then --config (JSON),
// then FLEXREG_* environment variables, then command-line flags.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "flexreg/harness.hpp"

namespace {

/// Flags shared by the two experiment subcommands. Everything is optional so
/// that unset flags leave lower-priority settings alone.
struct SweepFlags {
  std::optional<std::string> config;
  std::optional<std::string> alphas;
  std::optional<std::string> pk;
  std::optional<std::string> variant;
  std::optional<std::string> solver;
  std::optional<double> eps_init;
  std::optional<double> eps_final;
  std::optional<double> eps_factor;
  std::optional<double> tol;
  std::optional<int> max_iters;
  std::optional<std::string> continuation;
  bool parallel = false;
  std::optional<double> zero_threshold;
  std::optional<double> eps_shift;
  std::optional<double> inner_tol;
  std::optional<std::string> out;
  std::optional<std::string> trace;
  std::optional<std::uint64_t> seed;
  // problem specific
  std::optional<int> d;
  bool open_supports = false;
};

void add_sweep_flags(CLI::App* cmd, SweepFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration file");
  cmd->add_option("--alphas", f.alphas, "alpha list: a..bxF or comma separated");
  cmd->add_option("--pk", f.pk,
                  "exponents: ramp | ramp_mmatrix | ramp_control | random[:seed] | fixed:p | "
                  "list:p1,p2,...");
  cmd->add_option("--variant", f.variant, "penalty variant: power | log_power");
  cmd->add_option("--solver", f.solver, "irls2 | irl1");
  cmd->add_option("--eps-init", f.eps_init, "first smoothing level");
  cmd->add_option("--eps-final", f.eps_final, "last smoothing level");
  cmd->add_option("--eps-factor", f.eps_factor, "smoothing reduction factor in (0,1)");
  cmd->add_option("--tol", f.tol, "sup-norm residual target of each stage");
  cmd->add_option("--max-iters", f.max_iters, "iteration cap per stage");
  cmd->add_option("--continuation", f.continuation, "alpha continuation: always | auto | off");
  cmd->add_flag("--parallel", f.parallel, "solve the alphas concurrently (needs --continuation off)");
  cmd->add_option("--zero-threshold", f.zero_threshold, "magnitude counted as zero");
  cmd->add_option("--eps-shift", f.eps_shift, "IRL1 weight shift");
  cmd->add_option("--inner-tol", f.inner_tol, "IRL1 inner tolerance");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--trace", f.trace, "write per-iteration trace records (JSON lines) to this file");
  cmd->add_option("--seed", f.seed, "seed for random exponents");
}

flexreg::RunConfig resolve(flexreg::ProblemKind kind, const SweepFlags& f) {
  using namespace flexreg;
  RunConfig cfg = RunConfig::defaults(kind);
  if (f.config) {
    apply_config_file(cfg, *f.config);
    if (cfg.problem != kind) {
      throw ConfigError("config: problem '" + std::string(problem_name(cfg.problem)) +
                        "' does not match the subcommand");
    }
  }
  apply_env_overrides(cfg);
  if (f.alphas) cfg.alphas = parse_alpha_list(*f.alphas);
  if (f.pk) cfg.pk = parse_pk(*f.pk);
  if (f.variant) cfg.variant = parse_variant(*f.variant);
  if (f.solver) cfg.solver = parse_solver(*f.solver);
  if (f.eps_init) cfg.eps_init = *f.eps_init;
  if (f.eps_final) cfg.eps_final = *f.eps_final;
  if (f.eps_factor) cfg.eps_factor = *f.eps_factor;
  if (f.tol) cfg.tol = *f.tol;
  if (f.max_iters) cfg.max_inner_iters = *f.max_iters;
  if (f.continuation) cfg.alpha_continuation = parse_continuation(*f.continuation);
  if (f.parallel) cfg.parallel = true;
  if (f.zero_threshold) cfg.zero_threshold = *f.zero_threshold;
  if (f.eps_shift) cfg.eps_shift = *f.eps_shift;
  if (f.inner_tol) cfg.inner_tol = *f.inner_tol;
  if (f.out) cfg.out_dir = *f.out;
  if (f.trace) cfg.trace_path = *f.trace;
  if (f.seed) cfg.seed = *f.seed;
  if (f.d) cfg.d = *f.d;
  if (f.open_supports) cfg.closed_supports = false;
  return cfg;
}

int run_sweep(flexreg::ProblemKind kind, const SweepFlags& f) {
  const auto cfg = resolve(kind, f);
  const auto res = flexreg::run_experiment(cfg, std::cout);
  std::cout << "reports written to " << res.run_dir.string() << '\n';
  return res.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flexible nonconvex sparsity regularization: experiments and checks"};
  app.require_subcommand(1);

  SweepFlags mm_flags;
  auto* mm = app.add_subcommand("mmatrix", "finite-difference gradient (M-matrix) problem");
  add_sweep_flags(mm, mm_flags);
  mm->add_option("--d", mm_flags.d, "interior grid size (N = d^2)");

  SweepFlags ctl_flags;
  auto* ctl = app.add_subcommand("control", "heat-equation control problem");
  add_sweep_flags(ctl, ctl_flags);
  ctl->add_flag("--open-supports", ctl_flags.open_supports,
                "exclude interval endpoints from the control supports");

  flexreg::DualityCheckOptions dual_opt;
  std::optional<std::string> dual_out;
  auto* dual = app.add_subcommand("duality-check", "concave conjugate self-check");
  dual->add_option("--grid", dual_opt.grid_points, "grid points per axis");
  dual->add_option("--s-min", dual_opt.s_min, "smallest grid value");
  dual->add_option("--s-max", dual_opt.s_max, "largest grid value");
  dual->add_option("--out", dual_out, "write the result as JSON to this file");

  flexreg::Irl1DemoOptions demo;
  auto* irl1 = app.add_subcommand("irl1-demo", "reweighted l1 on a random sparse recovery instance");
  irl1->add_option("--m", demo.m, "measurements");
  irl1->add_option("--n", demo.n, "unknowns");
  irl1->add_option("--nonzeros", demo.nonzeros, "nonzeros of the true signal");
  irl1->add_option("--p", demo.p, "penalty exponent");
  irl1->add_option("--alpha", demo.alpha, "regularization weight");
  irl1->add_option("--noise", demo.noise, "noise standard deviation");
  irl1->add_option("--eps-shift", demo.eps_shift, "weight shift");
  irl1->add_option("--inner-tol", demo.inner_tol, "inner tolerance");
  irl1->add_option("--seed", demo.seed, "instance seed");
  irl1->add_option("--out", demo.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mm->parsed()) return run_sweep(flexreg::ProblemKind::MMatrix, mm_flags);
    if (ctl->parsed()) return run_sweep(flexreg::ProblemKind::HeatControl, ctl_flags);
    if (dual->parsed()) {
      const auto r = flexreg::run_duality_check(dual_opt);
      const nlohmann::json j = r;
      std::cout << j.dump(2) << '\n';
      if (dual_out) std::ofstream(*dual_out) << j.dump(2) << '\n';
      const bool ok = r.max_fenchel_gap <= 1e-6 && r.max_double_conjugate_residual <= 1e-4 &&
                      r.max_power_closed_vs_numeric <= 1e-8 && r.linear_gap <= 1e-12;
      return ok ? 0 : 1;
    }
    if (irl1->parsed()) {
      const auto r = flexreg::run_irl1_demo(demo, std::cout);
      return r.irl1.converged && !r.irl1.descent_violation ? 0 : 1;
    }
  } catch (const flexreg::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
