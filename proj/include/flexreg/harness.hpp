#pragma once

// Experiment harness: run configuration (defaults, JSON config file,
// FLEXREG_* environment overrides), problem and exponent descriptors, the
// alpha sweep with report output, and the duality self-check.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "flexreg/duality.hpp"
#include "flexreg/errors.hpp"
#include "flexreg/irl1.hpp"
#include "flexreg/irls2.hpp"
#include "flexreg/metrics.hpp"
#include "flexreg/penalties.hpp"
#include "flexreg/problems.hpp"
#include "flexreg/report.hpp"

namespace flexreg {

// --- scalar parsing -----------------------------------------------------------

/// Whole-string floating-point parse; `what` names the field in errors.
inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not an unsigned integer");
  }
  return v;
}

inline int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not an integer");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Rounds to 15 significant digits so that geometric expansions print as
/// the decimal values a user would type (1e-4 * 10^3 -> 0.1).
inline double round_significant(double v) {
  std::ostringstream os;
  os << std::setprecision(15) << v;
  return std::stod(os.str());
}

/// "a..bxF" expands to a, aF, aF^2, ... up to b; otherwise a comma list.
inline std::vector<double> parse_alpha_list(std::string_view s) {
  std::vector<double> out;
  const auto dots = s.find("..");
  if (dots != std::string_view::npos) {
    const auto rest = s.substr(dots + 2);
    const auto x = rest.rfind('x');
    if (x == std::string_view::npos) {
      throw ConfigError("alphas: range '" + std::string(s) + "' needs the form a..bxF");
    }
    const double a = parse_double(s.substr(0, dots), "alphas (start)");
    const double b = parse_double(rest.substr(0, x), "alphas (end)");
    const double f = parse_double(rest.substr(x + 1), "alphas (factor)");
    if (!(a > 0.0) || !(b >= a) || !(f > 1.0)) {
      throw ConfigError("alphas: range needs 0 < a <= b and factor > 1");
    }
    for (int k = 0;; ++k) {
      const double v = round_significant(a * std::pow(f, k));
      if (v > b * (1.0 + 1e-12)) break;
      out.push_back(v);
    }
  } else {
    for (auto part : split(s, ',')) out.push_back(parse_double(part, "alphas"));
  }
  if (out.empty()) throw ConfigError("alphas: empty list");
  return out;
}

// --- descriptors -----------------------------------------------------------------

enum class ProblemKind { MMatrix, HeatControl };

inline std::string_view problem_name(ProblemKind k) {
  return k == ProblemKind::MMatrix ? "mmatrix" : "heat_control";
}

inline ProblemKind parse_problem(std::string_view s) {
  if (s == "mmatrix") return ProblemKind::MMatrix;
  if (s == "heat_control" || s == "control") return ProblemKind::HeatControl;
  throw ConfigError("problem: unknown '" + std::string(s) + "' (expected mmatrix|heat_control)");
}

struct PkDescriptor {
  enum class Kind { Ramp, RampMMatrix, RampControl, Random, Fixed, List };
  Kind kind = Kind::Ramp;
  std::optional<std::uint64_t> seed;  ///< Random: falls back to the run seed
  double p = 0.5;                     ///< Fixed
  std::vector<double> values;         ///< List

  /// Directory-safe name.
  std::string label(std::uint64_t run_seed) const {
    switch (kind) {
      case Kind::Ramp: return "ramp";
      case Kind::RampMMatrix: return "ramp_mmatrix";
      case Kind::RampControl: return "ramp_control";
      case Kind::Random: return "random=" + std::to_string(seed.value_or(run_seed));
      case Kind::Fixed: return "fixed=" + format_number(p, 6);
      case Kind::List: return "list";
    }
    return "?";
  }

  /// Form accepted by parse_pk (lists are serialized as arrays instead).
  std::string descriptor(std::uint64_t run_seed) const {
    switch (kind) {
      case Kind::Random: return "random:" + std::to_string(seed.value_or(run_seed));
      case Kind::Fixed: {
        std::ostringstream os;
        os << std::setprecision(17) << p;
        return "fixed:" + os.str();
      }
      default: return label(run_seed);
    }
  }
};

/// ramp | ramp_mmatrix | ramp_control | random[:seed] | fixed:p | list:p1,p2,...
inline PkDescriptor parse_pk(std::string_view s) {
  PkDescriptor d;
  const auto colon = s.find(':');
  const auto head = s.substr(0, colon);
  const auto arg = colon == std::string_view::npos ? std::string_view{} : s.substr(colon + 1);
  if (head == "ramp" && arg.empty()) {
    d.kind = PkDescriptor::Kind::Ramp;
  } else if (head == "ramp_mmatrix" && arg.empty()) {
    d.kind = PkDescriptor::Kind::RampMMatrix;
  } else if (head == "ramp_control" && arg.empty()) {
    d.kind = PkDescriptor::Kind::RampControl;
  } else if (head == "random") {
    d.kind = PkDescriptor::Kind::Random;
    if (!arg.empty()) d.seed = parse_u64(arg, "pk random seed");
  } else if (head == "fixed" && !arg.empty()) {
    d.kind = PkDescriptor::Kind::Fixed;
    d.p = parse_double(arg, "pk fixed exponent");
  } else if (head == "list" && !arg.empty()) {
    d.kind = PkDescriptor::Kind::List;
    for (auto part : split(arg, ',')) d.values.push_back(parse_double(part, "pk list"));
  } else {
    throw ConfigError("pk: unknown descriptor '" + std::string(s) +
                      "' (expected ramp|ramp_mmatrix|ramp_control|random[:seed]|fixed:p|list:...)");
  }
  return d;
}

enum class SolverKind { Irls2, Irl1 };

inline std::string_view solver_name(SolverKind s) { return s == SolverKind::Irls2 ? "irls2" : "irl1"; }

inline SolverKind parse_solver(std::string_view s) {
  if (s == "irls2") return SolverKind::Irls2;
  if (s == "irl1") return SolverKind::Irl1;
  throw ConfigError("solver: unknown '" + std::string(s) + "' (expected irls2|irl1)");
}

// --- run configuration -----------------------------------------------------------

struct RunConfig {
  ProblemKind problem = ProblemKind::MMatrix;
  int d = 63;                   ///< M-matrix grid size
  bool closed_supports = true;  ///< heat control indicator supports
  PkDescriptor pk;
  SolverKind solver = SolverKind::Irls2;
  Variant variant = Variant::Power;
  std::vector<double> alphas;
  double eps_init = 1e-1;
  double eps_final = 1e-6;
  double eps_factor = 0.1;
  double tol = 1e-8;
  int max_inner_iters = 5000;
  AlphaContinuation alpha_continuation = AlphaContinuation::Always;
  /// Solve the alphas concurrently; requires alpha continuation off.
  bool parallel = false;
  double zero_threshold = kZeroThreshold;
  // IRL1 settings
  double eps_shift = 1e-4;
  double inner_tol = 1e-9;
  int outer_iters = 500;

  std::string out_dir = "flexreg-out";
  std::optional<std::string> trace_path;
  std::uint64_t seed = 0;

  /// Settings used for the published experiments of each problem.
  static RunConfig defaults(ProblemKind kind) {
    RunConfig c;
    c.problem = kind;
    if (kind == ProblemKind::MMatrix) {
      c.alphas = parse_alpha_list("1e-4..10x10");
      c.eps_init = 1e-1;
      c.eps_final = 1e-6;
      c.tol = 1e-8;
    } else {
      c.alphas = {1e-2, 1e-1, 1.0};
      c.eps_init = 1e-3;
      c.eps_final = 1e-8;
      c.tol = 1e-15;
    }
    return c;
  }

  Eigen::Index problem_size() const {
    return problem == ProblemKind::MMatrix ? static_cast<Eigen::Index>(d) * d : 100;
  }

  Irls2Config irls2_config() const {
    Irls2Config c;
    c.alphas = alphas;
    c.eps_init = eps_init;
    c.eps_final = eps_final;
    c.eps_factor = eps_factor;
    c.tol_inf = tol;
    c.max_inner_iters = max_inner_iters;
    c.variant = variant;
    c.alpha_continuation = alpha_continuation;
    return c;
  }

  /// Checks everything that can be checked without building the problem.
  void validate() const {
    if (problem == ProblemKind::MMatrix && d < 2) throw ConfigError("d: must be >= 2");
    const auto n = problem_size();
    using K = PkDescriptor::Kind;
    if (pk.kind == K::RampMMatrix && problem != ProblemKind::MMatrix) {
      throw ConfigError("pk: ramp_mmatrix requires the mmatrix problem");
    }
    if (pk.kind == K::RampControl && (problem != ProblemKind::HeatControl || n != 100)) {
      throw ConfigError("pk: ramp_control requires the heat_control problem (N = 100)");
    }
    if (pk.kind == K::Fixed && !(pk.p > 0.0 && pk.p <= 1.0)) {
      throw ConfigError("pk: fixed exponent must lie in (0, 1]");
    }
    if (pk.kind == K::List) {
      if (static_cast<Eigen::Index>(pk.values.size()) != n) {
        throw ConfigError("pk: list has " + std::to_string(pk.values.size()) +
                          " entries, problem has " + std::to_string(n) + " unknowns");
      }
      for (double v : pk.values) {
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError("pk: list entries must lie in (0, 1]");
      }
    }
    irls2_config().validate();
    if (parallel && alpha_continuation != AlphaContinuation::Off) {
      throw ConfigError("parallel: concurrent alpha sweeps need alpha_continuation = off");
    }
    if (!(zero_threshold > 0.0)) throw ConfigError("zero_threshold: must be > 0");
    if (!(eps_shift >= 0.0)) throw ConfigError("eps_shift: must be >= 0");
    if (!(inner_tol > 0.0)) throw ConfigError("inner_tol: must be > 0");
    if (outer_iters < 1) throw ConfigError("outer_iters: must be >= 1");
    if (out_dir.empty()) throw ConfigError("out: output directory must not be empty");
  }
};

/// Exponent vector for the configured problem.
inline std::vector<double> build_exponents(const RunConfig& cfg) {
  using K = PkDescriptor::Kind;
  const int n = static_cast<int>(cfg.problem_size());
  switch (cfg.pk.kind) {
    case K::Ramp:
      return cfg.problem == ProblemKind::MMatrix ? pk_ramp_mmatrix(n) : pk_ramp_control(n);
    case K::RampMMatrix: return pk_ramp_mmatrix(n);
    case K::RampControl: return pk_ramp_control(n);
    case K::Random: return pk_random(n, cfg.pk.seed.value_or(cfg.seed));
    case K::Fixed: return std::vector<double>(static_cast<std::size_t>(n), cfg.pk.p);
    case K::List: return cfg.pk.values;
  }
  return {};
}

/// The M-matrix ramp starts at 1.1, so its sequence is built permissively.
inline PenaltySequence build_sequence(const RunConfig& cfg, const std::vector<double>& p) {
  using K = PkDescriptor::Kind;
  const bool permissive = cfg.pk.kind == K::RampMMatrix ||
                          (cfg.pk.kind == K::Ramp && cfg.problem == ProblemKind::MMatrix);
  return PenaltySequence::from_exponents(variant_family(cfg.variant), p, permissive);
}

// --- config file and environment -----------------------------------------------

namespace detail {

template <class T>
T json_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`. Unknown keys are errors.
inline void apply_json_config(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  using detail::json_field;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "problem") {
      cfg.problem = parse_problem(json_field<std::string>(j, k));
    } else if (key == "d") {
      cfg.d = json_field<int>(j, k);
    } else if (key == "closed_supports") {
      cfg.closed_supports = json_field<bool>(j, k);
    } else if (key == "pk") {
      if (value.is_string()) {
        cfg.pk = parse_pk(value.get<std::string>());
      } else if (value.is_array()) {
        cfg.pk = PkDescriptor{};
        cfg.pk.kind = PkDescriptor::Kind::List;
        cfg.pk.values = json_field<std::vector<double>>(j, k);
      } else if (value.is_object()) {
        cfg.pk = parse_pk(detail::json_field<std::string>(value, "pk"));
        if (value.contains("p")) cfg.pk.p = detail::json_field<double>(value, "p");
        if (value.contains("seed")) cfg.pk.seed = detail::json_field<std::uint64_t>(value, "seed");
        if (value.contains("values")) {
          cfg.pk.values = detail::json_field<std::vector<double>>(value, "values");
        }
      } else {
        throw ConfigError("config field 'pk': expected a string, list or object");
      }
    } else if (key == "solver") {
      cfg.solver = parse_solver(json_field<std::string>(j, k));
    } else if (key == "variant") {
      cfg.variant = parse_variant(json_field<std::string>(j, k));
    } else if (key == "alphas") {
      cfg.alphas = value.is_string() ? parse_alpha_list(value.get<std::string>())
                                     : json_field<std::vector<double>>(j, k);
    } else if (key == "eps_init") {
      cfg.eps_init = json_field<double>(j, k);
    } else if (key == "eps_final") {
      cfg.eps_final = json_field<double>(j, k);
    } else if (key == "eps_factor") {
      cfg.eps_factor = json_field<double>(j, k);
    } else if (key == "tol") {
      cfg.tol = json_field<double>(j, k);
    } else if (key == "max_inner_iters") {
      cfg.max_inner_iters = json_field<int>(j, k);
    } else if (key == "alpha_continuation") {
      cfg.alpha_continuation = parse_continuation(json_field<std::string>(j, k));
    } else if (key == "parallel") {
      cfg.parallel = json_field<bool>(j, k);
    } else if (key == "zero_threshold") {
      cfg.zero_threshold = json_field<double>(j, k);
    } else if (key == "eps_shift") {
      cfg.eps_shift = json_field<double>(j, k);
    } else if (key == "inner_tol") {
      cfg.inner_tol = json_field<double>(j, k);
    } else if (key == "outer_iters") {
      cfg.outer_iters = json_field<int>(j, k);
    } else if (key == "out") {
      cfg.out_dir = json_field<std::string>(j, k);
    } else if (key == "trace") {
      cfg.trace_path = json_field<std::string>(j, k);
    } else if (key == "seed") {
      cfg.seed = json_field<std::uint64_t>(j, k);
    } else {
      throw ConfigError("config: unknown field '" + key + "'");
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  apply_json_config(cfg, j);
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::string(v);
}

/// Environment variables recognized by apply_env_overrides.
inline constexpr const char* kEnvVars[] = {
    "FLEXREG_ALPHAS",    "FLEXREG_PK",       "FLEXREG_VARIANT",      "FLEXREG_SOLVER",
    "FLEXREG_EPS_INIT",  "FLEXREG_EPS_FINAL", "FLEXREG_EPS_FACTOR",  "FLEXREG_TOL",
    "FLEXREG_MAX_ITERS", "FLEXREG_CONTINUATION", "FLEXREG_OUT",      "FLEXREG_TRACE",
    "FLEXREG_SEED"};

inline void apply_env_overrides(RunConfig& cfg, const EnvLookup& env = process_env) {
  if (auto v = env("FLEXREG_ALPHAS")) cfg.alphas = parse_alpha_list(*v);
  if (auto v = env("FLEXREG_PK")) cfg.pk = parse_pk(*v);
  if (auto v = env("FLEXREG_VARIANT")) cfg.variant = parse_variant(*v);
  if (auto v = env("FLEXREG_SOLVER")) cfg.solver = parse_solver(*v);
  if (auto v = env("FLEXREG_EPS_INIT")) cfg.eps_init = parse_double(*v, "FLEXREG_EPS_INIT");
  if (auto v = env("FLEXREG_EPS_FINAL")) cfg.eps_final = parse_double(*v, "FLEXREG_EPS_FINAL");
  if (auto v = env("FLEXREG_EPS_FACTOR")) cfg.eps_factor = parse_double(*v, "FLEXREG_EPS_FACTOR");
  if (auto v = env("FLEXREG_TOL")) cfg.tol = parse_double(*v, "FLEXREG_TOL");
  if (auto v = env("FLEXREG_MAX_ITERS")) cfg.max_inner_iters = parse_int(*v, "FLEXREG_MAX_ITERS");
  if (auto v = env("FLEXREG_CONTINUATION")) cfg.alpha_continuation = parse_continuation(*v);
  if (auto v = env("FLEXREG_OUT")) cfg.out_dir = *v;
  if (auto v = env("FLEXREG_TRACE")) cfg.trace_path = *v;
  if (auto v = env("FLEXREG_SEED")) cfg.seed = parse_u64(*v, "FLEXREG_SEED");
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"problem", std::string(problem_name(c.problem))},
                   {"pk", c.pk.descriptor(c.seed)},
                   {"solver", std::string(solver_name(c.solver))},
                   {"variant", std::string(variant_name(c.variant))},
                   {"alphas", c.alphas},
                   {"eps_init", c.eps_init},
                   {"eps_final", c.eps_final},
                   {"eps_factor", c.eps_factor},
                   {"tol", c.tol},
                   {"max_inner_iters", c.max_inner_iters},
                   {"alpha_continuation", std::string(continuation_name(c.alpha_continuation))},
                   {"parallel", c.parallel},
                   {"zero_threshold", c.zero_threshold},
                   {"seed", c.seed}};
  if (c.problem == ProblemKind::MMatrix) {
    j["d"] = c.d;
  } else {
    j["closed_supports"] = c.closed_supports;
  }
  if (c.pk.kind == PkDescriptor::Kind::List) j["pk"] = c.pk.values;
  if (c.solver == SolverKind::Irl1) {
    j["eps_shift"] = c.eps_shift;
    j["inner_tol"] = c.inner_tol;
    j["outer_iters"] = c.outer_iters;
  }
  return j;
}

// --- experiment runner ---------------------------------------------------------

struct BuiltProblem {
  NormalSystem system;
  std::optional<int> grid_d;  ///< set for the M-matrix problem
};

inline BuiltProblem build_problem(const RunConfig& cfg) {
  if (cfg.problem == ProblemKind::MMatrix) {
    const auto p = build_mmatrix_problem(cfg.d);
    return {p.system(), cfg.d};
  }
  HeatControlOptions o;
  o.closed_supports = cfg.closed_supports;
  return {build_heat_control_problem(o).system(), std::nullopt};
}

/// Directory name of one alpha: "alpha=" plus the shortest exact decimal.
inline std::string alpha_dir_name(double alpha) {
  std::ostringstream os;
  os << "alpha=" << round_significant(alpha);
  return os.str();
}

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<Vector> solutions;
  std::vector<std::string> warnings;
  std::filesystem::path run_dir;
  bool ok = true;  ///< every alpha converged and passed the invariant checks
};

/// Line-delimited JSON trace writer; safe to call from several threads.
class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) : out_(path) {
    if (!out_) throw ConfigError("trace: cannot open '" + path + "'");
  }
  void write(const TraceRecord& r) {
    const nlohmann::json j{{"alpha", r.alpha},         {"eps", r.eps},
                           {"stage", r.stage},         {"iteration", r.iteration},
                           {"objective", r.objective}, {"residual_inf", r.residual_inf}};
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
  }

 private:
  std::ofstream out_;
  std::mutex mu_;
};

/// Runs the configured sweep and writes
///   <out>/<problem>/<pk>/<variant>/alpha=<v>/{report.json, solution.csv[, grid.csv]}
///   <out>/<problem>/<pk>/<variant>/{table.csv, table.txt, config.json}
///   <out>/<problem>/{table.csv, table.txt}   (copy of the latest run)
/// Progress and warnings go to `log`.
inline ExperimentResult run_experiment(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto problem = build_problem(cfg);
  const auto exps = build_exponents(cfg);
  const auto seq = build_sequence(cfg, exps);
  const Vector pk = seq.exponents();

  std::optional<TraceWriter> trace;
  TraceSink sink;
  if (cfg.trace_path) {
    trace.emplace(*cfg.trace_path);
    sink = [&trace](const TraceRecord& r) { trace->write(r); };
  }
  const TraceSink* sink_ptr = cfg.trace_path ? &sink : nullptr;

  ExperimentResult res;
  if (cfg.solver == SolverKind::Irls2) {
    const Irls2Config icfg = cfg.irls2_config();
    std::vector<Irls2Report> reports;
    if (cfg.parallel) {
      std::vector<std::future<Irls2Report>> jobs;
      for (double alpha : cfg.alphas) {
        jobs.push_back(std::async(std::launch::async, [&, alpha] {
          return irls2_path(problem.system, alpha, icfg, pk, init_x0(problem.system, alpha),
                            sink_ptr);
        }));
      }
      for (auto& j : jobs) reports.push_back(j.get());
    } else {
      reports = solve_continuation(problem.system, icfg, seq, sink_ptr);
    }
    for (auto& r : reports) {
      // Re-count with the configured threshold (the solver uses the default).
      r.metrics = compute_metrics(r.x_final, pk, r.eps_final, r.residual_inf, cfg.zero_threshold);
      res.rows.push_back(make_row(r));
      res.solutions.push_back(r.x_final);
    }
  } else {
    for (double alpha : cfg.alphas) {
      Irl1Config c;
      c.alpha = alpha;
      c.eps_shift = cfg.eps_shift;
      c.inner_tol = cfg.inner_tol;
      c.outer_iters = cfg.outer_iters;
      if (alpha > 0.0) c.x_start = init_x0(problem.system, alpha);
      const auto r = irl1_solve(problem.system, seq, c, sink_ptr);
      res.rows.push_back(make_row(r, pk, cfg.eps_shift, cfg.zero_threshold));
      res.solutions.push_back(r.x);
    }
  }

  const std::string variant_dir = cfg.solver == SolverKind::Irls2
                                      ? std::string(variant_name(cfg.variant))
                                      : "irl1_" + std::string(variant_name(cfg.variant));
  const std::filesystem::path problem_dir =
      std::filesystem::path(cfg.out_dir) / std::string(problem_name(cfg.problem));
  res.run_dir = problem_dir / cfg.pk.label(cfg.seed) / variant_dir;
  std::filesystem::create_directories(res.run_dir);

  auto write_file = [](const std::filesystem::path& p, auto&& body) {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    body(out);
  };

  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& row = res.rows[i];
    const auto dir = res.run_dir / alpha_dir_name(row.alpha);
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json",
               [&](std::ostream& o) { o << nlohmann::json(row).dump(2) << '\n'; });
    write_file(dir / "solution.csv", [&](std::ostream& o) { write_solution_csv(o, res.solutions[i]); });
    if (problem.grid_d) {
      write_file(dir / "grid.csv",
                 [&](std::ostream& o) { write_grid_csv(o, res.solutions[i], *problem.grid_d); });
    }
    if (!row.converged) {
      res.ok = false;
      res.warnings.push_back(alpha_dir_name(row.alpha) + ": did not reach the residual target");
    }
    for (const auto& issue : check_row(row)) {
      res.warnings.push_back(alpha_dir_name(row.alpha) + ": " + issue);
    }
    if (row.nnz_c < 0 || row.nnz_c > row.size || row.sp < 0 || row.sp > row.size) res.ok = false;
  }
  for (const auto& dir : {res.run_dir, problem_dir}) {
    write_file(dir / "table.csv", [&](std::ostream& o) { write_table_csv(o, res.rows); });
    write_file(dir / "table.txt", [&](std::ostream& o) { write_table_text(o, res.rows); });
  }
  write_file(res.run_dir / "config.json",
             [&](std::ostream& o) { o << to_json(cfg).dump(2) << '\n'; });

  write_table_text(log, res.rows);
  for (const auto& w : res.warnings) log << "warning: " << w << '\n';
  return res;
}

// --- duality self-check ----------------------------------------------------------

struct DualityCheckOptions {
  int grid_points = 20;
  double s_min = 1e-2;
  double s_max = 1e2;
};

struct DualityCheckResult {
  double max_fenchel_gap = 0.0;             ///< at pairs (s, psi'(s)), numeric conjugate
  double max_double_conjugate_residual = 0.0;
  double max_power_closed_vs_numeric = 0.0;  ///< relative
  double linear_gap = 0.0;                   ///< linear psi, exact conjugate
  bool any_boundary = false;
};

inline std::vector<double> log_grid(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo)) throw DomainError("log_grid: bad range");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    g[static_cast<std::size_t>(i)] =
        std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (n - 1));
  }
  return g;
}

inline DualityCheckResult run_duality_check(const DualityCheckOptions& opt = {}) {
  const auto grid = log_grid(opt.s_min, opt.s_max, opt.grid_points);
  const std::vector<CIFunction> families = {CIFunction::sqrt(), CIFunction::power(0.25),
                                            CIFunction::log1p()};
  DualityCheckResult r;
  for (const auto& psi : families) {
    for (double s : grid) {
      const double t = psi.supergradient(s);
      const auto conj = concave_conjugate_numeric(psi, t);
      r.any_boundary = r.any_boundary || conj.at_boundary;
      r.max_fenchel_gap = std::max(r.max_fenchel_gap, std::abs(s * t - psi(s) - conj.value));
    }
    const auto dc = double_conjugate_residual(psi, grid);
    r.max_double_conjugate_residual = std::max(r.max_double_conjugate_residual, dc.residual);
    r.any_boundary = r.any_boundary || dc.at_boundary;
  }
  for (double p : {0.25, 0.5, 0.75}) {
    const auto psi = CIFunction::power(p);
    for (double t : grid) {
      const double closed = concave_conjugate_power(p, t);
      const auto num = concave_conjugate_numeric_adaptive(psi, t);
      r.any_boundary = r.any_boundary || num.at_boundary;
      const double numeric = num.value;
      r.max_power_closed_vs_numeric =
          std::max(r.max_power_closed_vs_numeric, std::abs(closed - numeric) / (1.0 + std::abs(closed)));
    }
  }
  const auto lin = CIFunction::linear();
  for (double s : grid) r.linear_gap = std::max(r.linear_gap, std::abs(fenchel_gap(lin, s, 1.0)));
  return r;
}

inline void to_json(nlohmann::json& j, const DualityCheckResult& r) {
  j = nlohmann::json{{"max_fenchel_gap", r.max_fenchel_gap},
                     {"max_double_conjugate_residual", r.max_double_conjugate_residual},
                     {"max_power_closed_vs_numeric", r.max_power_closed_vs_numeric},
                     {"linear_gap", r.linear_gap},
                     {"any_boundary", r.any_boundary}};
}

// --- IRL1 demonstration ----------------------------------------------------------

struct Irl1DemoOptions {
  int m = 20;
  int n = 40;
  int nonzeros = 4;
  double p = 0.5;
  double alpha = 0.05;
  double noise = 0.01;
  double eps_shift = 1e-4;
  double inner_tol = 1e-9;
  std::uint64_t seed = 0;
  std::optional<std::string> out_dir;
};

struct Irl1DemoResult {
  Vector x_true;
  Irl1Report irl1;
  Irls2Report irls2;
  double objective_irl1 = 0.0;   ///< 1/2|Ax - y|^2 + alpha sum |x_k|^p
  double objective_irls2 = 0.0;
  Eigen::Index support_irl1 = 0;
  Eigen::Index support_irls2 = 0;
};

/// Gaussian sensing matrix (entries N(0, 1/m)), a `nonzeros`-sparse signal
/// with unit-magnitude random signs, y = A x + noise; both solvers are run on
/// the same instance.
inline Irl1DemoResult run_irl1_demo(const Irl1DemoOptions& o, std::ostream& log) {
  if (o.m < 1 || o.n < 1 || o.nonzeros < 0 || o.nonzeros > o.n) {
    throw ConfigError("irl1-demo: need m, n >= 1 and 0 <= nonzeros <= n");
  }
  if (!(o.p > 0.0 && o.p <= 1.0)) throw ConfigError("irl1-demo: p must lie in (0, 1]");
  if (!(o.alpha > 0.0)) throw ConfigError("irl1-demo: alpha must be > 0");
  std::mt19937_64 gen(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix A(o.m, o.n);
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    for (Eigen::Index r = 0; r < A.rows(); ++r) A(r, c) = normal(gen) / std::sqrt(double(o.m));
  }
  Irl1DemoResult res;
  res.x_true = Vector::Zero(o.n);
  std::vector<int> idx(static_cast<std::size_t>(o.n));
  for (int i = 0; i < o.n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::shuffle(idx.begin(), idx.end(), gen);
  for (int i = 0; i < o.nonzeros; ++i) {
    res.x_true[idx[static_cast<std::size_t>(i)]] = (gen() & 1U) ? 1.0 : -1.0;
  }
  Vector y = A * res.x_true;
  for (Eigen::Index r = 0; r < y.size(); ++r) y[r] += o.noise * normal(gen);

  const LinearOperator op(A);
  const auto sys = NormalSystem::from_data(op, y);
  const auto seq = PenaltySequence::uniform(PenaltySpec::power(o.p), static_cast<std::size_t>(o.n));

  Irl1Config c1;
  c1.alpha = o.alpha;
  c1.eps_shift = o.eps_shift;
  c1.inner_tol = o.inner_tol;
  c1.x_start = init_x0(sys, o.alpha);
  res.irl1 = irl1_solve(sys, seq, c1);

  Irls2Config c2;
  c2.alphas = {o.alpha};
  c2.eps_init = 1e-1;
  c2.eps_final = 1e-6;
  c2.tol_inf = 1e-10;
  res.irls2 = solve_continuation(sys, c2, seq).front();

  auto objective = [&](const Vector& x) {
    return 0.5 * (op.apply(x) - y).squaredNorm() + o.alpha * sequence_eval(seq, x);
  };
  res.objective_irl1 = objective(res.irl1.x);
  res.objective_irls2 = objective(res.irls2.x_final);
  res.support_irl1 = sparsity_counts(res.irl1.x).first;
  res.support_irls2 = sparsity_counts(res.irls2.x_final).first;

  log << "instance: m=" << o.m << " n=" << o.n << " nonzeros=" << o.nonzeros << " p=" << o.p
      << " alpha=" << o.alpha << " seed=" << o.seed << '\n'
      << "irl1 : outer=" << res.irl1.outer_iters << " inner=" << res.irl1.total_inner_iters
      << " objective=" << res.objective_irl1 << " support=" << res.support_irl1
      << " stationarity=" << res.irl1.stationarity_residual
      << " min_bregman=" << res.irl1.min_bregman()
      << " max_descent_excess=" << res.irl1.max_descent_excess() << '\n'
      << "irls2: iters=" << res.irls2.total_inner_iters << " objective=" << res.objective_irls2
      << " support=" << res.support_irls2 << " residual=" << res.irls2.residual_inf << '\n'
      << "|x_irl1 - x_true|_inf = " << (res.irl1.x - res.x_true).lpNorm<Eigen::Infinity>() << '\n';

  if (o.out_dir) {
    const auto dir = std::filesystem::path(*o.out_dir) / "irl1_demo";
    std::filesystem::create_directories(dir);
    const nlohmann::json j{
        {"m", o.m}, {"n", o.n}, {"nonzeros", o.nonzeros}, {"p", o.p}, {"alpha", o.alpha},
        {"seed", o.seed}, {"eps_shift", o.eps_shift},
        {"irl1", {{"outer_iters", res.irl1.outer_iters},
                  {"inner_iters", res.irl1.total_inner_iters},
                  {"objective", res.objective_irl1},
                  {"support", res.support_irl1},
                  {"stationarity_residual", res.irl1.stationarity_residual},
                  {"converged", res.irl1.converged},
                  {"descent_violation", res.irl1.descent_violation}}},
        {"irls2", {{"iters", res.irls2.total_inner_iters},
                   {"objective", res.objective_irls2},
                   {"support", res.support_irls2},
                   {"residual_inf", res.irls2.residual_inf},
                   {"converged", res.irls2.converged}}}};
    std::ofstream out(dir / "report.json");
    out << j.dump(2) << '\n';
    std::ofstream sol(dir / "solution.csv");
    write_solution_csv(sol, res.irl1.x);
  }
  return res;
}

}  // namespace flexreg
