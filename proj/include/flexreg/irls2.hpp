#pragma once

// Monotone iteratively reweighted least squares for
//
//   J_eps(x) = 1/2 |Ax - y|^2 + alpha sum_k Psi_{eps,p_k}(x_k^2)
//
// (or alpha sum_k log(Psi_{eps,p_k}(x_k^2) + 1) for the log variant).
// Each iteration solves
//
//   (A^T A + alpha diag(w(x^i))) x^{i+1} = A^T y,
//   w_k(x) = p_k / max(eps^{2-p_k}, |x_k|^{2-p_k})   [times 1/(Psi+1) for log],
//
// and J_eps decreases strictly until a fixed point is reached. Stages with
// decreasing eps are chained (eps-continuation) and a list of increasing
// alphas may be warm-started from one another (alpha-continuation).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flexreg/duality.hpp"
#include "flexreg/errors.hpp"
#include "flexreg/metrics.hpp"
#include "flexreg/operators.hpp"
#include "flexreg/penalties.hpp"

namespace flexreg {

enum class Variant { Power, LogPower };

inline std::string_view variant_name(Variant v) {
  return v == Variant::Power ? "power" : "log_power";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "power") return Variant::Power;
  if (s == "log_power" || s == "log" || s == "logpower") return Variant::LogPower;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected power|log_power)");
}

inline PenaltyFamily variant_family(Variant v) {
  return v == Variant::Power ? PenaltyFamily::Power : PenaltyFamily::LogPower;
}

/// Exponents of `pk`, after checking its family matches the variant.
inline Vector variant_exponents(const PenaltySequence& pk, Variant v) {
  if (!pk.homogeneous(variant_family(v))) {
    throw ConfigError("penalty sequence is not of the '" + std::string(variant_name(v)) +
                      "' family required by the solver variant");
  }
  return pk.exponents();
}

/// Diagonal of the reweighted system (alpha excluded).
inline Vector weight_vector(const Eigen::Ref<const Vector>& pk, double eps,
                            const Eigen::Ref<const Vector>& x, Variant variant) {
  detail::require_same_size(static_cast<std::size_t>(pk.size()),
                            static_cast<std::size_t>(x.size()), "weight_vector");
  if (!(eps > 0.0)) throw DomainError("weight_vector: eps must be > 0");
  Vector w(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double p = pk[k];
    const double q = 2.0 - p;
    w[k] = p / std::max(std::pow(eps, q), std::pow(std::abs(x[k]), q));
    if (variant == Variant::LogPower) w[k] /= smoothed_psi(eps, p, x[k] * x[k]) + 1.0;
  }
  return w;
}

inline Vector weight_vector(const PenaltySequence& pk, double eps,
                            const Eigen::Ref<const Vector>& x, Variant variant) {
  return weight_vector(variant_exponents(pk, variant), eps, x, variant);
}

/// sum_k Psi(x_k^2), or sum_k log(Psi(x_k^2) + 1).
inline double smoothed_penalty_sum(const Eigen::Ref<const Vector>& pk, double eps,
                                   const Eigen::Ref<const Vector>& x, Variant variant) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = smoothed_psi(eps, pk[k], x[k] * x[k]);
    s += variant == Variant::Power ? v : std::log1p(v);
  }
  return s;
}

/// J_eps(x). With data y known this is the literal functional; with only
/// f = A^T y it is 1/2 |Ax|^2 - <x, f> + alpha (penalty), which differs by
/// the constant 1/2 |y|^2.
inline double objective_J_eps(const NormalSystem& sys, double alpha, double eps,
                              const Eigen::Ref<const Vector>& pk, Variant variant,
                              const Eigen::Ref<const Vector>& x) {
  detail::require_same_size(static_cast<std::size_t>(x.size()),
                            static_cast<std::size_t>(sys.size()), "objective_J_eps");
  const double pen = alpha * smoothed_penalty_sum(pk, eps, x, variant);
  if (sys.y) return 0.5 * (sys.op.apply(x) - *sys.y).squaredNorm() + pen;
  return 0.5 * x.dot(sys.op.gram_apply(x)) - x.dot(sys.f) + pen;
}

/// |A^T A x - f + alpha w(x) .* x|_inf
inline double optimality_residual_inf(const NormalSystem& sys, double alpha, double eps,
                                      const Eigen::Ref<const Vector>& pk, Variant variant,
                                      const Eigen::Ref<const Vector>& x) {
  return normal_residual_inf(sys, alpha, weight_vector(pk, eps, x, variant), x);
}

inline double optimality_residual_inf(const NormalSystem& sys, double alpha, double eps,
                                      const PenaltySequence& pk, Variant variant,
                                      const Eigen::Ref<const Vector>& x) {
  return optimality_residual_inf(sys, alpha, eps, variant_exponents(pk, variant), variant, x);
}

/// Ridge start x0 = (A^T A + 2 alpha I)^{-1} f.
inline Vector init_x0(const NormalSystem& sys, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("init_x0: alpha must be > 0");
  return gram_solve(sys.op, Vector::Constant(sys.size(), 2.0), alpha, sys.f);
}

struct TraceRecord {
  double alpha = 0.0;
  double eps = 0.0;
  int stage = 0;
  int iteration = 0;
  double objective = 0.0;
  double residual_inf = 0.0;
};

using TraceSink = std::function<void(const TraceRecord&)>;

struct StageResult {
  double eps = 0.0;
  Vector x;
  int iters = 0;
  bool converged = false;
  double residual_inf = 0.0;
  std::vector<double> objective_trace;  ///< J_eps at x^0, x^1, ...
  /// max_i (J(x^{i+1}) - J(x^i)) / (1 + |J(x^i)|); <= 0 for a monotone run.
  double max_increase = -std::numeric_limits<double>::infinity();
  /// max_i of J(x^{i+1}) + 1/2|A dx|^2 + 1/2 sum alpha w_k dx_k^2 - J(x^i).
  double max_descent_excess = -std::numeric_limits<double>::infinity();
};

struct StageOptions {
  double tol_inf = 1e-8;
  int max_iters = 5000;
  double alpha_for_trace = 0.0;
  int stage_index = 0;
  const TraceSink* sink = nullptr;
};

/// One eps level: iterate the reweighted solve from `x_start` until the
/// optimality residual drops to tol_inf or max_iters is reached (then
/// `converged` is false and the last iterate is returned).
inline StageResult irls2_stage(const NormalSystem& sys, double alpha, double eps,
                               const Eigen::Ref<const Vector>& pk, Variant variant,
                               const Eigen::Ref<const Vector>& x_start,
                               const StageOptions& opt = {}) {
  if (!(opt.tol_inf > 0.0)) throw DomainError("irls2_stage: tol_inf must be > 0");
  detail::require_same_size(static_cast<std::size_t>(x_start.size()),
                            static_cast<std::size_t>(sys.size()), "irls2_stage");
  StageResult r;
  r.eps = eps;
  r.x = x_start;
  double J = objective_J_eps(sys, alpha, eps, pk, variant, r.x);
  r.objective_trace.push_back(J);
  Vector w = weight_vector(pk, eps, r.x, variant);
  r.residual_inf = normal_residual_inf(sys, alpha, w, r.x);

  auto emit = [&](int it) {
    if (opt.sink && *opt.sink) {
      (*opt.sink)(TraceRecord{opt.alpha_for_trace, eps, opt.stage_index, it, J, r.residual_inf});
    }
  };
  emit(0);

  while (r.residual_inf > opt.tol_inf && r.iters < opt.max_iters) {
    Vector next = gram_solve(sys.op, w, alpha, sys.f);
    const Vector dx = next - r.x;
    const double J_next = objective_J_eps(sys, alpha, eps, pk, variant, next);
    const double quad = 0.5 * dx.dot(sys.op.gram_apply(dx)) +
                        0.5 * alpha * (w.array() * dx.array().square()).sum();
    r.max_increase = std::max(r.max_increase, (J_next - J) / (1.0 + std::abs(J)));
    r.max_descent_excess = std::max(r.max_descent_excess, J_next + quad - J);

    ++r.iters;
    const bool stalled = dx.lpNorm<Eigen::Infinity>() == 0.0;
    r.x = std::move(next);
    J = J_next;
    r.objective_trace.push_back(J);
    w = weight_vector(pk, eps, r.x, variant);
    r.residual_inf = normal_residual_inf(sys, alpha, w, r.x);
    emit(r.iters);
    // An exact fixed point cannot improve further; the residual is at roundoff.
    if (stalled) break;
  }
  r.converged = r.residual_inf <= opt.tol_inf;
  return r;
}

enum class AlphaContinuation {
  Off,     ///< every alpha starts from its own ridge initialization
  Auto,    ///< cold start first; warm-start from the previous alpha if that fails
  Always,  ///< every alpha after the first starts from the previous solution
};

inline std::string_view continuation_name(AlphaContinuation c) {
  switch (c) {
    case AlphaContinuation::Off: return "off";
    case AlphaContinuation::Auto: return "auto";
    case AlphaContinuation::Always: return "always";
  }
  return "?";
}

inline AlphaContinuation parse_continuation(std::string_view s) {
  if (s == "off") return AlphaContinuation::Off;
  if (s == "auto") return AlphaContinuation::Auto;
  if (s == "always" || s == "on") return AlphaContinuation::Always;
  throw ConfigError("unknown alpha continuation mode '" + std::string(s) + "'");
}

struct Irls2Config {
  std::vector<double> alphas;
  double eps_init = 1e-1;
  double eps_final = 1e-6;
  double eps_factor = 0.1;
  double tol_inf = 1e-8;
  int max_inner_iters = 5000;
  Variant variant = Variant::Power;
  AlphaContinuation alpha_continuation = AlphaContinuation::Always;
  /// Start from x = 0 instead of the ridge initialization.
  bool zero_start = false;

  void validate() const {
    if (alphas.empty()) throw ConfigError("Irls2Config: alpha list is empty");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      if (!(alphas[i] > 0.0)) throw ConfigError("Irls2Config: alphas must be > 0");
      if (i > 0 && !(alphas[i] > alphas[i - 1])) {
        throw ConfigError("Irls2Config: alphas must be strictly increasing");
      }
    }
    if (!(eps_init > 0.0) || !(eps_final > 0.0) || eps_final > eps_init) {
      throw ConfigError("Irls2Config: need 0 < eps_final <= eps_init");
    }
    if (!(eps_factor > 0.0 && eps_factor < 1.0)) {
      throw ConfigError("Irls2Config: eps_factor must lie in (0,1)");
    }
    if (!(tol_inf > 0.0)) throw ConfigError("Irls2Config: tol_inf must be > 0");
    if (max_inner_iters < 1) throw ConfigError("Irls2Config: max_inner_iters must be >= 1");
  }

  /// eps_init, eps_init*factor, ..., ending exactly at eps_final.
  std::vector<double> eps_schedule() const {
    std::vector<double> s;
    double e = eps_init;
    for (int k = 0; e > eps_final * (1.0 + 1e-9); ++k) {
      s.push_back(e);
      e = eps_init * std::pow(eps_factor, k + 1);
    }
    s.push_back(eps_final);
    return s;
  }
};

struct Irls2Report {
  double alpha = 0.0;
  Variant variant = Variant::Power;
  Vector x_final;
  int total_inner_iters = 0;  ///< summed over eps stages of the reported run
  double residual_inf = 0.0;
  double eps_final = 0.0;
  bool converged = false;
  bool warm_started = false;
  std::vector<StageResult> stages;
  SparsityMetrics metrics;

  double max_increase() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& s : stages) m = std::max(m, s.max_increase);
    return m;
  }
  double max_descent_excess() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& s : stages) m = std::max(m, s.max_descent_excess);
    return m;
  }
};

/// All eps stages for one alpha, starting from `x_start`.
inline Irls2Report irls2_path(const NormalSystem& sys, double alpha, const Irls2Config& cfg,
                              const Eigen::Ref<const Vector>& pk,
                              const Eigen::Ref<const Vector>& x_start,
                              const TraceSink* sink = nullptr) {
  Irls2Report rep;
  rep.alpha = alpha;
  rep.variant = cfg.variant;
  Vector x = x_start;
  rep.converged = true;
  int stage_index = 0;
  for (double eps : cfg.eps_schedule()) {
    StageOptions opt{cfg.tol_inf, cfg.max_inner_iters, alpha, stage_index++, sink};
    StageResult st = irls2_stage(sys, alpha, eps, pk, cfg.variant, x, opt);
    rep.total_inner_iters += st.iters;
    rep.converged = rep.converged && st.converged;
    x = st.x;
    rep.stages.push_back(std::move(st));
  }
  rep.x_final = std::move(x);
  rep.eps_final = cfg.eps_final;
  rep.residual_inf = rep.stages.back().residual_inf;
  rep.metrics = compute_metrics(rep.x_final, pk, rep.eps_final, rep.residual_inf);
  return rep;
}

/// Runs the eps-continuation for every alpha in the configured list.
inline std::vector<Irls2Report> solve_continuation(const NormalSystem& sys,
                                                   const Irls2Config& cfg,
                                                   const PenaltySequence& pk,
                                                   const TraceSink* sink = nullptr) {
  cfg.validate();
  const Vector p = variant_exponents(pk, cfg.variant);
  detail::require_same_size(static_cast<std::size_t>(p.size()),
                            static_cast<std::size_t>(sys.size()), "solve_continuation");
  std::vector<Irls2Report> out;
  for (double alpha : cfg.alphas) {
    const Vector cold = cfg.zero_start ? Vector::Zero(sys.size()) : init_x0(sys, alpha);
    const bool have_prev = !out.empty();
    if (cfg.alpha_continuation == AlphaContinuation::Always && have_prev) {
      Irls2Report rep = irls2_path(sys, alpha, cfg, p, out.back().x_final, sink);
      rep.warm_started = true;
      out.push_back(std::move(rep));
      continue;
    }
    Irls2Report rep = irls2_path(sys, alpha, cfg, p, cold, sink);
    if (!rep.converged && cfg.alpha_continuation == AlphaContinuation::Auto && have_prev) {
      Irls2Report warm = irls2_path(sys, alpha, cfg, p, out.back().x_final, sink);
      warm.warm_started = true;
      if (warm.converged || warm.residual_inf < rep.residual_inf) rep = std::move(warm);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

// --- generic reweighted-quadratic scheme ------------------------------------
//
// For F(x) = |Ax - y|^2 + alpha sum_k psi_k(x_k^2) with concave increasing
// psi_k: x^{n+1} solves A^T(Ax - y) + alpha diag(s^n) x = 0, then
// s_k^{n+1} = psi_k'((x_k^{n+1})^2). Note the unhalved data term.

inline double generic_objective(const LinearOperator& A, const Eigen::Ref<const Vector>& y,
                                double alpha, const std::vector<CIFunction>& psis,
                                const Eigen::Ref<const Vector>& x) {
  detail::require_same_size(psis.size(), static_cast<std::size_t>(x.size()),
                            "generic_objective");
  double pen = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) pen += psis[static_cast<std::size_t>(k)](x[k] * x[k]);
  return (A.apply(x) - y).squaredNorm() + alpha * pen;
}

inline std::pair<Vector, Vector> generic_irls2_step(const LinearOperator& A,
                                                    const Eigen::Ref<const Vector>& y,
                                                    double alpha,
                                                    const std::vector<CIFunction>& psis,
                                                    const Eigen::Ref<const Vector>& x_n,
                                                    const Eigen::Ref<const Vector>& s_n) {
  detail::require_same_size(psis.size(), static_cast<std::size_t>(A.cols()),
                            "generic_irls2_step");
  detail::require_same_size(static_cast<std::size_t>(x_n.size()),
                            static_cast<std::size_t>(A.cols()), "generic_irls2_step(x)");
  for (std::size_t k = 0; k < psis.size(); ++k) {
    if (!psis[k].has_supergradient()) {
      throw ConfigError("generic_irls2_step: psi_" + std::to_string(k) + " has no supergradient");
    }
  }
  Vector x = gram_solve(A, s_n, alpha, A.adjoint_apply(y));
  Vector s(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    s[k] = psis[static_cast<std::size_t>(k)].supergradient(x[k] * x[k]);
  }
  return {std::move(x), std::move(s)};
}

}  // namespace flexreg
