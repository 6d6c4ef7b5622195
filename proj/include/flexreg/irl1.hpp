#pragma once

// Iteratively reweighted l1 minimization of
//
//   F(x) = 1/2 |Ax - y|^2 + alpha sum_k phi_k(|x_k| + eps)
//
// for concave increasing phi_k. Each outer step solves the convex problem
//
//   x^{n+1} = argmin_x 1/2 |Ax - y|^2 + alpha sum_k s_k^n |x_k|,
//   s_k^{n+1} = phi_k'(|x_k^{n+1}| + eps),
//
// and F decreases by at least 1/2 |A dx|^2 + alpha D(x^{n+1}, x^n), where D
// is a sum of Bregman distances of the convex functions -phi_k.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flexreg/errors.hpp"
#include "flexreg/irls2.hpp"
#include "flexreg/operators.hpp"
#include "flexreg/penalties.hpp"

namespace flexreg {

/// sign(v) max(|v| - tau, 0)
inline double soft_threshold(double v, double tau) {
  if (!(tau >= 0.0)) throw DomainError("soft_threshold: tau must be >= 0");
  const double m = std::abs(v) - tau;
  if (m <= 0.0) return 0.0;
  return v > 0.0 ? m : -m;
}

/// Worst violation of the optimality conditions of
/// min 1/2 |Ax - y|^2 + sum_k tau_k |x_k|, given the gradient g = A^T(Ax - y):
/// |g_k| <= tau_k where x_k = 0, g_k + tau_k sign(x_k) = 0 elsewhere.
inline double weighted_l1_kkt_residual(const Eigen::Ref<const Vector>& g,
                                       const Eigen::Ref<const Vector>& tau,
                                       const Eigen::Ref<const Vector>& x) {
  double r = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = x[k] == 0.0 ? std::max(0.0, std::abs(g[k]) - tau[k])
                                 : std::abs(g[k] + tau[k] * (x[k] > 0.0 ? 1.0 : -1.0));
    r = std::max(r, v);
  }
  return r;
}

/// 1/2 |Ax - y|^2, or 1/2 <x, A^T A x> - <x, f> when only f = A^T y is known
/// (the two differ by the constant 1/2 |y|^2).
inline double data_term(const NormalSystem& sys, const Eigen::Ref<const Vector>& x) {
  if (sys.y) return 0.5 * (sys.op.apply(x) - *sys.y).squaredNorm();
  return 0.5 * x.dot(sys.op.gram_apply(x)) - x.dot(sys.f);
}

struct WeightedL1Result {
  Vector x;
  int iters = 0;
  bool converged = false;  ///< false means the iteration cap was hit
  double kkt_residual = 0.0;
};

struct WeightedL1Options {
  double tol = 1e-9;
  int max_iters = 200000;
  /// |A|^2; estimated by power iteration when absent.
  std::optional<double> lipschitz;
  /// Warm start; zero when absent.
  std::optional<Vector> x0;
};

/// Accelerated proximal gradient (FISTA) with step 1/|A|^2, weighted
/// soft-threshold prox and a restart whenever the composite objective would
/// increase. Stops once the optimality residual is at most `tol`.
inline WeightedL1Result weighted_l1_solve(const NormalSystem& sys,
                                          const Eigen::Ref<const Vector>& tau,
                                          const WeightedL1Options& opt = {}) {
  const LinearOperator& A = sys.op;
  const auto n = A.cols();
  detail::require_same_size(static_cast<std::size_t>(tau.size()), static_cast<std::size_t>(n),
                            "weighted_l1_solve(tau)");
  if ((tau.array() < 0.0).any()) throw DomainError("weighted_l1_solve: tau must be >= 0");
  if (!(opt.tol > 0.0) || opt.max_iters < 1) {
    throw DomainError("weighted_l1_solve: need tol > 0 and max_iters >= 1");
  }

  auto grad = [&](const Vector& v) -> Vector { return A.gram_apply(v) - sys.f; };
  auto composite = [&](const Vector& v) { return data_term(sys, v) + tau.dot(v.cwiseAbs()); };

  WeightedL1Result r;
  r.x = opt.x0 ? *opt.x0 : Vector::Zero(n);
  detail::require_same_size(static_cast<std::size_t>(r.x.size()), static_cast<std::size_t>(n),
                            "weighted_l1_solve(x0)");

  Vector g = grad(r.x);
  r.kkt_residual = weighted_l1_kkt_residual(g, tau, r.x);
  if (r.kkt_residual <= opt.tol) {
    r.converged = true;
    return r;
  }
  // Power iteration slightly underestimates |A|^2; a small margin keeps the
  // step inside the descent range.
  const double L = opt.lipschitz ? *opt.lipschitz : operator_norm_sq(A) * (1.0 + 1e-6);
  if (!(L > 0.0)) throw DomainError("weighted_l1_solve: operator norm must be > 0");

  auto prox_step = [&](const Vector& from, const Vector& g_from) -> Vector {
    Vector out = from - g_from / L;
    for (Eigen::Index k = 0; k < n; ++k) out[k] = soft_threshold(out[k], tau[k] / L);
    return out;
  };

  Vector z = r.x;
  Vector gz = g;
  double t = 1.0;
  double F = composite(r.x);
  while (r.iters < opt.max_iters) {
    ++r.iters;
    Vector next = prox_step(z, gz);
    double F_next = composite(next);
    if (F_next > F) {
      // Momentum overshot: restart with a plain proximal-gradient step.
      t = 1.0;
      next = prox_step(r.x, g);
      F_next = composite(next);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - r.x);
    r.x = std::move(next);
    t = t_next;
    F = F_next;

    g = grad(r.x);
    gz = grad(z);
    r.kkt_residual = weighted_l1_kkt_residual(g, tau, r.x);
    if (r.kkt_residual <= opt.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

inline WeightedL1Result weighted_l1_solve(const LinearOperator& A,
                                          const Eigen::Ref<const Vector>& y,
                                          const Eigen::Ref<const Vector>& tau,
                                          const WeightedL1Options& opt = {}) {
  return weighted_l1_solve(NormalSystem::from_data(A, y), tau, opt);
}

/// s_k = phi_k'(|x_k| + eps_shift).
inline Vector update_weights(const PenaltySequence& seq, const Eigen::Ref<const Vector>& x,
                             double eps_shift) {
  detail::require_same_size(seq.size(), static_cast<std::size_t>(x.size()), "update_weights");
  if (!(eps_shift >= 0.0)) throw DomainError("update_weights: eps_shift must be >= 0");
  Vector s(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double t = std::abs(x[k]) + eps_shift;
    if (!(t > 0.0)) {
      throw DomainError("update_weights: derivative requested at 0 (use eps_shift > 0)");
    }
    s[k] = penalty_derivative(seq[static_cast<std::size_t>(k)], t);
  }
  return s;
}

/// sum_k [phi_k(|x_old,k| + eps) - phi_k(|x_new,k| + eps) - s_old,k (|x_old,k| - |x_new,k|)]
inline double bregman_sum(const PenaltySequence& seq, const Eigen::Ref<const Vector>& x_new,
                          const Eigen::Ref<const Vector>& x_old, double eps_shift,
                          const Eigen::Ref<const Vector>& s_old) {
  detail::require_same_size(seq.size(), static_cast<std::size_t>(x_new.size()), "bregman_sum");
  detail::require_same_size(static_cast<std::size_t>(x_old.size()),
                            static_cast<std::size_t>(x_new.size()), "bregman_sum(x_old)");
  detail::require_same_size(static_cast<std::size_t>(s_old.size()),
                            static_cast<std::size_t>(x_new.size()), "bregman_sum(s_old)");
  double d = 0.0;
  for (Eigen::Index k = 0; k < x_new.size(); ++k) {
    const auto& spec = seq[static_cast<std::size_t>(k)];
    const double a = std::abs(x_old[k]);
    const double b = std::abs(x_new[k]);
    d += penalty_eval(spec, a + eps_shift) - penalty_eval(spec, b + eps_shift) - s_old[k] * (a - b);
  }
  return d;
}

/// Data term plus alpha sum_k phi_k(|x_k| + eps).
inline double shifted_objective(const NormalSystem& sys, double alpha, const PenaltySequence& seq,
                                double eps_shift, const Eigen::Ref<const Vector>& x) {
  detail::require_same_size(seq.size(), static_cast<std::size_t>(x.size()), "shifted_objective");
  double pen = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    pen += penalty_eval(seq[static_cast<std::size_t>(k)], std::abs(x[k]) + eps_shift);
  }
  return data_term(sys, x) + alpha * pen;
}

inline double shifted_objective(const LinearOperator& A, const Eigen::Ref<const Vector>& y,
                                double alpha, const PenaltySequence& seq, double eps_shift,
                                const Eigen::Ref<const Vector>& x) {
  return shifted_objective(NormalSystem::from_data(A, y), alpha, seq, eps_shift, x);
}

/// max_k dist(0, g_k + alpha s_k d|.|(x_k)) with g = A^T A x - f and
/// s_k = phi_k'(|x_k| + eps).
inline double irl1_stationarity_residual(const NormalSystem& sys, double alpha,
                                         const PenaltySequence& seq, double eps_shift,
                                         const Eigen::Ref<const Vector>& x) {
  const Vector g = sys.op.gram_apply(x) - sys.f;
  const Vector tau = alpha * update_weights(seq, x, eps_shift);
  return weighted_l1_kkt_residual(g, tau, x);
}

struct Irl1Config {
  double alpha = 1.0;
  double eps_shift = 1e-4;
  int outer_iters = 500;
  double inner_tol = 1e-9;
  int inner_max_iters = 200000;
  /// Initial iterate; zero when absent. Note that with a small shift x = 0 is
  /// itself stationary whenever |A^T y|_k <= alpha phi_k'(eps) for all k.
  std::optional<Vector> x_start;

  void validate(const PenaltySequence& seq) const {
    if (!(alpha >= 0.0)) throw ConfigError("Irl1Config: alpha must be >= 0");
    if (!(eps_shift >= 0.0)) throw ConfigError("Irl1Config: eps_shift must be >= 0");
    if (outer_iters < 1) throw ConfigError("Irl1Config: outer_iters must be >= 1");
    if (!(inner_tol > 0.0)) throw ConfigError("Irl1Config: inner_tol must be > 0");
    if (inner_max_iters < 1) throw ConfigError("Irl1Config: inner_max_iters must be >= 1");
    if (eps_shift == 0.0) {
      for (const auto& s : seq) {
        if (s.p < 1.0) {
          throw ConfigError(
              "Irl1Config: eps_shift must be > 0 when a penalty has unbounded slope at 0");
        }
      }
    }
  }
};

struct Irl1Step {
  double objective = 0.0;       ///< F(x^{n+1})
  double step_inf = 0.0;        ///< |x^{n+1} - x^n|_inf
  double bregman = 0.0;         ///< D(x^{n+1}, x^n)
  double descent_excess = 0.0;  ///< F(x^{n+1}) + 1/2|A dx|^2 + alpha D - F(x^n)
  int inner_iters = 0;
  bool inner_converged = false;
};

struct Irl1Report {
  double alpha = 0.0;
  Vector x;
  int outer_iters = 0;
  int total_inner_iters = 0;
  bool converged = false;
  /// The descent inequality failed even after tightening the inner tolerance.
  bool descent_violation = false;
  /// The inner tolerance was tightened once to restore descent.
  bool tightened = false;
  double initial_objective = 0.0;
  std::vector<Irl1Step> steps;
  double stationarity_residual = 0.0;

  double final_objective() const {
    return steps.empty() ? initial_objective : steps.back().objective;
  }
  double max_descent_excess() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& s : steps) m = std::max(m, s.descent_excess);
    return m;
  }
  double min_bregman() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : steps) m = std::min(m, s.bregman);
    return m;
  }
};

/// Outer reweighting loop from x^0 (zero unless `x_start` is set). Stops when
/// |x^{n+1} - x^n|_inf drops below inner_tol with the stationarity residual
/// at most 10 inner_tol, or after outer_iters steps. A step that breaks the descent
/// inequality by more than 10 inner_tol is redone once with a 100 times
/// tighter inner tolerance; a second failure sets `descent_violation` and
/// ends the run.
inline Irl1Report irl1_solve(const NormalSystem& sys, const PenaltySequence& seq,
                             const Irl1Config& cfg, const TraceSink* sink = nullptr) {
  cfg.validate(seq);
  const LinearOperator& A = sys.op;
  detail::require_same_size(seq.size(), static_cast<std::size_t>(A.cols()), "irl1_solve");

  const double L = operator_norm_sq(A) * (1.0 + 1e-6);
  double inner_tol = cfg.inner_tol;

  Irl1Report rep;
  rep.alpha = cfg.alpha;
  rep.x = cfg.x_start ? *cfg.x_start : Vector::Zero(A.cols());
  detail::require_same_size(static_cast<std::size_t>(rep.x.size()),
                            static_cast<std::size_t>(A.cols()), "irl1_solve(x_start)");
  Vector s = update_weights(seq, rep.x, cfg.eps_shift);
  double F = shifted_objective(sys, cfg.alpha, seq, cfg.eps_shift, rep.x);
  rep.initial_objective = F;

  auto emit = [&](int it, double obj) {
    if (sink && *sink) {
      (*sink)(TraceRecord{cfg.alpha, cfg.eps_shift, 0, it, obj,
                          irl1_stationarity_residual(sys, cfg.alpha, seq, cfg.eps_shift, rep.x)});
    }
  };
  emit(0, F);

  while (rep.outer_iters < cfg.outer_iters) {
    const Vector tau = cfg.alpha * s;
    auto attempt = [&](double tol, const Vector& start) {
      WeightedL1Options o;
      o.tol = tol;
      o.max_iters = cfg.inner_max_iters;
      o.lipschitz = L;
      o.x0 = start;
      WeightedL1Result inner = weighted_l1_solve(sys, tau, o);
      Irl1Step st;
      const Vector dx = inner.x - rep.x;
      st.objective = shifted_objective(sys, cfg.alpha, seq, cfg.eps_shift, inner.x);
      st.step_inf = dx.lpNorm<Eigen::Infinity>();
      st.bregman = bregman_sum(seq, inner.x, rep.x, cfg.eps_shift, s);
      st.descent_excess =
          st.objective + 0.5 * A.apply(dx).squaredNorm() + cfg.alpha * st.bregman - F;
      st.inner_iters = inner.iters;
      st.inner_converged = inner.converged;
      return std::pair{std::move(inner), st};
    };

    auto [inner, st] = attempt(inner_tol, rep.x);
    rep.total_inner_iters += st.inner_iters;
    const double slack = 10.0 * cfg.inner_tol;
    if (st.descent_excess > slack) {
      if (!rep.tightened) {
        rep.tightened = true;
        inner_tol *= 1e-2;
        std::tie(inner, st) = attempt(inner_tol, inner.x);
        rep.total_inner_iters += st.inner_iters;
      }
      if (st.descent_excess > slack) rep.descent_violation = true;
    }

    ++rep.outer_iters;
    rep.x = std::move(inner.x);
    F = st.objective;
    s = update_weights(seq, rep.x, cfg.eps_shift);
    rep.steps.push_back(st);
    emit(rep.outer_iters, F);
    if (rep.descent_violation) break;
    // A small step alone is not enough when |A|^2 is large: the weights still
    // move by phi''(|x|+eps) times the step, so stationarity is required too.
    if (st.step_inf < cfg.inner_tol &&
        irl1_stationarity_residual(sys, cfg.alpha, seq, cfg.eps_shift, rep.x) <= slack) {
      rep.converged = true;
      break;
    }
  }
  rep.stationarity_residual =
      irl1_stationarity_residual(sys, cfg.alpha, seq, cfg.eps_shift, rep.x);
  return rep;
}

inline Irl1Report irl1_solve(const LinearOperator& A, const Eigen::Ref<const Vector>& y,
                             const PenaltySequence& seq, const Irl1Config& cfg,
                             const TraceSink* sink = nullptr) {
  return irl1_solve(NormalSystem::from_data(A, y), seq, cfg, sink);
}

}  // namespace flexreg
