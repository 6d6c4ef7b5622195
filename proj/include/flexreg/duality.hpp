#pragma once

// Concave conjugates of concave increasing functions on [0, inf):
//
//   psi_conj(t) = inf_{s >= 0} ( s t - psi(s) )
//
// with numeric evaluation, the closed form for s^p, Fenchel gaps and a
// double-conjugate residual.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>

#include "flexreg/errors.hpp"

namespace flexreg {

/// A concave, nondecreasing, finite-valued scalar function on [0, inf).
struct CIFunction {
  std::function<double(double)> eval;
  std::function<double(double)> supergradient;  // may be empty
  std::function<double(double)> conjugate;      // closed-form psi_conj; may be empty
  std::string label;

  double operator()(double s) const { return eval(s); }
  bool has_supergradient() const { return static_cast<bool>(supergradient); }
  bool has_conjugate() const { return static_cast<bool>(conjugate); }

  /// s -> s^p, 0 < p < 1.
  static CIFunction power(double p);
  /// s -> sqrt(s)
  static CIFunction sqrt() { return power(0.5); }
  /// s -> s
  static CIFunction linear();
  /// s -> log(s + 1)
  static CIFunction log1p();
};

/// Closed-form conjugate of s^p for t > 0:
///   (p^{-1/(p-1)} - p^{-p/(p-1)}) t^{p/(p-1)}
inline double concave_conjugate_power(double p, double t) {
  if (!(t > 0.0)) throw DomainError("concave_conjugate_power: t must be > 0");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("concave_conjugate_power: p must be in (0,1)");
  const double coeff = 1.0 / std::pow(p, 1.0 / (p - 1.0)) - 1.0 / std::pow(p, p / (p - 1.0));
  return coeff * std::pow(t, p / (p - 1.0));
}

inline CIFunction CIFunction::power(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("CIFunction::power: p must be in (0,1)");
  CIFunction f;
  f.eval = [p](double s) { return std::pow(s, p); };
  f.supergradient = [p](double s) {
    if (!(s > 0.0)) throw DomainError("supergradient of s^p is unbounded at 0");
    return p * std::pow(s, p - 1.0);
  };
  f.conjugate = [p](double t) { return concave_conjugate_power(p, t); };
  f.label = p == 0.5 ? "sqrt" : "pow(" + std::to_string(p) + ")";
  return f;
}

inline CIFunction CIFunction::linear() {
  CIFunction f;
  f.eval = [](double s) { return s; };
  f.supergradient = [](double) { return 1.0; };
  // inf_s s(t-1): 0 for t >= 1, -inf below.
  f.conjugate = [](double t) {
    return t >= 1.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  f.label = "linear";
  return f;
}

inline CIFunction CIFunction::log1p() {
  CIFunction f;
  f.eval = [](double s) { return std::log1p(s); };
  f.supergradient = [](double s) { return 1.0 / (1.0 + s); };
  // Minimizer s = 1/t - 1 when t < 1, else s = 0.
  f.conjugate = [](double t) {
    if (!(t > 0.0)) return -std::numeric_limits<double>::infinity();
    return t >= 1.0 ? 0.0 : 1.0 - t + std::log(t);
  };
  f.label = "log1p";
  return f;
}

struct ConjugateResult {
  double value = 0.0;
  double argmin = 0.0;
  /// The minimizer landed on s_max; the true infimum may be lower.
  bool at_boundary = false;
};

inline double default_conjugate_smax(double t) { return 1e6 * (1.0 + t); }

namespace detail {

/// Minimizes a unimodal g over [0, s_max]: 256 log-spaced points on
/// (0, s_max] plus s = 0, then golden section inside the best bracket.
template <class G>
ConjugateResult minimize_unimodal(G&& g, double s_max, double tol) {
  constexpr int kGrid = 256;
  constexpr double kDecades = 18.0;
  std::array<double, kGrid + 1> s{};
  std::array<double, kGrid + 1> v{};
  s[0] = 0.0;
  v[0] = g(0.0);
  const double lo = std::log10(s_max) - kDecades;
  for (int i = 1; i <= kGrid; ++i) {
    s[i] = i == kGrid ? s_max : std::pow(10.0, lo + kDecades * (i - 1) / (kGrid - 1));
    v[i] = g(s[i]);
  }
  int best = 0;
  for (int i = 1; i <= kGrid; ++i) {
    if (v[i] < v[best]) best = i;
  }

  double a = s[std::max(best - 1, 0)];
  double b = s[std::min(best + 1, kGrid)];
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double gc = g(c);
  double gd = g(d);
  for (int it = 0; it < 400 && (b - a) > tol * (std::abs(a) + std::abs(b)) && (b - a) > 1e-300;
       ++it) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + phi * (b - a);
      gd = g(d);
    }
  }

  ConjugateResult r;
  r.argmin = s[best];
  r.value = v[best];
  for (auto [sc, vc] : {std::pair{c, gc}, std::pair{d, gd}}) {
    if (vc < r.value) {
      r.value = vc;
      r.argmin = sc;
    }
  }
  r.at_boundary = best == kGrid;
  return r;
}

}  // namespace detail

/// psi_conj(t) by direct minimization of s t - psi(s) over [0, s_max].
inline ConjugateResult concave_conjugate_numeric(const CIFunction& psi, double t, double s_max,
                                                 double tol = 1e-10) {
  if (!(t >= 0.0)) throw DomainError("concave_conjugate_numeric: t must be >= 0");
  if (!(s_max > 0.0) || !(tol > 0.0)) {
    throw DomainError("concave_conjugate_numeric: s_max and tol must be > 0");
  }
  return detail::minimize_unimodal([&](double s) { return s * t - psi(s); }, s_max, tol);
}

inline ConjugateResult concave_conjugate_numeric(const CIFunction& psi, double t) {
  return concave_conjugate_numeric(psi, t, default_conjugate_smax(t));
}

/// Like the default-range overload, but grows s_max by 1e3 (up to `max_growths`
/// times) while the minimizer sits on the boundary. Needed for slopes so small
/// that the minimizer lies beyond 1e6 (1 + t), e.g. s^0.75 at t = 1e-2.
inline ConjugateResult concave_conjugate_numeric_adaptive(const CIFunction& psi, double t,
                                                          int max_growths = 20) {
  double s_max = default_conjugate_smax(t);
  auto r = concave_conjugate_numeric(psi, t, s_max);
  for (int i = 0; i < max_growths && r.at_boundary; ++i) {
    s_max *= 1e3;
    r = concave_conjugate_numeric(psi, t, s_max);
  }
  return r;
}

/// s s* - psi(s) - psi_conj(s*), nonnegative by the Fenchel inequality and
/// zero exactly when s* is a supergradient of psi at s. Uses the closed-form
/// conjugate when the function carries one.
inline double fenchel_gap(const CIFunction& psi, double s, double s_star) {
  const double conj = psi.has_conjugate() ? psi.conjugate(s_star)
                                          : concave_conjugate_numeric(psi, s_star).value;
  return s * s_star - psi(s) - conj;
}

struct DoubleConjugateResult {
  double residual = 0.0;
  bool at_boundary = false;
};

/// max over `grid` of |psi_conj_conj(s) - psi(s)|, both conjugations numeric.
inline DoubleConjugateResult double_conjugate_residual(const CIFunction& psi,
                                                       std::span<const double> grid,
                                                       double tol = 1e-10) {
  if (grid.empty()) throw DomainError("double_conjugate_residual: empty grid");
  DoubleConjugateResult out;
  for (double s : grid) {
    bool inner_boundary = false;
    // Outer: inf_t (s t - psi_conj(t)). Its minimizer is a supergradient of
    // psi at s, so the outer range scales like the inner one.
    auto outer = [&](double t) {
      const auto inner = concave_conjugate_numeric(psi, t, default_conjugate_smax(t), tol);
      return s * t - inner.value;
    };
    const auto res = detail::minimize_unimodal(outer, default_conjugate_smax(s), tol);
    // Re-evaluate the inner problem at the winning slope to learn whether it was clipped.
    inner_boundary =
        concave_conjugate_numeric(psi, res.argmin, default_conjugate_smax(res.argmin), tol)
            .at_boundary;
    out.residual = std::max(out.residual, std::abs(res.value - psi(s)));
    out.at_boundary = out.at_boundary || res.at_boundary || inner_boundary;
  }
  return out;
}

}  // namespace flexreg
