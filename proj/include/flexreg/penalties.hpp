#pragma once

// Coefficient-wise concave penalties phi_k(|u_k|), their epsilon-smoothed
// quadratic surrogate, and grid checks of the growth/sublevel assumptions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "flexreg/errors.hpp"

namespace flexreg {

enum class PenaltyFamily {
  Power,                ///< t^p
  LogPower,             ///< log(t^p + 1)
  LogPlusPower,         ///< log(t + 1) + t^p
  PowerSumPower,        ///< (t + t^p)^q
  PowerTimesLog,        ///< t^p log(t + 1)
  LinearTimesLogPower,  ///< t (log(t + 1))^p
};

inline std::string_view family_name(PenaltyFamily f) {
  switch (f) {
    case PenaltyFamily::Power: return "power";
    case PenaltyFamily::LogPower: return "log_power";
    case PenaltyFamily::LogPlusPower: return "log_plus_power";
    case PenaltyFamily::PowerSumPower: return "power_sum_power";
    case PenaltyFamily::PowerTimesLog: return "power_times_log";
    case PenaltyFamily::LinearTimesLogPower: return "linear_times_log_power";
  }
  return "unknown";
}

inline PenaltyFamily parse_family(std::string_view name) {
  for (auto f : {PenaltyFamily::Power, PenaltyFamily::LogPower, PenaltyFamily::LogPlusPower,
                 PenaltyFamily::PowerSumPower, PenaltyFamily::PowerTimesLog,
                 PenaltyFamily::LinearTimesLogPower}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown penalty family '" + std::string(name) + "'");
}

/// One scalar penalty phi on [0, inf).
///
/// Exponents are validated on construction: p in (0,1] and, for
/// PowerSumPower only, q in (0,1). With `permissive` the upper bound on p is
/// relaxed to p < 2, which keeps the smoothed surrogate well defined but gives
/// up the sparsity guarantees for that coefficient.
struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::Power;
  double p = 0.5;
  std::optional<double> q;

  PenaltySpec() = default;
  PenaltySpec(PenaltyFamily fam, double p_, std::optional<double> q_ = std::nullopt,
              bool permissive = false)
      : family(fam), p(p_), q(q_) {
    const double p_max = permissive ? 2.0 : 1.0;
    if (!(p > 0.0) || !(permissive ? p < p_max : p <= p_max)) {
      throw DomainError("penalty exponent p=" + std::to_string(p) + " outside " +
                        (permissive ? "(0,2)" : "(0,1]"));
    }
    if (family == PenaltyFamily::PowerSumPower) {
      if (!q || !(*q > 0.0 && *q < 1.0)) {
        throw DomainError("power_sum_power requires q in (0,1)");
      }
    } else if (q) {
      throw DomainError("q is only meaningful for power_sum_power");
    }
  }

  static PenaltySpec power(double p, bool permissive = false) {
    return {PenaltyFamily::Power, p, std::nullopt, permissive};
  }
  static PenaltySpec log_power(double p, bool permissive = false) {
    return {PenaltyFamily::LogPower, p, std::nullopt, permissive};
  }

  friend bool operator==(const PenaltySpec&, const PenaltySpec&) = default;
};

/// phi(t). phi(0) == 0 for every family.
inline double penalty_eval(const PenaltySpec& spec, double t) {
  if (!(t >= 0.0)) throw DomainError("penalty_eval: t must be >= 0");
  const double p = spec.p;
  switch (spec.family) {
    case PenaltyFamily::Power:
      return std::pow(t, p);
    case PenaltyFamily::LogPower:
      return std::log1p(std::pow(t, p));
    case PenaltyFamily::LogPlusPower:
      return std::log1p(t) + std::pow(t, p);
    case PenaltyFamily::PowerSumPower:
      return std::pow(t + std::pow(t, p), *spec.q);
    case PenaltyFamily::PowerTimesLog:
      return std::pow(t, p) * std::log1p(t);
    case PenaltyFamily::LinearTimesLogPower:
      return t * std::pow(std::log1p(t), p);
  }
  return 0.0;
}

/// phi'(t) for t > 0. Refuses t <= 0: several families have an unbounded
/// derivative at the origin.
inline double penalty_derivative(const PenaltySpec& spec, double t) {
  if (!(t > 0.0)) throw DomainError("penalty_derivative: t must be > 0");
  const double p = spec.p;
  const double tp = std::pow(t, p);
  const double dtp = p * tp / t;  // p t^{p-1}
  switch (spec.family) {
    case PenaltyFamily::Power:
      return dtp;
    case PenaltyFamily::LogPower:
      return dtp / (tp + 1.0);
    case PenaltyFamily::LogPlusPower:
      return 1.0 / (t + 1.0) + dtp;
    case PenaltyFamily::PowerSumPower: {
      const double q = *spec.q;
      return q * std::pow(t + tp, q - 1.0) * (1.0 + dtp);
    }
    case PenaltyFamily::PowerTimesLog:
      return dtp * std::log1p(t) + tp / (t + 1.0);
    case PenaltyFamily::LinearTimesLogPower: {
      const double l = std::log1p(t);
      return std::pow(l, p) + t * p * std::pow(l, p - 1.0) / (t + 1.0);
    }
  }
  return 0.0;
}

// --- epsilon-smoothed surrogate of t -> t^{p/2} ---------------------------
//
//   Psi(t) = (p/2) t / eps^{2-p}            for 0 <= t <= eps^2
//          = t^{p/2} - (1 - p/2) eps^p      for t >= eps^2
//
// so that Psi(|x|^2) is a C^1 concave replacement for |x|^p.

/// Psi_{eps,p}(t). Accepts p in (0,2) so that ramps slightly above 1 remain usable.
inline double smoothed_psi(double eps, double p, double t) {
  if (!(t >= 0.0)) throw DomainError("smoothed_psi: t must be >= 0");
  const double e2 = eps * eps;
  if (t <= e2) return 0.5 * p * t / std::pow(eps, 2.0 - p);
  return std::pow(t, 0.5 * p) - (1.0 - 0.5 * p) * std::pow(eps, p);
}

/// Psi'_{eps,p}(t); at the kink t = eps^2 the left branch is used (both
/// one-sided derivatives agree there).
inline double smoothed_psi_derivative(double eps, double p, double t) {
  if (!(t >= 0.0)) throw DomainError("smoothed_psi_derivative: t must be >= 0");
  if (t <= eps * eps) return 0.5 * p / std::pow(eps, 2.0 - p);
  return 0.5 * p * std::pow(t, 0.5 * p - 1.0);
}

/// The pair (eps, p) defining Psi_{eps,p}.
class SmoothedPenalty {
 public:
  SmoothedPenalty(double eps, double p, bool permissive = false) : eps_(eps), p_(p) {
    if (!(eps > 0.0)) throw DomainError("SmoothedPenalty: eps must be > 0");
    if (!(p > 0.0) || !(permissive ? p < 2.0 : p < 1.0)) {
      throw DomainError("SmoothedPenalty: p=" + std::to_string(p) + " out of range");
    }
  }

  double eps() const { return eps_; }
  double p() const { return p_; }
  double operator()(double t) const { return smoothed_psi(eps_, p_, t); }
  double derivative(double t) const { return smoothed_psi_derivative(eps_, p_, t); }

 private:
  double eps_;
  double p_;
};

/// The family {phi_k}; one spec per coefficient.
class PenaltySequence {
 public:
  PenaltySequence() = default;
  explicit PenaltySequence(std::vector<PenaltySpec> specs) : specs_(std::move(specs)) {
    for (const auto& s : specs_) {
      // inf_k p_k > 0 is enforced per spec; a finite sequence has a positive minimum.
      if (!(s.p > 0.0)) throw DomainError("PenaltySequence: exponents must be positive");
    }
  }

  /// Same family for every index, exponents taken from `p`.
  static PenaltySequence from_exponents(PenaltyFamily family, std::span<const double> p,
                                        bool permissive = false) {
    std::vector<PenaltySpec> specs;
    specs.reserve(p.size());
    for (double pk : p) specs.emplace_back(family, pk, std::nullopt, permissive);
    return PenaltySequence(std::move(specs));
  }

  static PenaltySequence uniform(const PenaltySpec& spec, std::size_t n) {
    return PenaltySequence(std::vector<PenaltySpec>(n, spec));
  }

  std::size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }
  const PenaltySpec& operator[](std::size_t k) const { return specs_[k]; }
  auto begin() const { return specs_.begin(); }
  auto end() const { return specs_.end(); }

  Eigen::VectorXd exponents() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(specs_.size()));
    for (std::size_t k = 0; k < specs_.size(); ++k) p[static_cast<Eigen::Index>(k)] = specs_[k].p;
    return p;
  }

  double min_exponent() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : specs_) m = std::min(m, s.p);
    return m;
  }

  /// True when every index uses `family`.
  bool homogeneous(PenaltyFamily family) const {
    return std::all_of(specs_.begin(), specs_.end(),
                       [family](const PenaltySpec& s) { return s.family == family; });
  }

 private:
  std::vector<PenaltySpec> specs_;
};

/// sum_k phi_k(|x_k|)
inline double sequence_eval(const PenaltySequence& seq, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::require_same_size(seq.size(), static_cast<std::size_t>(x.size()), "sequence_eval");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    sum += penalty_eval(seq[static_cast<std::size_t>(k)], std::abs(x[k]));
  }
  return sum;
}

/// Grid check of the growth bound phi_k(t) >= c t/(t+1) and of the uniform
/// sublevel bound (phi_k(t) <= M implies t <= L) for every k.
inline bool verify_assumptions(const PenaltySequence& seq, double c, double M, double L,
                               std::span<const double> grid) {
  for (const auto& spec : seq) {
    for (double t : grid) {
      const double v = penalty_eval(spec, t);
      if (v < c * t / (t + 1.0)) return false;
      if (v <= M && t > L) return false;
    }
  }
  return true;
}

// Closed-form sublevel bounds L(M) for the families where one is known,
// with p = inf_k p_k (and q = inf_k q_k).
namespace sublevel_bound {

inline double power(double M, double p) { return std::max(1.0, std::pow(M, 1.0 / p)); }

inline double log_power(double M, double p) {
  return std::max(1.0, std::pow(std::expm1(M), 1.0 / p));
}

inline double log_plus_power(double M, double p) {
  return std::max(std::exp(M), std::expm1(M) + std::pow(M, 1.0 / p));
}

inline double power_sum_power(double M, double p, double q) {
  return std::max(1.0, std::pow(M, 1.0 / q)) + std::max(1.0, std::pow(M, 1.0 / (p * q)));
}

}  // namespace sublevel_bound

// Growth constants c for which the lower bound holds.
namespace growth_constant {
inline double power() { return 1.0; }
inline double log_power(double p) { return p; }
inline double log_plus_power() { return 2.0; }
inline double power_sum_power() { return 1.0; }
}  // namespace growth_constant

// Structured-text form: {"family":"power","p":0.5} (q only for power_sum_power).
inline void to_json(nlohmann::json& j, const PenaltySpec& s) {
  j = nlohmann::json{{"family", std::string(family_name(s.family))}, {"p", s.p}};
  if (s.q) j["q"] = *s.q;
}

inline void from_json(const nlohmann::json& j, PenaltySpec& s) {
  std::optional<double> q;
  if (j.contains("q")) q = j.at("q").get<double>();
  const bool permissive = j.value("permissive", false);
  s = PenaltySpec(parse_family(j.at("family").get<std::string>()), j.at("p").get<double>(), q,
                  permissive);
}

}  // namespace flexreg
