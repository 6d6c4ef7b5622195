#pragma once

#include <cmath>
#include <cstddef>
#include <tuple>
#include <utility>

#include <Eigen/Core>

#include "flexreg/errors.hpp"

namespace flexreg {

/// Entries with magnitude at or below this count as zero.
inline constexpr double kZeroThreshold = 1e-10;

struct SparsityMetrics {
  Eigen::Index nnz = 0;           ///< #{k : |x_k| > thresh}
  Eigen::Index nz_complement = 0; ///< #{k : |x_k| <= thresh}
  double lp_quasi_norm = 0.0;     ///< sum_k |x_k|^{p_k}
  Eigen::Index singular_count = 0;///< #{k : |x_k| < eps}
  double residual_inf = 0.0;

  Eigen::Index size() const { return nnz + nz_complement; }
};

/// (nnz, nz_complement)
inline std::pair<Eigen::Index, Eigen::Index> sparsity_counts(
    const Eigen::Ref<const Eigen::VectorXd>& x, double thresh = kZeroThreshold) {
  const Eigen::Index nnz = (x.array().abs() > thresh).count();
  return {nnz, x.size() - nnz};
}

inline double lp_quasi_norm(const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& pk) {
  detail::require_same_size(static_cast<std::size_t>(x.size()),
                            static_cast<std::size_t>(pk.size()), "lp_quasi_norm");
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (x[k] != 0.0) s += std::pow(std::abs(x[k]), pk[k]);
  }
  return s;
}

/// Number of singular components: entries strictly below eps in magnitude.
inline Eigen::Index singular_count(const Eigen::Ref<const Eigen::VectorXd>& x, double eps) {
  if (!(eps > 0.0)) throw DomainError("singular_count: eps must be > 0");
  return (x.array().abs() < eps).count();
}

inline SparsityMetrics compute_metrics(const Eigen::Ref<const Eigen::VectorXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& pk,
                                       double eps_final, double residual_inf,
                                       double thresh = kZeroThreshold) {
  SparsityMetrics m;
  std::tie(m.nnz, m.nz_complement) = sparsity_counts(x, thresh);
  m.lp_quasi_norm = lp_quasi_norm(x, pk);
  m.singular_count = singular_count(x, eps_final);
  m.residual_inf = residual_inf;
  return m;
}

}  // namespace flexreg
