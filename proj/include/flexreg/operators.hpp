#pragma once

// Linear operators A: R^N -> R^m backed by a dense or sparse matrix, plus the
// weighted normal-equation solve
//
//   (A^T A + alpha diag(w)) x = f
//
// that every reweighted-l2 iteration reduces to.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "flexreg/errors.hpp"

namespace flexreg {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Immutable linear operator. Copies share storage; the Gram matrix A^T A is
/// formed once at construction.
class LinearOperator {
 public:
  LinearOperator() : LinearOperator(DenseMatrix(0, 0)) {}

  explicit LinearOperator(DenseMatrix a) {
    auto impl = std::make_shared<Impl>();
    impl->gram = DenseMatrix(a.transpose() * a);
    impl->matrix = std::move(a);
    impl_ = std::move(impl);
  }

  explicit LinearOperator(SparseMatrix a) {
    a.makeCompressed();
    auto impl = std::make_shared<Impl>();
    SparseMatrix g = SparseMatrix(a.transpose()) * a;
    g.prune(0.0);
    g.makeCompressed();
    impl->gram = std::move(g);
    impl->matrix = std::move(a);
    impl_ = std::move(impl);
  }

  Eigen::Index rows() const {
    return std::visit([](const auto& m) { return m.rows(); }, impl_->matrix);
  }
  Eigen::Index cols() const {
    return std::visit([](const auto& m) { return m.cols(); }, impl_->matrix);
  }
  bool is_sparse() const { return std::holds_alternative<SparseMatrix>(impl_->matrix); }

  /// A x
  Vector apply(const Eigen::Ref<const Vector>& x) const {
    detail::require_same_size(static_cast<std::size_t>(x.size()),
                              static_cast<std::size_t>(cols()), "LinearOperator::apply");
    return std::visit([&](const auto& m) -> Vector { return m * x; }, impl_->matrix);
  }

  /// A^T y
  Vector adjoint_apply(const Eigen::Ref<const Vector>& y) const {
    detail::require_same_size(static_cast<std::size_t>(y.size()),
                              static_cast<std::size_t>(rows()),
                              "LinearOperator::adjoint_apply");
    return std::visit([&](const auto& m) -> Vector { return m.transpose() * y; }, impl_->matrix);
  }

  /// A^T A x, using the stored Gram matrix.
  Vector gram_apply(const Eigen::Ref<const Vector>& x) const {
    detail::require_same_size(static_cast<std::size_t>(x.size()),
                              static_cast<std::size_t>(cols()), "LinearOperator::gram_apply");
    return std::visit([&](const auto& g) -> Vector { return g * x; }, impl_->gram);
  }

  DenseMatrix to_dense() const {
    return std::visit([](const auto& m) -> DenseMatrix { return DenseMatrix(m); }, impl_->matrix);
  }

  DenseMatrix gram_dense() const {
    return std::visit([](const auto& g) -> DenseMatrix { return DenseMatrix(g); }, impl_->gram);
  }

  const DenseMatrix* dense() const { return std::get_if<DenseMatrix>(&impl_->matrix); }
  const SparseMatrix* sparse() const { return std::get_if<SparseMatrix>(&impl_->matrix); }
  const DenseMatrix* dense_gram() const { return std::get_if<DenseMatrix>(&impl_->gram); }
  const SparseMatrix* sparse_gram() const { return std::get_if<SparseMatrix>(&impl_->gram); }

 private:
  struct Impl {
    std::variant<DenseMatrix, SparseMatrix> matrix;
    std::variant<DenseMatrix, SparseMatrix> gram;
  };
  std::shared_ptr<const Impl> impl_;
};

/// Operator together with the dual right-hand side f = A^T y. When the data
/// y itself is known it is kept too, so that the literal least-squares
/// objective can be reported.
struct NormalSystem {
  LinearOperator op;
  Vector f;
  std::optional<Vector> y;

  NormalSystem(LinearOperator a, Vector rhs) : op(std::move(a)), f(std::move(rhs)) {
    detail::require_same_size(static_cast<std::size_t>(f.size()),
                              static_cast<std::size_t>(op.cols()), "NormalSystem");
  }

  static NormalSystem from_data(LinearOperator a, Vector data) {
    detail::require_same_size(static_cast<std::size_t>(data.size()),
                              static_cast<std::size_t>(a.rows()), "NormalSystem::from_data");
    Vector rhs = a.adjoint_apply(data);
    NormalSystem sys(std::move(a), std::move(rhs));
    sys.y = std::move(data);
    return sys;
  }

  Eigen::Index size() const { return op.cols(); }
};

inline Vector apply(const LinearOperator& a, const Eigen::Ref<const Vector>& x) {
  return a.apply(x);
}

/// Relative-residual contract of gram_solve.
inline double gram_solve_tolerance(const Eigen::Ref<const Vector>& f) {
  return 1e-10 * (1.0 + f.lpNorm<Eigen::Infinity>());
}

/// Solves (A^T A + alpha diag(w)) x = f by a fresh Cholesky factorization
/// (sparse for sparse operators, dense otherwise), followed by up to two
/// steps of iterative refinement if the residual contract is missed.
///
/// Throws SingularSystemError when the matrix is not numerically positive
/// definite or the residual stays above 1e-10 (1 + |f|_inf).
inline Vector gram_solve(const LinearOperator& a, const Eigen::Ref<const Vector>& w, double alpha,
                         const Eigen::Ref<const Vector>& f) {
  const auto n = a.cols();
  detail::require_same_size(static_cast<std::size_t>(w.size()), static_cast<std::size_t>(n),
                            "gram_solve(w)");
  detail::require_same_size(static_cast<std::size_t>(f.size()), static_cast<std::size_t>(n),
                            "gram_solve(f)");
  if (!(alpha >= 0.0)) throw DomainError("gram_solve: alpha must be >= 0");
  if ((w.array() < 0.0).any()) throw DomainError("gram_solve: weights must be >= 0");

  const Vector diag = alpha * w;
  auto residual = [&](const Vector& x) -> Vector {
    return a.gram_apply(x) + diag.cwiseProduct(x) - f;
  };
  const double tol = gram_solve_tolerance(f);

  auto refine = [&](auto&& solve) -> Vector {
    Vector x = solve(f);
    for (int step = 0; step < 2; ++step) {
      const Vector r = residual(x);
      if (r.lpNorm<Eigen::Infinity>() <= tol) return x;
      x -= solve(r);
    }
    if (!(residual(x).lpNorm<Eigen::Infinity>() <= tol)) {
      std::ostringstream msg;
      msg << "gram_solve: residual " << residual(x).lpNorm<Eigen::Infinity>()
          << " above tolerance " << tol;
      throw SingularSystemError(msg.str());
    }
    return x;
  };

  if (const auto* g = a.sparse_gram()) {
    SparseMatrix m = *g;
    for (Eigen::Index k = 0; k < n; ++k) m.coeffRef(k, k) += diag[k];
    Eigen::SimplicialLLT<SparseMatrix> llt;
    llt.compute(m);
    if (llt.info() != Eigen::Success) {
      throw SingularSystemError("gram_solve: sparse Cholesky failed (matrix not positive definite)");
    }
    return refine([&](const Vector& rhs) -> Vector { return llt.solve(rhs); });
  }

  DenseMatrix m = *a.dense_gram();
  m.diagonal() += diag;
  Eigen::LLT<DenseMatrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularSystemError("gram_solve: dense Cholesky failed (matrix not positive definite)");
  }
  return refine([&](const Vector& rhs) -> Vector { return llt.solve(rhs); });
}

/// |A|^2 by power iteration on A^T A, stopped when successive Rayleigh
/// quotients agree to `tol` relative.
inline double operator_norm_sq(const LinearOperator& a, double tol = 1e-12,
                               int max_iters = 100000) {
  const auto n = a.cols();
  if (n == 0 || a.rows() == 0) throw DomainError("operator_norm_sq: empty operator");
  // Deterministic start with components in every direction.
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(k));
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector gv = a.gram_apply(v);
    const double next = v.dot(gv);
    const double norm = gv.norm();
    if (norm == 0.0) throw DomainError("operator_norm_sq: operator annihilates the start vector");
    v = gv / norm;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) {
      // The Rayleigh quotient after normalization is the sharper estimate.
      return v.dot(a.gram_apply(v));
    }
    lambda = next;
  }
  throw ConvergenceError("operator_norm_sq: power iteration did not converge");
}

/// |A^T A x + alpha w .* x - f|_inf for a given weight diagonal.
inline double normal_residual_inf(const NormalSystem& sys, double alpha,
                                  const Eigen::Ref<const Vector>& w,
                                  const Eigen::Ref<const Vector>& x) {
  return (sys.op.gram_apply(x) - sys.f + alpha * w.cwiseProduct(x)).lpNorm<Eigen::Infinity>();
}

// Coordinate-format text (debugging aid): a header line "% rows cols nnz"
// followed by one "row col value" triplet per line, zero-based.
inline void write_coo(const LinearOperator& a, std::ostream& out) {
  std::vector<Eigen::Triplet<double>> entries;
  if (const auto* s = a.sparse()) {
    for (Eigen::Index c = 0; c < s->outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(*s, c); it; ++it) {
        entries.emplace_back(it.row(), it.col(), it.value());
      }
    }
  } else {
    const auto& d = *a.dense();
    for (Eigen::Index c = 0; c < d.cols(); ++c) {
      for (Eigen::Index r = 0; r < d.rows(); ++r) {
        if (d(r, c) != 0.0) entries.emplace_back(r, c, d(r, c));
      }
    }
  }
  out << "% " << a.rows() << ' ' << a.cols() << ' ' << entries.size() << '\n';
  out << std::setprecision(17);
  for (const auto& t : entries) out << t.row() << ' ' << t.col() << ' ' << t.value() << '\n';
}

inline LinearOperator read_coo(std::istream& in) {
  std::string line;
  Eigen::Index rows = -1, cols = -1;
  std::vector<Eigen::Triplet<double>> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '%') {
      char pct;
      std::size_t nnz;
      if (!(ls >> pct >> rows >> cols >> nnz)) throw ConfigError("read_coo: bad header");
      entries.reserve(nnz);
      continue;
    }
    Eigen::Index r, c;
    double v;
    if (!(ls >> r >> c >> v)) throw ConfigError("read_coo: bad triplet line '" + line + "'");
    if (rows < 0 || r < 0 || c < 0 || r >= rows || c >= cols) {
      throw ConfigError("read_coo: entry out of range or missing header");
    }
    entries.emplace_back(r, c, v);
  }
  if (rows < 0) throw ConfigError("read_coo: missing header");
  SparseMatrix m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  return LinearOperator(std::move(m));
}

}  // namespace flexreg
