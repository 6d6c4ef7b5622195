#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "flexreg/operators.hpp"
#include "flexreg/problems.hpp"

using namespace flexreg;

namespace {

DenseMatrix random_matrix(std::mt19937_64& gen, Eigen::Index m, Eigen::Index n) {
  std::normal_distribution<double> nd;
  DenseMatrix a(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) a(i, j) = nd(gen);
  return a;
}

Vector random_vector(std::mt19937_64& gen, Eigen::Index n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(gen);
  return v;
}

}  // namespace

TEST(Apply, Examples) {
  const LinearOperator id(DenseMatrix(DenseMatrix::Identity(2, 2)));
  EXPECT_EQ(apply(id, Eigen::Vector2d(1, 2)), Eigen::Vector2d(1, 2));

  const LinearOperator D(build_bidiagonal_D(2));
  EXPECT_EQ(D.apply(Eigen::Vector2d(1, 1)), Eigen::Vector3d(1, 0, -1));

  const LinearOperator zero(DenseMatrix(DenseMatrix::Zero(3, 2)));
  EXPECT_EQ(zero.apply(Eigen::Vector2d(5, -7)), Eigen::Vector3d::Zero());
  EXPECT_THROW(zero.apply(Eigen::Vector3d(1, 1, 1)), DimensionError);
}

TEST(Apply, AdjointConsistencyDenseAndSparse) {
  std::mt19937_64 gen(7);
  const DenseMatrix a = random_matrix(gen, 6, 4);
  const LinearOperator dense(a);
  const LinearOperator sparse(SparseMatrix(a.sparseView()));
  for (int probe = 0; probe < 10; ++probe) {
    const Vector x = random_vector(gen, 4);
    for (const auto* op : {&dense, &sparse}) {
      const Vector ax = op->apply(x);
      EXPECT_NEAR(op->adjoint_apply(ax).dot(x), ax.squaredNorm(), 1e-10 * ax.squaredNorm());
      EXPECT_LE((op->gram_apply(x) - a.transpose() * a * x).norm(), 1e-12 * (1 + x.norm()));
    }
  }
  EXPECT_TRUE(sparse.is_sparse());
  EXPECT_FALSE(dense.is_sparse());
}

TEST(GramSolve, ScalarExample) {
  const LinearOperator a(DenseMatrix(DenseMatrix::Constant(1, 1, 1.0)));
  const Vector x = gram_solve(a, Vector::Constant(1, 0.5), 0.5, Vector::Constant(1, 2.0));
  EXPECT_NEAR(x[0], 1.6, 1e-15);
}

TEST(GramSolve, IdentityWithoutRegularization) {
  const LinearOperator a(DenseMatrix(DenseMatrix::Identity(1, 1)));
  const Vector x = gram_solve(a, Vector::Zero(1), 0.0, Vector::Constant(1, 3.0));
  EXPECT_NEAR(x[0], 3.0, 1e-15);
}

TEST(GramSolve, SingularSystemIsReported) {
  const LinearOperator a(DenseMatrix(DenseMatrix::Zero(2, 2)));
  EXPECT_THROW(gram_solve(a, Eigen::Vector2d(1, 0), 1.0, Eigen::Vector2d(1, 1)),
               SingularSystemError);
  EXPECT_THROW(gram_solve(a, Eigen::Vector2d(-1, 1), 1.0, Eigen::Vector2d(1, 1)), DomainError);
}

TEST(GramSolve, ResidualContractOnRandomInstances) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> dim(1, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = dim(gen), n = dim(gen);
    const DenseMatrix a = random_matrix(gen, m, n);
    const Vector w = random_vector(gen, n, 0.01, 2.0);
    const Vector f = random_vector(gen, n, -5, 5);
    const double alpha = 1.0;
    for (const LinearOperator& op : {LinearOperator(a), LinearOperator(SparseMatrix(a.sparseView()))}) {
      const Vector x = gram_solve(op, w, alpha, f);
      const Vector r = a.transpose() * (a * x) + alpha * w.cwiseProduct(x) - f;
      EXPECT_LE(r.lpNorm<Eigen::Infinity>(), gram_solve_tolerance(f));
      const Vector z = random_vector(gen, n);
      EXPECT_GT(z.dot(a.transpose() * (a * z) + alpha * w.cwiseProduct(z)), 0.0);
    }
  }
}

TEST(OperatorNorm, Examples) {
  const LinearOperator diag(DenseMatrix(Eigen::Vector2d(3, 1).asDiagonal()));
  EXPECT_NEAR(operator_norm_sq(diag), 9.0, 1e-9);
  DenseMatrix nil = DenseMatrix::Zero(2, 2);
  nil(0, 1) = 1.0;
  EXPECT_NEAR(operator_norm_sq(LinearOperator(nil)), 1.0, 1e-9);
}

TEST(OperatorNorm, BidiagonalMatchesDenseEigenvalues) {
  const DenseMatrix D = build_bidiagonal_D(10);
  const Eigen::SelfAdjointEigenSolver<DenseMatrix> es(D.transpose() * D);
  const double oracle = es.eigenvalues().maxCoeff();
  EXPECT_NEAR(operator_norm_sq(LinearOperator(D), 1e-14), oracle, 1e-8 * oracle);
}

TEST(Residual, ZeroIterateGivesRhsNorm) {
  const LinearOperator a(DenseMatrix(DenseMatrix::Identity(3, 3)));
  const NormalSystem sys(a, Eigen::Vector3d(1, -4, 2));
  EXPECT_DOUBLE_EQ(normal_residual_inf(sys, 1.0, Eigen::Vector3d(1, 1, 1), Vector::Zero(3)), 4.0);
}

TEST(Residual, FixedPointOfFrozenWeights) {
  std::mt19937_64 gen(3);
  const DenseMatrix a = random_matrix(gen, 5, 3);
  const NormalSystem sys(LinearOperator(a), random_vector(gen, 3));
  const Vector w = random_vector(gen, 3, 0.1, 1.0);
  const Vector x = gram_solve(sys.op, w, 0.7, sys.f);
  EXPECT_LE(normal_residual_inf(sys, 0.7, w, x), 1e-10);
}

TEST(NormalSystemTest, FromDataComputesAdjointRhs) {
  std::mt19937_64 gen(5);
  const DenseMatrix a = random_matrix(gen, 4, 3);
  const Vector y = random_vector(gen, 4);
  const auto sys = NormalSystem::from_data(LinearOperator(a), y);
  ASSERT_TRUE(sys.y.has_value());
  EXPECT_LE((sys.f - a.transpose() * y).norm(), 1e-14);
  EXPECT_THROW(NormalSystem(LinearOperator(a), Vector::Zero(4)), DimensionError);
}

TEST(Coo, RoundTrip) {
  std::mt19937_64 gen(9);
  DenseMatrix a = random_matrix(gen, 4, 5);
  a(1, 2) = 0.0;
  for (const LinearOperator& op : {LinearOperator(a), LinearOperator(SparseMatrix(a.sparseView()))}) {
    std::stringstream ss;
    write_coo(op, ss);
    const auto back = read_coo(ss);
    EXPECT_EQ(back.rows(), 4);
    EXPECT_EQ(back.cols(), 5);
    EXPECT_EQ(back.to_dense(), a);
  }
}
