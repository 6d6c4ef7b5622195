#pragma once

// The two benchmark problems (finite-difference gradient on the unit square,
// controlled 1-D heat equation) and the exponent sequences used with them.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "flexreg/errors.hpp"
#include "flexreg/operators.hpp"

namespace flexreg {

/// (d+1) x d backward-difference matrix: 1 on the diagonal, -1 on the first
/// subdiagonal.
inline DenseMatrix build_bidiagonal_D(int d) {
  if (d < 1) throw DomainError("build_bidiagonal_D: d must be >= 1");
  DenseMatrix D = DenseMatrix::Zero(d + 1, d);
  for (int i = 0; i < d; ++i) {
    D(i, i) = 1.0;
    D(i + 1, i) = -1.0;
  }
  return D;
}

/// Scaled discrete gradient on a d x d interior grid of the unit square.
///
/// Unknowns are ordered with the x1 index varying fastest, k = i + d j, so
/// that G1 = I (x) D differences along x1 and G2 = D (x) I along x2. A^T A is
/// the 5-point Dirichlet Laplacian scaled by (d+1)^2.
struct MMatrixProblem {
  int d = 0;
  double h = 0.0;
  LinearOperator A;
  Vector f;  ///< dual right-hand side A^T y, sampled directly

  NormalSystem system() const { return NormalSystem(A, f); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(d) * d; }
  static Eigen::Index index(int i, int j, int d) { return i + static_cast<Eigen::Index>(d) * j; }
};

inline double mmatrix_source(double x1, double x2) {
  return 10.0 * x1 * std::sin(5.0 * x2) * std::cos(7.0 * x1);
}

inline MMatrixProblem build_mmatrix_problem(int d) {
  if (d < 2) throw DomainError("build_mmatrix_problem: d must be >= 2");
  const DenseMatrix D = build_bidiagonal_D(d);
  const double scale = d + 1.0;
  const Eigen::Index n = static_cast<Eigen::Index>(d) * d;
  const Eigen::Index block_rows = static_cast<Eigen::Index>(d) * (d + 1);

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(4 * n));
  // G1 = I (x) D: block j of columns maps to block j of rows.
  for (int j = 0; j < d; ++j) {
    for (int c = 0; c < d; ++c) {
      for (int r = 0; r <= d; ++r) {
        if (D(r, c) != 0.0) {
          t.emplace_back(static_cast<Eigen::Index>(j) * (d + 1) + r,
                         static_cast<Eigen::Index>(j) * d + c, scale * D(r, c));
        }
      }
    }
  }
  // G2 = D (x) I: entry D(r, c) couples row r*d + i with column c*d + i.
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r <= d; ++r) {
      if (D(r, c) == 0.0) continue;
      for (int i = 0; i < d; ++i) {
        t.emplace_back(block_rows + static_cast<Eigen::Index>(r) * d + i,
                       static_cast<Eigen::Index>(c) * d + i, scale * D(r, c));
      }
    }
  }
  SparseMatrix A(2 * block_rows, n);
  A.setFromTriplets(t.begin(), t.end());

  MMatrixProblem prob;
  prob.d = d;
  prob.h = 1.0 / (d + 1.0);
  prob.A = LinearOperator(std::move(A));
  prob.f.resize(n);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      prob.f[MMatrixProblem::index(i, j, d)] = mmatrix_source((i + 1) * prob.h, (j + 1) * prob.h);
    }
  }
  return prob;
}

/// Heat equation z_t = z_xx + d1(x) u1(t) + d2(x) u2(t) on (0,1), homogeneous
/// Dirichlet data, z(0) = 0, observed at time T. Space: n interior nodes,
/// second-order differences. Time: midpoint rule with m steps, so
///
///   column (i, k) of A = exp(Lap (T - t_k - dt/2)) d_i dt,  t_k = (k-1) dt.
///
/// Control vector layout: (u1^1..u1^m, u2^1..u2^m).
struct HeatControlProblem {
  int n = 49;
  int m = 50;
  double T = 1.0;
  double dt = 0.0;
  double dx = 0.0;
  DenseMatrix laplacian;  ///< (1/dx^2) tridiag(1, -2, 1)
  Vector eigenvalues;     ///< ascending
  DenseMatrix eigenvectors;
  Vector d1, d2;  ///< 0/1 indicator vectors of the control supports
  Vector y;       ///< target state
  LinearOperator A;

  NormalSystem system() const { return NormalSystem::from_data(A, y); }

  double node(int j) const { return j / static_cast<double>(n + 1); }

  /// exp(Lap tau) v through the stored eigendecomposition.
  Vector propagate(double tau, const Eigen::Ref<const Vector>& v) const {
    const Vector decay = (eigenvalues * tau).array().exp().matrix();
    return eigenvectors * decay.cwiseProduct(eigenvectors.transpose() * v);
  }

  /// Coefficient index of control `which` (0 or 1) at time step k (0-based).
  Eigen::Index control_index(int which, int k) const {
    return static_cast<Eigen::Index>(which) * m + k;
  }
};

/// Analytic eigenvalues of (1/dx^2) tridiag(1,-2,1) of size n, ascending:
/// -(2/dx^2)(1 - cos(j pi/(n+1))), j = n..1.
inline Vector dirichlet_laplacian_eigenvalues(int n, double dx) {
  Vector lam(n);
  for (int j = 1; j <= n; ++j) {
    lam[n - j] = -(2.0 / (dx * dx)) * (1.0 - std::cos(j * std::numbers::pi / (n + 1)));
  }
  return lam;
}

struct HeatControlOptions {
  int n = 49;
  int m = 50;
  double T = 1.0;
  /// Indicator supports include the interval endpoints, which fall on grid
  /// nodes (six nodes per control). With false only the four strictly
  /// interior nodes are used.
  bool closed_supports = true;
};

inline HeatControlProblem build_heat_control_problem(const HeatControlOptions& opt = {}) {
  if (opt.n < 1 || opt.m < 1 || !(opt.T > 0.0)) {
    throw DomainError("build_heat_control_problem: invalid discretization");
  }
  HeatControlProblem p;
  p.n = opt.n;
  p.m = opt.m;
  p.T = opt.T;
  p.dx = 1.0 / (p.n + 1);
  p.dt = p.T / p.m;

  p.laplacian = DenseMatrix::Zero(p.n, p.n);
  const double inv_dx2 = 1.0 / (p.dx * p.dx);
  for (int i = 0; i < p.n; ++i) {
    p.laplacian(i, i) = -2.0 * inv_dx2;
    if (i + 1 < p.n) {
      p.laplacian(i, i + 1) = inv_dx2;
      p.laplacian(i + 1, i) = inv_dx2;
    }
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(p.laplacian);
  p.eigenvalues = eig.eigenvalues();
  p.eigenvectors = eig.eigenvectors();

  auto indicator = [&](double a, double b) {
    Vector v = Vector::Zero(p.n);
    for (int j = 1; j <= p.n; ++j) {
      const double x = p.node(j);
      const bool inside = opt.closed_supports ? (x >= a && x <= b) : (x > a && x < b);
      if (inside) v[j - 1] = 1.0;
    }
    return v;
  };
  p.d1 = indicator(0.2, 0.3);
  p.d2 = indicator(0.6, 0.7);

  p.y.resize(p.n);
  for (int j = 1; j <= p.n; ++j) {
    const double x = p.node(j);
    p.y[j - 1] = 0.4 * std::exp(-70.0 * (x - 0.7) * (x - 0.7));
  }

  DenseMatrix A(p.n, 2 * p.m);
  for (int k = 0; k < p.m; ++k) {
    const double tau = p.T - k * p.dt - 0.5 * p.dt;
    A.col(p.control_index(0, k)) = p.propagate(tau, p.d1) * p.dt;
    A.col(p.control_index(1, k)) = p.propagate(tau, p.d2) * p.dt;
  }
  p.A = LinearOperator(std::move(A));
  return p;
}

// --- exponent sequences ----------------------------------------------------

namespace detail {

/// MATLAB-style linspace with exact endpoints.
inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  v.back() = b;
  return v;
}

}  // namespace detail

/// p_i = 0.1 + 1/P_i with P = linspace(1, 100, N): decreases from 1.1 to 0.11.
inline std::vector<double> pk_ramp_mmatrix(int N) {
  if (N < 2) throw DomainError("pk_ramp_mmatrix: N must be >= 2");
  auto p = detail::linspace(1.0, 100.0, N);
  for (double& v : p) v = 0.1 + 1.0 / v;
  return p;
}

/// Reverse of 0.5 + 1/P with P = linspace(2, 100, N): increases from 0.51 to 1.
inline std::vector<double> pk_ramp_control(int N) {
  if (N < 2) throw DomainError("pk_ramp_control: N must be >= 2");
  auto P = detail::linspace(2.0, 100.0, N);
  std::vector<double> p(P.size());
  for (std::size_t i = 0; i < P.size(); ++i) p[P.size() - 1 - i] = 0.5 + 1.0 / P[i];
  return p;
}

/// N exponents uniform in the open interval (0, 1), reproducible from `seed`.
/// The raw engine output is mapped by hand (53 bits to the midpoint of their
/// dyadic cell) because std::uniform_real_distribution is
/// implementation-defined and may return 0.
inline std::vector<double> pk_random(int N, std::uint64_t seed) {
  if (N < 1) throw DomainError("pk_random: N must be >= 1");
  std::mt19937_64 gen(seed);
  std::vector<double> p(static_cast<std::size_t>(N));
  for (double& v : p) v = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
  return p;
}

}  // namespace flexreg
