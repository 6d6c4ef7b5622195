#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flexreg/irls2.hpp"
#include "flexreg/problems.hpp"

using namespace flexreg;

namespace {

LinearOperator scalar_op(double a) { return LinearOperator(DenseMatrix(DenseMatrix::Constant(1, 1, a))); }

NormalSystem random_system(std::mt19937_64& gen, int m, int n) {
  std::normal_distribution<double> nd;
  DenseMatrix a(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) a(i, j) = nd(gen);
  Vector y(m);
  for (auto& v : y) v = nd(gen);
  return NormalSystem::from_data(LinearOperator(a), y);
}

CIFunction smoothed_as_ci(double eps, double p) {
  CIFunction f;
  f.eval = [=](double t) { return smoothed_psi(eps, p, t); };
  f.supergradient = [=](double t) { return smoothed_psi_derivative(eps, p, t); };
  f.label = "Psi";
  return f;
}

}  // namespace

TEST(InitX0, Examples) {
  const NormalSystem sys(LinearOperator(DenseMatrix(DenseMatrix::Identity(2, 2))), Eigen::Vector2d(2, 4));
  const Vector x = init_x0(sys, 0.5);
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 2.0, 1e-15);
  EXPECT_THROW(init_x0(sys, 0.0), DomainError);

  const NormalSystem s1(scalar_op(1.0), Vector::Constant(1, 3.0));
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {1e-3, 1e-2, 0.1, 1.0, 10.0, 1e3}) {
    const double v = std::abs(init_x0(s1, alpha)[0]);
    EXPECT_NEAR(v, 3.0 / (1 + 2 * alpha), 1e-14);
    EXPECT_LT(v, prev);
    prev = v;
  }

  std::mt19937_64 gen(2);
  const auto sys3 = random_system(gen, 5, 3);
  const Vector x3 = init_x0(sys3, 1.0);
  EXPECT_LE((sys3.op.gram_apply(x3) + 2.0 * x3 - sys3.f).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(WeightVector, Examples) {
  const Vector p = Vector::Constant(1, 0.5);
  EXPECT_DOUBLE_EQ(weight_vector(p, 1.0, Vector::Zero(1), Variant::Power)[0], 0.5);
  EXPECT_DOUBLE_EQ(weight_vector(p, 1.0, Vector::Constant(1, 4.0), Variant::Power)[0], 0.0625);
  EXPECT_DOUBLE_EQ(weight_vector(p, 1.0, Vector::Zero(1), Variant::LogPower)[0], 0.5);
  EXPECT_THROW(weight_vector(p, 0.0, Vector::Zero(1), Variant::Power), DomainError);
}

TEST(WeightVector, SequenceFamilyMustMatchVariant) {
  const auto seq = PenaltySequence::uniform(PenaltySpec::power(0.5), 2);
  EXPECT_NO_THROW(weight_vector(seq, 0.1, Vector::Zero(2), Variant::Power));
  EXPECT_THROW(weight_vector(seq, 0.1, Vector::Zero(2), Variant::LogPower), ConfigError);
}

TEST(Objective, Examples) {
  const auto with_y = NormalSystem::from_data(scalar_op(1.0), Vector::Constant(1, 2.0));
  const Vector p = Vector::Constant(1, 0.5);
  EXPECT_DOUBLE_EQ(objective_J_eps(with_y, 0.1, 1e-3, p, Variant::Power, Vector::Zero(1)), 2.0);
  const NormalSystem f_only(scalar_op(1.0), Vector::Constant(1, 2.0));
  EXPECT_DOUBLE_EQ(objective_J_eps(f_only, 0.1, 1e-3, p, Variant::Power, Vector::Zero(1)), 0.0);

  // x = 1.5, eps = 0.1, p = 0.5: 1/2 (0.5)^2 + 0.1 (1.5^0.5 - 0.75 * 0.1^0.5)
  const double x = 1.5;
  const double hand = 0.125 + 0.1 * (std::sqrt(x) - 0.75 * std::sqrt(0.1));
  EXPECT_NEAR(objective_J_eps(with_y, 0.1, 0.1, p, Variant::Power, Vector::Constant(1, x)), hand, 1e-15);
  EXPECT_NEAR(objective_J_eps(f_only, 0.1, 0.1, p, Variant::Power, Vector::Constant(1, x)), hand - 2.0, 1e-15);
  const double hand_log = 0.125 + 0.1 * std::log1p(std::sqrt(x) - 0.75 * std::sqrt(0.1));
  EXPECT_NEAR(objective_J_eps(with_y, 0.1, 0.1, p, Variant::LogPower, Vector::Constant(1, x)), hand_log, 1e-15);
}

TEST(Residual, ScalarHandComputed) {
  // A = 1, f = 2, alpha = 0.1, p = 0.5, eps = 0.1, x = 1.5: 1.5 - 2 + 0.1 * 0.5 / 1.5^1.5 * 1.5
  const NormalSystem sys(scalar_op(1.0), Vector::Constant(1, 2.0));
  const double r = optimality_residual_inf(sys, 0.1, 0.1, Vector::Constant(1, 0.5), Variant::Power,
                                           Vector::Constant(1, 1.5));
  EXPECT_NEAR(r, std::abs(-0.5 + 0.05 / std::sqrt(1.5)), 1e-15);
}

TEST(Stage, ZeroDataReachesZeroQuickly) {
  const NormalSystem sys(scalar_op(1.0), Vector::Zero(1));
  const auto r = irls2_stage(sys, 0.3, 1e-2, Vector::Constant(1, 0.5), Variant::Power,
                             Vector::Constant(1, 7.0));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iters, 2);
  EXPECT_EQ(r.x[0], 0.0);
  EXPECT_EQ(r.residual_inf, 0.0);
}

TEST(Stage, ScalarMatchesGridSearch) {
  const auto sys = NormalSystem::from_data(scalar_op(1.0), Vector::Constant(1, 2.0));
  const double alpha = 0.1, eps = 1e-4;
  const Vector p = Vector::Constant(1, 0.5);
  StageOptions opt;
  opt.tol_inf = 1e-13;
  const auto r = irls2_stage(sys, alpha, eps, p, Variant::Power, Vector::Constant(1, 2.0), opt);
  ASSERT_TRUE(r.converged);

  double best_x = 0.0, best = std::numeric_limits<double>::infinity();
  const int n = 1000000;
  for (int i = 0; i <= n; ++i) {
    const double x = -1.0 + 4.0 * i / n;
    const double v = 0.5 * (x - 2) * (x - 2) + alpha * smoothed_psi(eps, 0.5, x * x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  EXPECT_NEAR(r.x[0], best_x, 1e-4);
}

TEST(Stage, FixedPointReturnsImmediately) {
  const auto sys = NormalSystem::from_data(scalar_op(1.0), Vector::Constant(1, 2.0));
  const Vector p = Vector::Constant(1, 0.5);
  StageOptions opt;
  opt.tol_inf = 1e-12;
  const auto first = irls2_stage(sys, 0.1, 1e-3, p, Variant::Power, Vector::Constant(1, 2.0), opt);
  ASSERT_TRUE(first.converged);
  const auto again = irls2_stage(sys, 0.1, 1e-3, p, Variant::Power, first.x, opt);
  EXPECT_EQ(again.iters, 0);
  EXPECT_EQ(again.x, first.x);
}

TEST(Stage, MonotoneWithQuantifiedDescentOnRandomInstances) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> dim(1, 30);
  std::uniform_real_distribution<double> pu(0.1, 0.9);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = dim(gen), n = dim(gen);
    const auto sys = random_system(gen, m, n);
    Vector p(n);
    for (auto& v : p) v = pu(gen);
    for (Variant var : {Variant::Power, Variant::LogPower}) {
      StageOptions opt;
      opt.tol_inf = 1e-10;
      const auto r = irls2_stage(sys, 0.5, 1e-3, p, var, init_x0(sys, 0.5), opt);
      EXPECT_LE(r.max_increase, 1e-10);
      EXPECT_LE(r.max_descent_excess, 1e-9);
      for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
        EXPECT_LE(r.objective_trace[i],
                  r.objective_trace[i - 1] + 1e-10 * (1 + std::abs(r.objective_trace[i - 1])));
      }
    }
  }
}

TEST(Config, ScheduleAndValidation) {
  Irls2Config c;
  c.alphas = {1.0};
  EXPECT_EQ(c.eps_schedule().size(), 6u);
  c.eps_init = 1e-3;
  c.eps_final = 1e-8;
  const auto s = c.eps_schedule();
  ASSERT_EQ(s.size(), 6u);
  EXPECT_DOUBLE_EQ(s.front(), 1e-3);
  EXPECT_DOUBLE_EQ(s.back(), 1e-8);
  c.eps_final = c.eps_init;
  EXPECT_EQ(c.eps_schedule().size(), 1u);
  EXPECT_NO_THROW(c.validate());

  auto bad = c;
  bad.alphas = {1.0, 0.5};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.eps_final = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.eps_factor = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.alphas.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Names, VariantAndContinuationParsing) {
  EXPECT_EQ(parse_variant("power"), Variant::Power);
  EXPECT_EQ(parse_variant("log_power"), Variant::LogPower);
  EXPECT_EQ(parse_variant(variant_name(Variant::LogPower)), Variant::LogPower);
  EXPECT_THROW(parse_variant("cubic"), ConfigError);
  EXPECT_EQ(parse_continuation("auto"), AlphaContinuation::Auto);
  EXPECT_EQ(parse_continuation("off"), AlphaContinuation::Off);
  EXPECT_EQ(parse_continuation(continuation_name(AlphaContinuation::Always)), AlphaContinuation::Always);
  EXPECT_THROW(parse_continuation("maybe"), ConfigError);
}

TEST(Continuation, SingleStageEqualsStage) {
  std::mt19937_64 gen(4);
  const auto sys = random_system(gen, 8, 5);
  const auto seq = PenaltySequence::uniform(PenaltySpec::power(0.5), 5);
  Irls2Config c;
  c.alphas = {0.3};
  c.eps_init = c.eps_final = 1e-3;
  c.tol_inf = 1e-11;
  const auto reps = solve_continuation(sys, c, seq);
  ASSERT_EQ(reps.size(), 1u);
  StageOptions opt;
  opt.tol_inf = 1e-11;
  const auto st = irls2_stage(sys, 0.3, 1e-3, seq.exponents(), Variant::Power, init_x0(sys, 0.3), opt);
  EXPECT_EQ(reps[0].x_final, st.x);
  EXPECT_EQ(reps[0].total_inner_iters, st.iters);
}

TEST(Continuation, WarmStartModes) {
  std::mt19937_64 gen(8);
  const auto sys = random_system(gen, 10, 6);
  const auto seq = PenaltySequence::uniform(PenaltySpec::power(0.5), 6);
  Irls2Config c;
  c.alphas = {0.01, 0.1, 1.0};
  c.tol_inf = 1e-10;
  c.alpha_continuation = AlphaContinuation::Always;
  const auto warm = solve_continuation(sys, c, seq);
  EXPECT_FALSE(warm[0].warm_started);
  EXPECT_TRUE(warm[1].warm_started);
  EXPECT_TRUE(warm[2].warm_started);
  c.alpha_continuation = AlphaContinuation::Off;
  for (const auto& r : solve_continuation(sys, c, seq)) {
    EXPECT_FALSE(r.warm_started);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.residual_inf, 1e-10);
    EXPECT_EQ(r.stages.size(), 6u);
  }
}

TEST(Continuation, SmallMMatrixIsMonotoneAndConverges) {
  const auto prob = build_mmatrix_problem(8);
  const auto p = pk_ramp_mmatrix(64);
  const auto seq = PenaltySequence::from_exponents(PenaltyFamily::Power, p, true);
  Irls2Config c;
  c.alphas = {1e-3, 1e-2, 1e-1};
  for (Variant v : {Variant::Power, Variant::LogPower}) {
    c.variant = v;
    const auto seq_v = v == Variant::Power
                           ? seq
                           : PenaltySequence::from_exponents(PenaltyFamily::LogPower, p, true);
    for (const auto& r : solve_continuation(prob.system(), c, seq_v)) {
      EXPECT_TRUE(r.converged);
      EXPECT_LE(r.residual_inf, 1e-8);
      EXPECT_LE(r.max_increase(), 1e-10);
      EXPECT_LE(r.max_descent_excess(), 1e-9);
      EXPECT_EQ(r.metrics.size(), 64);
    }
  }
}

TEST(Continuation, HeatControlRampFirstControlVanishesAndStartDoesNotMatter) {
  const auto prob = build_heat_control_problem();
  const auto seq = PenaltySequence::from_exponents(PenaltyFamily::Power, pk_ramp_control(100));
  Irls2Config c;
  c.alphas = {1.0};
  c.eps_init = 1e-3;
  c.eps_final = 1e-8;
  c.tol_inf = 1e-15;
  const auto ridge = solve_continuation(prob.system(), c, seq).front();
  c.zero_start = true;
  const auto zero = solve_continuation(prob.system(), c, seq).front();
  EXPECT_TRUE(ridge.converged);
  EXPECT_LE(ridge.x_final.head(50).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((ridge.x_final - zero.x_final).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Generic, RidgeIsFixedAfterOneStep) {
  std::mt19937_64 gen(6);
  const auto sys = random_system(gen, 6, 4);
  const std::vector<CIFunction> psis(4, CIFunction::linear());
  const Vector s0 = Vector::Ones(4);
  auto [x1, s1] = generic_irls2_step(sys.op, *sys.y, 0.5, psis, Vector::Zero(4), s0);
  auto [x2, s2] = generic_irls2_step(sys.op, *sys.y, 0.5, psis, x1, s1);
  EXPECT_LE((x2 - x1).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_EQ(s1, s0);
  EXPECT_NEAR(generic_objective(sys.op, *sys.y, 0.5, psis, x2),
              generic_objective(sys.op, *sys.y, 0.5, psis, x1), 1e-12);
}

TEST(Generic, SmoothedStepCoincidesWithReweightedSolve) {
  // With psi_k = Psi_{eps,p} the generic step at 2 alpha is the reweighted
  // solve at alpha, since 2 Psi'(x^2) = p / max(eps^{2-p}, |x|^{2-p}).
  std::mt19937_64 gen(10);
  const auto sys = random_system(gen, 7, 5);
  const double eps = 1e-2, p = 0.5, alpha = 0.3;
  const std::vector<CIFunction> psis(5, smoothed_as_ci(eps, p));
  const Vector x0 = init_x0(sys, alpha);
  Vector s0(5);
  for (Eigen::Index k = 0; k < 5; ++k) s0[k] = smoothed_psi_derivative(eps, p, x0[k] * x0[k]);
  const auto [xg, sg] = generic_irls2_step(sys.op, *sys.y, 2 * alpha, psis, x0, s0);
  const Vector w = weight_vector(Vector::Constant(5, p), eps, x0, Variant::Power);
  const Vector xi = gram_solve(sys.op, w, alpha, sys.f);
  EXPECT_LE((xg - xi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Generic, DescentInequalityOverFiftySteps) {
  std::mt19937_64 gen(12);
  const auto sys = random_system(gen, 4, 4);
  const double alpha = 0.2;
  const std::vector<CIFunction> psis(4, CIFunction::sqrt());
  Vector x = init_x0(sys, alpha);
  Vector s(4);
  for (Eigen::Index k = 0; k < 4; ++k) s[k] = psis[0].supergradient(x[k] * x[k]);
  for (int step = 0; step < 50; ++step) {
    const double F0 = generic_objective(sys.op, *sys.y, alpha, psis, x);
    auto [xn, sn] = generic_irls2_step(sys.op, *sys.y, alpha, psis, x, s);
    const Vector dx = xn - x;
    const double F1 = generic_objective(sys.op, *sys.y, alpha, psis, xn);
    const double decrease = sys.op.apply(dx).squaredNorm() + alpha * s.dot(dx.cwiseAbs2());
    EXPECT_LE(F1, F0 - decrease + 1e-10 * (1 + std::abs(F0))) << "step " << step;
    x = xn;
    s = sn;
  }
}
