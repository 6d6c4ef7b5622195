#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "flexreg/penalties.hpp"

using namespace flexreg;

namespace {

const std::vector<PenaltySpec>& all_families() {
  static const std::vector<PenaltySpec> specs = {
      PenaltySpec(PenaltyFamily::Power, 0.5),
      PenaltySpec(PenaltyFamily::LogPower, 0.5),
      PenaltySpec(PenaltyFamily::LogPlusPower, 0.5),
      PenaltySpec(PenaltyFamily::PowerSumPower, 0.5, 0.3),
      PenaltySpec(PenaltyFamily::PowerTimesLog, 0.5),
      PenaltySpec(PenaltyFamily::LinearTimesLogPower, 0.5),
  };
  return specs;
}

std::vector<double> sample_grid() {
  std::vector<double> g;
  for (int i = -60; i <= 60; ++i) g.push_back(std::pow(10.0, i / 10.0));
  return g;
}

}  // namespace

TEST(PenaltyEval, PowerAtFour) { EXPECT_DOUBLE_EQ(penalty_eval(PenaltySpec::power(0.5), 4.0), 2.0); }

TEST(PenaltyEval, LogPowerAtZero) {
  EXPECT_DOUBLE_EQ(penalty_eval(PenaltySpec::log_power(0.5), 0.0), 0.0);
}

TEST(PenaltyEval, PowerSumPowerAtOne) {
  const PenaltySpec s(PenaltyFamily::PowerSumPower, 0.5, 0.5);
  EXPECT_NEAR(penalty_eval(s, 1.0), 1.4142135623730951, 1e-15);
}

TEST(PenaltyEval, RejectsNegativeArgument) {
  EXPECT_THROW(penalty_eval(PenaltySpec::power(0.5), -1e-3), DomainError);
}

TEST(PenaltyEval, EveryFamilyVanishesAtZeroAndIsNondecreasing) {
  const auto grid = sample_grid();
  for (const auto& s : all_families()) {
    EXPECT_EQ(penalty_eval(s, 0.0), 0.0) << family_name(s.family);
    double prev = 0.0;
    for (double t : grid) {
      const double v = penalty_eval(s, t);
      EXPECT_GE(v, prev) << family_name(s.family) << " t=" << t;
      prev = v;
    }
    // Unbounded growth along the grid tail.
    EXPECT_GT(penalty_eval(s, 1e12), penalty_eval(s, 1e6) + 1.0) << family_name(s.family);
  }
}

TEST(PenaltyDerivative, PowerExamples) {
  EXPECT_DOUBLE_EQ(penalty_derivative(PenaltySpec::power(0.5), 1.0), 0.5);
  EXPECT_DOUBLE_EQ(penalty_derivative(PenaltySpec::power(0.5), 4.0), 0.25);
}

TEST(PenaltyDerivative, LogPowerAtOneMatchesFiniteDifference) {
  const auto s = PenaltySpec::log_power(0.5);
  const double h = 1e-6;
  const double fd = (penalty_eval(s, 1.0 + h) - penalty_eval(s, 1.0 - h)) / (2 * h);
  EXPECT_NEAR(penalty_derivative(s, 1.0), 0.25, 1e-15);
  EXPECT_NEAR(fd, 0.25, 1e-8);
}

TEST(PenaltyDerivative, EveryFamilyMatchesFiniteDifference) {
  for (const auto& s : all_families()) {
    for (double t : {1e-3, 0.1, 0.7, 1.0, 3.0, 50.0}) {
      const double h = 1e-6 * t;
      const double fd = (penalty_eval(s, t + h) - penalty_eval(s, t - h)) / (2 * h);
      EXPECT_NEAR(penalty_derivative(s, t), fd, 1e-6 * (1.0 + std::abs(fd)))
          << family_name(s.family) << " t=" << t;
    }
  }
}

TEST(PenaltyDerivative, RefusesZero) {
  for (const auto& s : all_families()) {
    EXPECT_THROW(penalty_derivative(s, 0.0), DomainError);
  }
}

TEST(PenaltySpecTest, ValidatesParameters) {
  EXPECT_THROW(PenaltySpec::power(0.0), DomainError);
  EXPECT_THROW(PenaltySpec::power(1.1), DomainError);
  EXPECT_NO_THROW(PenaltySpec::power(1.0));
  EXPECT_NO_THROW(PenaltySpec::power(1.1, true));
  EXPECT_THROW(PenaltySpec::power(2.0, true), DomainError);
  EXPECT_THROW(PenaltySpec(PenaltyFamily::PowerSumPower, 0.5), DomainError);
  EXPECT_THROW(PenaltySpec(PenaltyFamily::PowerSumPower, 0.5, 1.0), DomainError);
  EXPECT_THROW(PenaltySpec(PenaltyFamily::Power, 0.5, 0.5), DomainError);
}

TEST(PenaltySpecTest, FamilyNamesRoundTrip) {
  for (const auto& s : all_families()) {
    EXPECT_EQ(parse_family(family_name(s.family)), s.family);
  }
  EXPECT_THROW(parse_family("scad"), std::exception);
}

TEST(PenaltySpecTest, JsonRoundTrip) {
  for (const auto& s : all_families()) {
    nlohmann::json j = s;
    EXPECT_EQ(j.get<PenaltySpec>(), s);
  }
  const auto j = nlohmann::json::parse(R"({"family":"power","p":0.5})");
  EXPECT_EQ(j.get<PenaltySpec>(), PenaltySpec::power(0.5));
}

TEST(SmoothedPsi, Examples) {
  EXPECT_DOUBLE_EQ(smoothed_psi(1.0, 0.5, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(smoothed_psi(1.0, 0.5, 0.0), 0.0);
  EXPECT_NEAR(smoothed_psi(0.1, 0.5, 1.0), 1.0 - 0.75 * std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(smoothed_psi(0.1, 0.5, 1.0), 0.7628291755, 1e-10);
}

TEST(SmoothedPsi, BranchesAgreeAtKink) {
  for (double eps : {1e-3, 0.1, 1.0}) {
    for (double p : {0.1, 0.5, 0.9}) {
      const double t = eps * eps;
      const double left = 0.5 * p * t / std::pow(eps, 2 - p);
      const double right = std::pow(t, p / 2) - (1 - p / 2) * std::pow(eps, p);
      EXPECT_NEAR(left, 0.5 * p * std::pow(eps, p), 1e-14);
      EXPECT_NEAR(right, left, 1e-14);
      EXPECT_NEAR(smoothed_psi(eps, p, t), left, 1e-14);
      // One-sided derivatives coincide as well.
      EXPECT_NEAR(p / (2 * std::pow(eps, 2 - p)), 0.5 * p * std::pow(t, p / 2 - 1),
                  1e-12 * p / (2 * std::pow(eps, 2 - p)));
    }
  }
}

TEST(SmoothedPsi, DerivativeExamples) {
  EXPECT_DOUBLE_EQ(smoothed_psi_derivative(1.0, 0.5, 0.0), 0.25);
  EXPECT_NEAR(smoothed_psi_derivative(1.0, 0.5, 4.0), 0.25 * std::pow(4.0, -0.75), 1e-15);
  EXPECT_NEAR(smoothed_psi_derivative(1.0, 0.5, 4.0), 0.0883883476, 1e-9);
  const double lhs = 2 * smoothed_psi_derivative(1.0, 0.5, 9.0) * 3.0;
  EXPECT_NEAR(lhs, 0.5 * 3.0 / std::pow(3.0, 1.5), 1e-15);
  EXPECT_NEAR(lhs, 0.28867513, 1e-8);
}

TEST(SmoothedPsi, WeightIdentity) {
  for (double eps : {1e-4, 1e-2, 1.0}) {
    for (double p : {0.2, 0.5, 0.9}) {
      for (double x : {-5.0, -0.3, 0.0, 1e-5, 0.01, 2.0}) {
        const double lhs = 2 * smoothed_psi_derivative(eps, p, x * x) * x;
        const double rhs = p * x / std::max(std::pow(eps, 2 - p), std::pow(std::abs(x), 2 - p));
        EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + std::abs(rhs)));
      }
    }
  }
}

TEST(SmoothedPsi, DerivativeMatchesFiniteDifferenceAwayFromKink) {
  for (double eps : {1e-2, 0.1, 1.0}) {
    for (double p : {0.3, 0.5, 0.8}) {
      for (double t : {0.1 * eps * eps, 0.5 * eps * eps, 3 * eps * eps, 10.0, 100.0}) {
        const double h = 1e-6 * t;
        const double fd = (smoothed_psi(eps, p, t + h) - smoothed_psi(eps, p, t - h)) / (2 * h);
        const double an = smoothed_psi_derivative(eps, p, t);
        EXPECT_NEAR(an, fd, 1e-6 * std::abs(an));
      }
    }
  }
}

TEST(SmoothedPsi, ConcaveNondecreasingAndBounded) {
  const auto grid = sample_grid();
  for (double eps : {1e-3, 0.1}) {
    for (double p : {0.3, 0.5, 0.8}) {
      double prev = 0.0;
      for (double t : grid) {
        const double v = smoothed_psi(eps, p, t);
        EXPECT_GE(v, prev);
        EXPECT_LE(v, std::pow(t, p / 2) + 0.5 * p * std::pow(eps, p) + 1e-15);
        prev = v;
      }
      for (std::size_t i = 0; i < grid.size(); i += 7) {
        for (std::size_t j = i; j < grid.size(); j += 5) {
          const double a = grid[i], b = grid[j];
          EXPECT_GE(smoothed_psi(eps, p, 0.5 * (a + b)),
                    0.5 * (smoothed_psi(eps, p, a) + smoothed_psi(eps, p, b)) -
                        1e-14 * (1 + smoothed_psi(eps, p, b)));
        }
      }
    }
  }
}

TEST(SmoothedPsi, ConvergesMonotonicallyAsEpsShrinks) {
  // For t >= eps^2 the gap to t^{p/2} is exactly (1 - p/2) eps^p, so it
  // shrinks monotonically but only at the rate eps^p.
  for (double p : {0.3, 0.5, 0.8}) {
    for (double t : {1.0, 4.0, 100.0}) {
      double prev_gap = std::numeric_limits<double>::infinity();
      for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        const double gap = std::pow(t, p / 2) - smoothed_psi(eps, p, t);
        EXPECT_LE(gap, prev_gap + 1e-6);
        EXPECT_NEAR(gap, (1 - p / 2) * std::pow(eps, p), 1e-12 * (1 + std::pow(t, p / 2)));
        prev_gap = gap;
      }
    }
  }
}

TEST(SmoothedPsi, RejectsBadArguments) {
  EXPECT_THROW(smoothed_psi(1.0, 0.5, -1.0), DomainError);
  EXPECT_THROW(SmoothedPenalty(0.0, 0.5), DomainError);
  EXPECT_THROW(SmoothedPenalty(0.1, 1.0), DomainError);
  const SmoothedPenalty sp(0.1, 0.5);
  EXPECT_DOUBLE_EQ(sp(1.0), smoothed_psi(0.1, 0.5, 1.0));
}

TEST(Sequence, EvalExamples) {
  const auto seq = PenaltySequence::uniform(PenaltySpec::power(0.5), 3);
  EXPECT_DOUBLE_EQ(sequence_eval(seq, Eigen::Vector3d(4, 0, 4)), 4.0);
  EXPECT_DOUBLE_EQ(sequence_eval(seq, Eigen::Vector3d::Zero()), 0.0);
  const std::vector<double> p = {0.5, 1.0};
  const auto mixed = PenaltySequence::from_exponents(PenaltyFamily::Power, p);
  EXPECT_DOUBLE_EQ(sequence_eval(mixed, Eigen::Vector2d(4, 2)), 4.0);
  EXPECT_THROW(sequence_eval(mixed, Eigen::Vector3d(1, 1, 1)), DimensionError);
}

TEST(Sequence, Accessors) {
  const std::vector<double> p = {0.3, 0.7, 0.5};
  const auto seq = PenaltySequence::from_exponents(PenaltyFamily::LogPower, p);
  EXPECT_EQ(seq.size(), 3u);
  EXPECT_DOUBLE_EQ(seq.min_exponent(), 0.3);
  EXPECT_TRUE(seq.homogeneous(PenaltyFamily::LogPower));
  EXPECT_FALSE(seq.homogeneous(PenaltyFamily::Power));
  EXPECT_DOUBLE_EQ(seq.exponents()[1], 0.7);
}

TEST(Assumptions, GrowthConditionExamples) {
  std::vector<double> grid;
  for (int i = -40; i <= 40; ++i) grid.push_back(std::pow(10.0, i / 10.0));
  grid.push_back(1.0);
  const std::vector<double> ps = {0.2, 0.5, 0.9, 1.0};
  const auto pow_seq = PenaltySequence::from_exponents(PenaltyFamily::Power, ps);
  EXPECT_TRUE(verify_assumptions(pow_seq, growth_constant::power(), 1e300, 1e300, grid));

  const double pmin = 0.2;
  const auto log_seq = PenaltySequence::from_exponents(PenaltyFamily::LogPower, ps);
  EXPECT_TRUE(verify_assumptions(log_seq, growth_constant::log_power(pmin), 1e300, 1e300, grid));

  // sqrt(t) >= 2t/(t+1) holds with equality at t = 1, so c = 2 is the sharp
  // constant for p = 1/2 and anything larger fails at t = 1.
  const auto half = PenaltySequence::uniform(PenaltySpec::power(0.5), 1);
  EXPECT_TRUE(verify_assumptions(half, 2.0, 1e300, 1e300, grid));
  EXPECT_FALSE(verify_assumptions(half, 2.01, 1e300, 1e300, grid));
}

TEST(Assumptions, SublevelBoundsHoldOnGrid) {
  std::vector<double> grid;
  for (int i = -40; i <= 60; ++i) grid.push_back(std::pow(10.0, i / 10.0));
  const double M = 3.0;
  const std::vector<double> ps = {0.4, 0.6, 1.0};
  const auto pw = PenaltySequence::from_exponents(PenaltyFamily::Power, ps);
  EXPECT_TRUE(verify_assumptions(pw, 0.0, M, sublevel_bound::power(M, 0.4), grid));
  EXPECT_FALSE(verify_assumptions(pw, 0.0, M, 0.5 * sublevel_bound::power(M, 0.4), grid));
  const auto lp = PenaltySequence::from_exponents(PenaltyFamily::LogPower, ps);
  EXPECT_TRUE(verify_assumptions(lp, 0.0, M, sublevel_bound::log_power(M, 0.4), grid));
  const auto lpp = PenaltySequence::from_exponents(PenaltyFamily::LogPlusPower, ps);
  EXPECT_TRUE(verify_assumptions(lpp, 0.0, M, sublevel_bound::log_plus_power(M, 0.4), grid));
  const auto psp = PenaltySequence::uniform(PenaltySpec(PenaltyFamily::PowerSumPower, 0.4, 0.3), 2);
  EXPECT_TRUE(verify_assumptions(psp, 0.0, M, sublevel_bound::power_sum_power(M, 0.4, 0.3), grid));
}
