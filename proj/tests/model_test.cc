#include <random>

#include <gtest/gtest.h>

#include "ksoc/control_model.h"
#include "ksoc/errors.h"
#include "ksoc/hamiltonian.h"

namespace ksoc {
namespace {

Expr P(std::string_view s) { return parse_expr(s); }

ControlSystem molecule_like() {
  // Explicit first-order system with the quadratic control cost.
  return ControlSystem::make(
      2, 6, 2,
      {{P("q3"), P("q4"), P("0"), P("0"), P("v5"), P("v6")},
       {P("q5"), P("q6"), P("0"), P("0"), P("0"), P("0")}},
      P("1/2*u1^2 + 1/2*u2^2"), {{-1, 1}, {-1, 1}});
}

TEST(ControlSystem, RejectsUndeclaredSymbols) {
  EXPECT_THROW(molecule_like(), ValidationError);
  EXPECT_THROW(ControlSystem::make(1, 1, 1, {{P("u1")}}, P("0"), {{1, 0}}), ValidationError);
  EXPECT_THROW(ControlSystem::make(1, 1, 0, {{P("q1"), P("q1")}}, P("0"), {}), ValidationError);
}

TEST(Assumption1, QuadraticCostPasses) {
  const auto cs = ControlSystem::make(
      2, 2, 2, {{P("q2*u1"), P("sin(q1)")}, {P("u2"), P("q1*q2")}},
      P("1/2*u1^2 + 1/2*u2^2"), {{-1, 1}, {-1, 1}});
  EXPECT_TRUE(check_assumption1(cs).pass);
}

TEST(Assumption1, StateCostFails) {
  const auto cs = ControlSystem::make(1, 1, 0, {{P("1")}}, P("q1"), {});
  const auto r = check_assumption1(cs);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.per_axis[0].residual, Expr(1));
  EXPECT_EQ(r.failing_axes, std::vector<int>{1});
  try {
    extend_system(cs);
    FAIL();
  } catch (const AssumptionViolatedError& e) {
    EXPECT_EQ(e.failing_axes(), std::vector<int>{1});
  }
}

TEST(Assumption1, InvariantDirectionalDerivative) {
  // L = q2*q1 + q1*(-q2) = 0
  const auto cs = ControlSystem::make(1, 2, 0, {{P("q1"), P("-q2")}}, P("q1*q2"), {});
  EXPECT_TRUE(check_assumption1(cs).pass);
}

TEST(Assumption1, InvariantUnderRelabeling) {
  auto cs = ControlSystem::make(1, 2, 0, {{P("q1"), P("q2")}}, P("q1*q2"), {});
  ControlSystem renamed = cs;
  renamed.state_names = {"a", "b"};
  renamed.X = {{P("a"), P("b")}};
  renamed.F = P("a*b");
  renamed.validate();
  EXPECT_EQ(check_assumption1(cs).pass, check_assumption1(renamed).pass);
  EXPECT_FALSE(check_assumption1(renamed).pass);
}

TEST(Compatibility, Examples) {
  EXPECT_TRUE(check_compatibility(ControlSystem::make(1, 1, 0, {{P("q1^2")}}, P("0"), {})).pass);
  const auto bad = ControlSystem::make(2, 2, 0, {{P("q2"), P("0")}, {P("0"), P("q1")}}, P("0"), {});
  const auto r = check_compatibility(bad);
  EXPECT_FALSE(r.pass);
  ASSERT_EQ(r.entries.size(), 2u);
  // [X1, X2] = (X1 . d) X2 - (X2 . d) X1 = (-q1, q2)
  EXPECT_EQ(r.entries[0].check.residual, P("-q1"));
  EXPECT_EQ(r.entries[1].check.residual, P("q2"));
  const auto constant =
      ControlSystem::make(2, 2, 1, {{P("1"), P("u1")}, {P("2"), P("3")}}, P("0"), {{0, 1}});
  EXPECT_TRUE(check_compatibility(constant).pass);
}

TEST(Extension, AddsCostColumns) {
  const auto cs = ControlSystem::make(
      2, 6, 2,
      {{P("q3"), P("q4"), P("u1"), P("u2"), P("0"), P("0")},
       {P("q5"), P("q6"), P("0"), P("0"), P("u1"), P("u2")}},
      P("1/2*u1^2 + 1/2*u2^2"), {{-1, 1}, {-1, 1}});
  const auto ext = extend_system(cs);
  ASSERT_EQ(ext.dim(), 8);
  EXPECT_EQ(ext.state_names[0], "q0_1");
  EXPECT_EQ(ext.state_names[1], "q0_2");
  EXPECT_TRUE(ext.X_hat[1][0].is_zero_literal());
  EXPECT_EQ(ext.X_hat[1][1], cs.F);
  EXPECT_EQ(ext.X_hat[0][0], cs.F);
  for (int A = 0; A < 2; ++A) {
    for (int i = 0; i < 6; ++i) EXPECT_EQ(ext.X_hat[A][2 + i], cs.X[A][i]);
  }
}

TEST(Extension, ClassicalSingleAxis) {
  const auto cs = ControlSystem::make(1, 2, 1, {{P("q2"), P("u1")}}, P("1/2*u1^2"), {{-1, 1}});
  const auto ext = extend_system(cs);
  EXPECT_EQ(ext.X_hat[0][0], P("1/2*u1^2"));
  const auto zero = extend_system(ControlSystem::make(1, 1, 0, {{P("q1")}}, P("0"), {}));
  EXPECT_TRUE(zero.X_hat[0][0].is_zero_literal());
}

TEST(Hamiltonians, Examples) {
  const auto ext = extend_system(
      ControlSystem::make(2, 1, 1, {{P("u1")}, {P("q1")}}, P("1/2*u1^2"), {{-1, 1}}));
  const auto H = build_hamiltonians(ext);
  EXPECT_EQ(H[0], P("1/2*p1_01*u1^2 + p1_1*u1"));
  EXPECT_EQ(H[1], P("1/2*p2_02*u1^2 + p2_1*q1"));
  const auto zero = build_hamiltonians(
      extend_system(ControlSystem::make(2, 1, 0, {{P("0")}, {P("0")}}, P("0"), {})));
  EXPECT_TRUE(zero[0].is_zero_literal());
  EXPECT_TRUE(zero[1].is_zero_literal());
  const auto classical = build_hamiltonians(
      extend_system(ControlSystem::make(1, 2, 1, {{P("q2"), P("u1")}}, P("1/2*u1^2"), {{-1, 1}})));
  EXPECT_EQ(classical[0], P("1/2*p1_01*u1^2 + p1_1*q2 + p1_2*u1"));
}

TEST(HamiltonEquations, LqAdjointMatchesGradient) {
  const auto d = derive_hamilton_equations(
      extend_system(ControlSystem::make(1, 2, 1, {{P("q2"), P("u1")}}, P("1/2*u1^2"), {{-1, 1}})));
  EXPECT_TRUE(d.rhs("p1_1", 1).is_zero_literal());
  EXPECT_EQ(d.rhs("p1_2", 1), P("-p1_1"));
  EXPECT_TRUE(d.rhs("p1_01", 1).is_zero_literal());
  EXPECT_EQ(d.rhs("q0_1", 1), P("1/2*u1^2"));
  // independent gradient
  for (int i = 1; i <= 2; ++i) {
    const std::string qi = "q" + std::to_string(i);
    EXPECT_EQ(d.rhs("p1_" + std::to_string(i), 1), -differentiate(d.H[0], qi));
  }
}

TEST(HamiltonEquations, OffDiagonalPolicyAndMomentumConstancy) {
  const auto d = derive_hamilton_equations(extend_system(ControlSystem::make(
      2, 2, 1, {{P("q2*u1"), P("q1")}, {P("q1"), P("q2")}}, P("1/2*u1^2"), {{-1, 1}})));
  for (const std::string& p : d.all_momenta()) {
    const int C = p[1] - '0';
    for (int A = 1; A <= 2; ++A) {
      if (C != A) EXPECT_TRUE(d.rhs(p, A).is_zero_literal()) << p << " along t" << A;
    }
  }
  for (int A = 1; A <= 2; ++A) {
    for (int B = 1; B <= 2; ++B) {
      EXPECT_TRUE(d.rhs("p" + std::to_string(A) + "_0" + std::to_string(B), A).is_zero_literal());
      EXPECT_EQ(d.rhs("q0_" + std::to_string(B), A), A == B ? P("1/2*u1^2") : Expr());
    }
  }
  EXPECT_THROW(d.rhs("nope", 1), ValidationError);
}

TEST(HamiltonEquations, QuadraticCostDropsCostTerm) {
  const auto d = derive_hamilton_equations(extend_system(ControlSystem::make(
      1, 2, 1, {{P("q1*q2"), P("sin(q1)*u1")}}, P("1/2*u1^2"), {{-1, 1}})));
  EXPECT_EQ(d.costate_rhs[0][1], P("-p1_1*q2 - p1_2*cos(q1)*u1"));
}

TEST(HamiltonEquations, MomentumAffineSuperposition) {
  const auto d = derive_hamilton_equations(extend_system(ControlSystem::make(
      2, 2, 2, {{P("q2*u1 + q1^2"), P("sin(q1)")}, {P("u2*q1"), P("cos(q2)")}},
      P("1/2*u1^2 + 1/2*u2^2"), {{-1, 1}, {-1, 1}})));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2, 2);
  const auto momenta = d.all_momenta();
  for (int trial = 0; trial < 20; ++trial) {
    Bindings b1, b2, bc;
    for (const char* s : {"q1", "q2", "u1", "u2"}) b1[s] = b2[s] = bc[s] = U(rng);
    const double alpha = U(rng), beta = 1 - alpha;
    for (const auto& p : momenta) {
      b1[p] = U(rng);
      b2[p] = U(rng);
      bc[p] = alpha * b1[p] + beta * b2[p];
    }
    for (int A = 0; A < 2; ++A) {
      for (const Expr& r : d.costate_rhs[A]) {
        const double combo = alpha * evaluate(r, b1) + beta * evaluate(r, b2);
        EXPECT_NEAR(evaluate(r, bc), combo, 1e-12 * (1 + std::abs(combo)));
      }
    }
  }
  for (const Expr& h : d.H) {
    for (const auto& p1 : momenta) {
      for (const auto& p2 : momenta) {
        EXPECT_TRUE(is_zero(differentiate(differentiate(h, p1), p2)));
      }
    }
  }
}

TEST(HdwSum, PerAxisSolutionSatisfiesSum) {
  const auto d = derive_hamilton_equations(extend_system(ControlSystem::make(
      2, 2, 1, {{P("q2*u1"), P("q1")}, {P("q1"), P("q2^2")}}, P("1/2*u1^2"), {{-1, 1}})));
  EXPECT_TRUE(build_hdw_sum(d).pass);
  auto split = d.costate_rhs;
  split[0][2] += P("7/3");
  split[1][2] -= P("7/3");
  EXPECT_TRUE(check_hdw_split(d, split).pass);
  split[1][3] += P("1");
  EXPECT_FALSE(check_hdw_split(d, split).pass);
}

TEST(HdwSum, SingleAxisCoincides) {
  const auto d = derive_hamilton_equations(
      extend_system(ControlSystem::make(1, 2, 1, {{P("q2"), P("u1")}}, P("1/2*u1^2"), {{-1, 1}})));
  const auto r = build_hdw_sum(d);
  EXPECT_TRUE(r.pass);
  for (int j = 0; j < d.dim(); ++j) EXPECT_EQ(r.summed_rhs[j], d.costate_rhs[0][j]);
}

}  // namespace
}  // namespace ksoc
