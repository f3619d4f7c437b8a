#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ksoc/compiled_expr.h"
#include "ksoc/errors.h"
#include "ksoc/expr.h"
#include "ksoc/linear_solve.h"
#include "random_expr.h"

namespace ksoc {
namespace {

Expr P(std::string_view s) { return parse_expr(s); }
Expr S(std::string name) { return Expr::symbol(std::move(name)); }

using testing::RandomExpr;

TEST(Differentiate, PowerRule) {
  EXPECT_EQ(differentiate(P("1/2*u1^2 + 1/2*u2^2"), "u1"), S("u1"));
}

TEST(Differentiate, MoleculeConstraintInControl) {
  const Expr psi7 = P("-q3 - v6_2 + u1*q2*cos(t2) + u2*q2*sin(t2)");
  EXPECT_EQ(differentiate(psi7, "u1"), P("q2*cos(t2)"));
}

TEST(Differentiate, SinCosAgainstCentralDifference) {
  const Expr e = sin(S("t")) * cos(S("t"));
  const Expr d = differentiate(e, "t");
  EXPECT_TRUE(is_zero(d - P("cos(t)^2 - sin(t)^2")));
  for (double t : {0.3, 1.1, 2.7}) {
    const double h = 1e-5;
    const double fd = (std::sin(t + h) * std::cos(t + h) -
                       std::sin(t - h) * std::cos(t - h)) / (2 * h);
    EXPECT_NEAR(evaluate(d, {{"t", t}}), fd, 1e-8) << "t=" << t;
  }
}

TEST(Differentiate, UnknownSymbolGivesZero) {
  EXPECT_TRUE(differentiate(P("x^2 + sin(y)"), "w").is_zero_literal());
}

TEST(Canonicalize, CollectsLikeTerms) { EXPECT_EQ(P("q1 + q1"), P("2*q1")); }

TEST(Canonicalize, AlgebraicCancellation) {
  const Expr e = Expr::raw_sum(
      {Expr::raw_product({P("p2_6*q2 + p2_5*q1"), P("cos(t2)")}),
       Expr::raw_product({Expr(-1), P("cos(t2)"), P("p2_5"), P("q1")}),
       Expr::raw_product({Expr(-1), P("cos(t2)"), P("p2_6"), P("q2")})});
  EXPECT_TRUE(canonicalize(e).is_zero_literal());
}

TEST(Canonicalize, SolvedControlsSatisfyRelation) {
  Substitution s{{"u1", P("(p2_6*q2 + p2_5*q1)*cos(t2)")},
                 {"u2", P("(p2_6*q2 + p2_5*q1)*sin(t2)")}};
  EXPECT_TRUE(substitute(P("u1*sin(t2) - u2*cos(t2)"), s).is_zero_literal());
}

TEST(Canonicalize, StructuralInvariants) {
  RandomExpr g(7);
  std::function<void(const Expr&)> check = [&](const Expr& e) {
    if (e.kind() == ExprKind::kSum || e.kind() == ExprKind::kProduct) {
      EXPECT_GE(e.children().size(), 2u) << e.to_string();
    }
    if (e.kind() == ExprKind::kPower) {
      EXPECT_NE(e.exponent(), 0);
      EXPECT_NE(e.exponent(), 1);
    }
    for (const Expr& c : e.children()) check(c);
  };
  for (int i = 0; i < 100; ++i) {
    const Expr c = canonicalize(g.gen(3));
    check(c);
    EXPECT_EQ(canonicalize(c), c);
  }
}

TEST(Canonicalize, PythagoreanIdentityIsStructural) {
  EXPECT_TRUE(P("sin(a)^2 + cos(a)^2 - 1").is_zero_literal());
  EXPECT_TRUE(P("cos(a)^4 - (1 - sin(a)^2)^2").is_zero_literal());
}

TEST(Canonicalize, TrigSignNormalization) {
  EXPECT_EQ(P("sin(-x)"), P("-sin(x)"));
  EXPECT_EQ(P("cos(-x)"), P("cos(x)"));
  EXPECT_EQ(P("sin(0)"), Expr(0));
  EXPECT_EQ(P("cos(0)"), Expr(1));
}

TEST(Canonicalize, ReciprocalOfSum) {
  const Expr e = P("1/(2*x + 2*y)");
  EXPECT_TRUE(P("(2*x + 2*y)*(1/(2*x + 2*y)) - 1").is_zero_literal());
  EXPECT_NEAR(evaluate(e, {{"x", 0.5}, {"y", 0.25}}), 1.0 / 1.5, 1e-15);
}

TEST(Canonicalize, RoundTripPreservesValue) {
  RandomExpr g(11);
  for (int i = 0; i < 100; ++i) {
    const Expr raw = g.gen(3);
    const Bindings b = g.bindings();
    const double a = evaluate(raw, b);
    const double c = evaluate(canonicalize(raw), b);
    EXPECT_NEAR(a, c, 1e-12 * std::max(1.0, std::abs(a))) << raw.to_string();
  }
}

TEST(IsZero, Examples) {
  EXPECT_TRUE(is_zero(Expr::raw_sum({Expr::raw_power(Expr::raw_sin(S("t")), 2),
                                     Expr::raw_power(Expr::raw_cos(S("t")), 2),
                                     Expr(-1)})));
  EXPECT_TRUE(is_zero(Expr::raw_sum(
      {Expr::raw_product({S("q1"), S("q2")}),
       Expr::raw_product({Expr(-1), S("q2"), S("q1")})})));
  EXPECT_FALSE(is_zero(P("u1 - p2_6*q2*cos(t2)")));
  EXPECT_FALSE(is_zero(P("x - x + 1e-3*y")));
}

TEST(IsZero, ProbingCatchesNonCanonicalIdentity) {
  // Different arguments defeat the structural rewrite; probing still agrees.
  const Expr e = P("sin(2*x) - 2*sin(x)*cos(x)");
  EXPECT_FALSE(e.is_zero_literal());
  EXPECT_TRUE(is_zero(e));
}

TEST(IsZero, SeedIsDeterministic) {
  const Expr e = P("x*y - 1e-12");
  ProbeOptions o;
  EXPECT_EQ(is_zero(e, o), is_zero(e, o));
}

TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(evaluate(P("q1 + 2"), {{"q1", 3}}), 5.0);
  EXPECT_EQ(substitute(S("lam7"), {{"lam7", S("p2_6")}}), S("p2_6"));
  const Expr u1 = P("(p2_6*q2 + p2_5*q1)*cos(t2)");
  EXPECT_DOUBLE_EQ(
      evaluate(u1, {{"p2_6", 1}, {"p2_5", 2}, {"q1", 1}, {"q2", 1}, {"t2", 0}}),
      3.0);
}

TEST(Evaluate, MissingBindingNamesSymbol) {
  try {
    evaluate(P("x + y"), {{"x", 1.0}});
    FAIL();
  } catch (const UnboundSymbolError& e) {
    EXPECT_EQ(e.symbol(), "y");
  }
}

TEST(Substitute, IsSimultaneous) {
  const Expr e = substitute(P("x + 2*y"), {{"x", S("y")}, {"y", S("x")}});
  EXPECT_EQ(e, P("y + 2*x"));
}

TEST(Differentiate, AgreesWithFiniteDifferences) {
  RandomExpr g(23);
  for (int i = 0; i < 100; ++i) {
    const Expr e = g.gen(3);
    Bindings b = g.bindings();
    for (const char* x : {"x", "y"}) {
      const double h = 1e-5;
      Bindings bp = b, bm = b;
      bp[x] += h;
      bm[x] -= h;
      const double fd = (evaluate(e, bp) - evaluate(e, bm)) / (2 * h);
      const double d = evaluate(differentiate(e, x), b);
      EXPECT_NEAR(d, fd, 1e-6 * (1 + std::abs(d))) << e.to_string() << " d/d" << x;
    }
  }
}

TEST(Differentiate, IsLinear) {
  RandomExpr g(31);
  std::uniform_int_distribution<int> num(-7, 7);
  for (int i = 0; i < 50; ++i) {
    const Expr e1 = g.gen(2);
    const Expr e2 = g.gen(2);
    const Expr a(Rational(num(g.rng()), 3));
    const Expr lhs = differentiate(a * e1 + e2, "x");
    const Expr rhs = a * differentiate(e1, "x") + differentiate(e2, "x");
    EXPECT_EQ(lhs, rhs);
  }
}

TEST(Printer, RoundTrips) {
  RandomExpr g(41);
  for (int i = 0; i < 100; ++i) {
    const Expr c = canonicalize(g.gen(3));
    EXPECT_EQ(parse_expr(c.to_string()), c) << c.to_string();
  }
  EXPECT_EQ(P("1/(x + y)").to_string(), "(x + y)^-1");
}

TEST(Parser, Errors) {
  EXPECT_THROW(P("x +"), ParseError);
  EXPECT_THROW(P("x^y"), ParseError);
  EXPECT_THROW(P("1/0"), ParseError);
  EXPECT_THROW(P("sin(x"), ParseError);
  EXPECT_THROW(P("x $ y"), ParseError);
  EXPECT_EQ(P("2.5e-1*x"), P("x/4"));
}

TEST(Compiled, MatchesEvaluate) {
  RandomExpr g(53);
  const std::vector<std::string> slots = {"z", "x", "y"};
  for (int i = 0; i < 50; ++i) {
    const Expr e = canonicalize(g.gen(3));
    const Bindings b = g.bindings();
    const CompiledExpr c(e, slots);
    const std::vector<double> v = {b.at("z"), b.at("x"), b.at("y")};
    EXPECT_NEAR(c(v), evaluate(e, b), 1e-12 * (1 + std::abs(evaluate(e, b))));
  }
  EXPECT_THROW(CompiledExpr(P("w"), slots), UnboundSymbolError);
}

TEST(SolveLinear, SingleMultiplier) {
  const std::vector<Expr> eqs = {P("lam1 + p1_1")};
  const std::vector<std::string> unk = {"lam1"};
  const auto r = solve_linear(eqs, unk);
  EXPECT_EQ(r.assignments.at("lam1"), P("-p1_1"));
  EXPECT_TRUE(r.unsolved.empty());
}

TEST(SolveLinear, MoleculeControl) {
  const std::vector<Expr> eqs = {P("lam7*q2*cos(t2) + lam8*q1*cos(t2) - u1"),
                                 P("lam7 - p2_6"), P("lam8 - p2_5")};
  const std::vector<std::string> unk = {"lam7", "lam8", "u1"};
  const auto r = solve_linear(eqs, unk);
  EXPECT_EQ(r.assignments.at("u1"), P("p2_6*q2*cos(t2) + p2_5*q1*cos(t2)"));
  EXPECT_EQ(r.assignments.at("lam7"), S("p2_6"));
  EXPECT_EQ(r.assignments.at("lam8"), S("p2_5"));
}

TEST(SolveLinear, Degenerate) {
  const std::vector<Expr> eqs = {Expr::raw_sum({S("x"), Expr::raw_product({Expr(-1), S("x")})})};
  const std::vector<std::string> unk = {"x"};
  const auto r = solve_linear(eqs, unk);
  EXPECT_EQ(r.unsolved, std::vector<std::string>{"x"});
  EXPECT_TRUE(r.residual_equations.empty());
}

TEST(SolveLinear, Errors) {
  const std::vector<std::string> unk = {"x", "y"};
  const std::vector<Expr> nonaffine = {P("x + y"), P("x*y - 1")};
  try {
    solve_linear(nonaffine, unk);
    FAIL();
  } catch (const NonAffineError& e) {
    EXPECT_EQ(e.equation(), 1u);
    EXPECT_EQ(e.unknown(), "x");
  }
  const std::vector<Expr> inconsistent = {P("x + y"), P("2*x + 2*y + 1")};
  EXPECT_THROW(solve_linear(inconsistent, unk), InconsistentSystemError);
}

TEST(SolveLinear, ResidualsAndUnsolved) {
  const std::vector<std::string> unk = {"x", "y", "z"};
  const std::vector<Expr> eqs = {P("x + a*y - b"), P("c*x + a*c*y - b*c + d")};
  const auto r = solve_linear(eqs, unk);
  EXPECT_EQ(r.unsolved, (std::vector<std::string>{"y", "z"}));
  ASSERT_EQ(r.residual_equations.size(), 1u);
  EXPECT_EQ(r.residual_equations[0], S("d"));
  EXPECT_EQ(r.assignments.at("x"), P("b - a*y"));
}

TEST(SolveLinear, SolutionsSatisfyEquations) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> c(-3, 3);
  const std::vector<std::string> unk = {"x", "y", "z"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Expr> eqs;
    for (int i = 0; i < 3; ++i) {
      Expr e = Expr(c(rng)) * S("a") + Expr(c(rng));
      for (const auto& u : unk) {
        e += (Expr(c(rng)) + Expr(c(rng)) * S("a") + Expr(c(rng)) * sin(S("b"))) * S(u);
      }
      eqs.push_back(e);
    }
    LinearSolveResult r;
    try {
      r = solve_linear(eqs, unk);
    } catch (const InconsistentSystemError&) {
      continue;
    }
    Substitution s(r.assignments.begin(), r.assignments.end());
    for (const Expr& e : eqs) {
      const Expr back = substitute(e, s);
      bool covered = is_zero(back);
      for (const Expr& res : r.residual_equations) {
        if (!covered && is_zero(back - res)) covered = true;
        if (!covered && is_zero(back + res)) covered = true;
      }
      if (r.residual_equations.empty()) EXPECT_TRUE(covered) << back.to_string();
    }
  }
}

}  // namespace
}  // namespace ksoc
