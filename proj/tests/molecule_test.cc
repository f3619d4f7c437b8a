#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "ksoc/molecule.h"

namespace ksoc {
namespace {

Expr P(std::string_view s) { return parse_expr(s); }

const DerivedImplicitSystem& stabilized() {
  static const DerivedImplicitSystem ds = constraint_algorithm(builtin_molecule_problem());
  return ds;
}

const GoldenRecord& golden() {
  static const GoldenRecord rec = verify_golden();
  return rec;
}

TEST(Molecule, ProblemShape) {
  const auto p = builtin_molecule_problem();
  EXPECT_EQ(p.k, 2);
  EXPECT_EQ(p.n, 6);
  EXPECT_EQ(p.l, 2);
  ASSERT_EQ(p.constraints.size(), 8u);
  p.validate();
  std::vector<double> pt(p.coordinates().size(), 0.3);
  EXPECT_EQ(numeric_rank(p.constraints, p.coordinates(), pt, 1e-8), 8);
}

void expect_theta_only_in_trig(const Expr& e) {
  if (e.kind() == ExprKind::kSin || e.kind() == ExprKind::kCos) return;
  if (e.kind() == ExprKind::kSymbol) {
    EXPECT_NE(e.name(), "t2");
    return;
  }
  for (const Expr& c : e.children()) expect_theta_only_in_trig(c);
}

TEST(Molecule, ThetaEntersOnlyThroughTrig) {
  const auto p = builtin_molecule_problem();
  for (const Expr& c : p.constraints) expect_theta_only_in_trig(c);
  for (const auto& [k, v] : stabilized().solved) expect_theta_only_in_trig(v);
  EXPECT_FALSE(depends_on(p.lagrangian, "t2"));
}

TEST(Molecule, GoldenRecord) {
  const auto& rec = golden();
  EXPECT_EQ(rec.comparison_generation, 1);
  EXPECT_TRUE(rec.stabilized);
  EXPECT_EQ(rec.rank.size, 14);
  EXPECT_EQ(rec.rank.max_rank, 2);
  for (const auto& item : rec.items) {
    if (item.name == "ZD1_1" || item.name == "ZD1_2") continue;
    EXPECT_TRUE(item.pass) << item.name << ": " << item.derived << " vs " << item.expected;
  }
  EXPECT_TRUE(rec.item("lam7 = p2_6").pass);
  EXPECT_TRUE(rec.item("u1").pass);
  EXPECT_TRUE(rec.item("L after substituting controls").flagged);
}

TEST(Molecule, DirectionOneControlComponents) {
  // The only tangency condition on ZD1 at the first pass is
  // ZD1_1 sin(t2) - ZD1_2 cos(t2) = 0, plus the Z_1 derivative of the
  // solved controls. Deriving u1 = (p2_6 q2 + p2_5 q1) cos(t2) along Z_1
  // with ZF1_1_1 = v1_1 and ZF1_2_1 = v2_1 (q-columns) gives the value below.
  const auto& rec = golden();
  EXPECT_FALSE(rec.item("ZD1_1").pass);
  EXPECT_EQ(parse_expr(rec.item("ZD1_1").derived), P("(p2_5*v1_1 + p2_6*v2_1)*cos(t2)"));
  EXPECT_EQ(parse_expr(rec.item("ZD1_2").derived), P("(p2_5*v1_1 + p2_6*v2_1)*sin(t2)"));
  // The published pair also solves the single tangency equation.
  const Expr eq = P("ZD1_1*sin(t2) - ZD1_2*cos(t2)");
  EXPECT_TRUE(is_zero(substitute(eq, {{"ZD1_1", P("cos(t2)")}, {"ZD1_2", P("sin(t2)")}})));
}

TEST(Molecule, FirstPassConstraintsOnMomenta) {
  const auto& gen1 = stabilized().constraint_generations.at(1);
  auto has = [&](const Expr& e) {
    for (const Expr& c : gen1) {
      if (c == e || c == -e) return true;
    }
    return false;
  };
  EXPECT_TRUE(has(P("p1_1 - p2_6")));
  EXPECT_TRUE(has(P("p1_2 + p2_5")));
}

TEST(Molecule, ConstraintSetHasZeroControl) {
  const auto& ds = stabilized();
  const auto x = molecule_initial_data(7, 0.5);
  const auto& p = ds.problem;
  Bindings b{{"t1", 0.0}, {"t2", 0.0}};
  std::size_t j = 0;
  for (const auto& n : p.state_names()) b[n] = x[j++];
  for (const auto& n : p.velocity_names()) b[n] = x[j++];
  for (const auto& n : p.momentum_names()) b[n] = x[j++];
  b["u1"] = evaluate(ds.solved.at("u1"), b);
  b["u2"] = evaluate(ds.solved.at("u2"), b);
  EXPECT_EQ(b["u1"], 0.0);
  EXPECT_EQ(b["u2"], 0.0);
  for (const Expr& c : ds.constraints_through(static_cast<int>(ds.constraint_generations.size()))) {
    EXPECT_NEAR(evaluate(c, b), 0.0, 1e-12) << c.to_string();
  }
}

TEST(Molecule, EnergyIsNonNegativeAndZeroOnExtremals) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    MoleculeIntegrationOptions o;
    o.seed = seed;
    o.grid = Grid{{{0.0, 1.0, 8}, {0.0, 1.0, 8}}};
    const auto run = integrate_molecule(stabilized(), o);
    EXPECT_GE(run.energy, 0.0);
    EXPECT_NEAR(run.energy, 0.0, 1e-20);
    for (double u : run.u1) EXPECT_NEAR(u, 0.0, 1e-12);
  }
}

// q = (phi, psi, phi_t, psi_t, phi_theta, psi_theta) for the free
// Schrodinger wave function phi + i psi = theta^2 + 2 i t.
std::vector<double> polynomial_data() {
  std::vector<double> x(30, 0.0);
  x[3] = 2.0;       // q4 = psi_t
  x[6 + 1] = 2.0;   // v2_1 = psi_t
  x[12 + 4] = 2.0;  // v5_2 = phi_theta_theta
  return x;
}

TEST(Molecule, IntegrableDataHasNoDefect) {
  MoleculeIntegrationOptions o;
  o.initial = polynomial_data();
  const auto run = integrate_molecule(stabilized(), o);
  EXPECT_LE(run.corner_defect, 1e-12);
  EXPECT_LE(run.defect, 1e-12);
}

TEST(Molecule, CornerDefectIndependentOfStep) {
  // The field is polynomial of low degree in the state, so RK4 is exact on
  // each segment and the corner defect measures the non-integrability of
  // Z with its free components set to zero, not a discretization error.
  double first = -1;
  for (int steps : {4, 8, 16, 32}) {
    MoleculeIntegrationOptions o;
    o.grid = Grid{{{0.0, 1.0, steps}, {0.0, 1.0, steps}}};
    const auto run = integrate_molecule(stabilized(), o);
    if (first < 0) {
      first = run.corner_defect;
      continue;
    }
    EXPECT_NEAR(run.corner_defect, first, 1e-12) << steps;
  }
}

}  // namespace
}  // namespace ksoc
