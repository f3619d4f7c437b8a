#pragma once

// Unified (Skinner-Rusk) formalism for implicit control systems.
//
// Coordinates are t^B, u^a, q^i, v^i_A, p^A_i with the names from naming.h.
// The unknown components of Z_A are the symbols ZD{A}_{a} (along u^a),
// ZF{A}_{i}_{B} (along v^i_B) and ZG{A}_{A}_{i} (along p^A_i). Components
// along t^B and q^i are fixed to delta^B_A and v^i_A, and ZG{A}_{B}_{i} is
// zero for B != A.

#include <map>
#include <string>
#include <vector>

#include "ksoc/expr.h"

namespace ksoc {

struct ImplicitProblem {
  int k = 1;
  int n = 1;
  int l = 0;
  std::vector<Expr> constraints;  // Psi^alpha, read as Psi == 0
  Expr lagrangian;
  bool controls_present = true;

  std::vector<std::string> time_names() const;
  std::vector<std::string> control_names() const;  // empty without controls
  std::vector<std::string> state_names() const;
  std::vector<std::string> velocity_names() const;  // v^i_A, A-major
  std::vector<std::string> momentum_names() const;  // p^A_i, A-major
  std::vector<std::string> multiplier_names() const;
  /// t, u, q, v, p in that order.
  std::vector<std::string> coordinates() const;

  /// Shapes, declared symbols, and rank s of the constraint Jacobian in
  /// (t, u, q, v) at `samples` seeded points. Throws ValidationError.
  void validate(const ProbeOptions& probe = {}, int samples = 16, double rank_tol = 1e-8) const;
};

/// H = sum_{A,i} p^A_i v^i_A - L.
Expr build_unified_hamiltonian(const ImplicitProblem& p);

struct PrimaryEquations {
  /// p^A_i - dL/dv^i_A + lam_alpha dPsi^alpha/dv^i_A, A-major.
  std::vector<Expr> momentum;
  /// lam_alpha dPsi^alpha/du^a - dL/du^a.
  std::vector<Expr> control;
  /// sum_A ZG{A}_{A}_{i} - dL/dq^i + lam_alpha dPsi^alpha/dq^i.
  std::vector<Expr> g_sum;
};

enum class TangencyClass { kIdenticallyZero, kComponent, kPointConstraint };

struct TangencyCondition {
  int A = 1;
  int generation = 0;   // generation of the constraint Z_A was applied to
  std::size_t index = 0;  // index of that constraint within its generation
  Expr value;
  TangencyClass cls = TangencyClass::kIdenticallyZero;
};

struct ComponentSnapshot {
  std::map<std::string, Expr, std::less<>> determined;
  std::vector<std::string> free;
};

struct DerivedImplicitSystem {
  ImplicitProblem problem;
  PrimaryEquations primary;
  std::vector<std::string> multipliers;
  /// Solved multipliers and controls.
  std::map<std::string, Expr, std::less<>> solved;
  std::vector<std::string> unsolved_multipliers;
  std::vector<std::string> unsolved_controls;
  bool singular_controls = false;
  /// G-sum rows with solved multipliers substituted.
  std::vector<Expr> g_sum;
  /// constraint_generations[0] holds the Psi^alpha, the residual primary
  /// equations and u^a - (solved u^a); later entries hold generated
  /// constraints on the point variables.
  std::vector<std::vector<Expr>> constraint_generations;
  std::vector<TangencyCondition> tangency;
  /// components[g] is the component table after tangency pass g (g >= 1).
  std::vector<ComponentSnapshot> components;
  bool stabilized = false;

  /// Every component symbol, in solve order.
  std::vector<std::string> component_names() const;
  /// Latest table.
  const ComponentSnapshot& table() const { return components.back(); }
  /// Determined value or the symbol itself.
  Expr component(const std::string& name) const;
  /// All point constraints of generations <= g.
  std::vector<Expr> constraints_through(int g) const;
};

/// Emits the primary equations without solving.
DerivedImplicitSystem derive_primary_equations(const ImplicitProblem& p);

/// Solves the momentum and control rows for multipliers and controls and
/// fills `solved`, `g_sum` and constraint generation 0.
DerivedImplicitSystem solve_multipliers_and_controls(DerivedImplicitSystem ds,
                                                     const ProbeOptions& probe = {});

/// Z_A(e) with every component left symbolic.
Expr apply_z(const ImplicitProblem& p, int A, const Expr& e);

/// Z_A applied to every constraint of the latest generation, for every A,
/// classified against the component symbols. Determined components from the
/// latest table are substituted when `substitute_determined` is set.
std::vector<TangencyCondition> generate_tangency_conditions(const DerivedImplicitSystem& ds,
                                                            bool substitute_determined,
                                                            const ProbeOptions& probe = {});

struct RankReport {
  int size = 0;
  int min_rank = 0;
  int max_rank = 0;
  bool degenerate = false;  // min_rank < size
};

/// Numeric rank of the (l + nk)-square Hessian of L - lam_alpha Psi^alpha in
/// (u, v), solved multipliers and controls substituted.
RankReport rank_check(const DerivedImplicitSystem& ds, const ProbeOptions& probe = {},
                      int samples = 16, double tol = 1e-8);

struct ConstraintAlgorithmOptions {
  int max_generations = 10;
  ProbeOptions probe;
  int rank_samples = 16;
  double rank_tol = 1e-8;
};

/// Runs the loop and records whether it stabilized; never throws
/// NotStabilizedError.
DerivedImplicitSystem run_constraint_algorithm(const ImplicitProblem& p,
                                               const ConstraintAlgorithmOptions& opts = {});

/// As run_constraint_algorithm, but throws NotStabilizedError when the
/// generation budget is exhausted.
DerivedImplicitSystem constraint_algorithm(const ImplicitProblem& p,
                                           const ConstraintAlgorithmOptions& opts = {});

/// Numeric rank of the Jacobian of `fs` in `coords` at a point.
int numeric_rank(const std::vector<Expr>& fs, const std::vector<std::string>& coords,
                 const std::vector<double>& point, double tol);

}  // namespace ksoc
