#pragma once

#include <string>
#include <vector>

#include "ksoc/expr.h"

namespace ksoc {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Explicit control system dq^i/dt^A = X^i_A(t, q, u) with cost F(q, u).
struct ControlSystem {
  int k = 1;
  int n = 1;
  int l = 0;
  std::vector<std::string> time_names;     // t1..tk by default
  std::vector<std::string> state_names;    // q1..qn
  std::vector<std::string> control_names;  // u1..ul
  std::vector<std::vector<Expr>> X;        // k rows of n components
  Expr F;
  std::vector<Interval> U;

  /// Fills names with the default convention and checks shapes, declared
  /// symbols and the control box. Throws ValidationError.
  static ControlSystem make(int k, int n, int l, std::vector<std::vector<Expr>> X,
                            Expr F, std::vector<Interval> U);

  void validate() const;
  std::vector<std::string> coordinate_names() const;
};

struct ResidualCheck {
  Expr residual;
  bool pass = true;
};

struct Assumption1Report {
  std::vector<ResidualCheck> per_axis;  // L_{X_A} F for A = 1..k
  std::vector<int> failing_axes;        // 1-based
  bool pass = true;
};

struct BracketResidual {
  int A = 0;  // 1-based, A < B
  int B = 0;
  int i = 0;  // 1-based state index
  ResidualCheck check;
};

struct CompatibilityReport {
  std::vector<BracketResidual> entries;
  bool pass = true;
};

struct ExtendedSystem {
  ControlSystem base;
  /// q0_1..q0_k followed by the base state names.
  std::vector<std::string> state_names;
  /// k rows of k + n components: F * delta^B_A, then X^i_A.
  std::vector<std::vector<Expr>> X_hat;

  int k() const { return base.k; }
  int n() const { return base.n; }
  int dim() const { return base.k + base.n; }
};

/// L_{X_A} F = sum_i X^i_A dF/dq^i; controls and times are constants.
Assumption1Report check_assumption1(const ControlSystem& cs, const ProbeOptions& probe = {});

/// Coordinate bracket residuals [X_A, X_B]^i with controls held fixed.
CompatibilityReport check_compatibility(const ControlSystem& cs, const ProbeOptions& probe = {});

/// Throws AssumptionViolatedError if check_assumption1 fails.
ExtendedSystem extend_system(const ControlSystem& cs, const ProbeOptions& probe = {});

}  // namespace ksoc
