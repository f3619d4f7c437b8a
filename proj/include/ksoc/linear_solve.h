#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ksoc/expr.h"

namespace ksoc {

struct LinearSolveResult {
  std::map<std::string, Expr, std::less<>> assignments;
  std::vector<std::string> unsolved;
  /// Equations left after elimination that involve no unknown; each vanishes
  /// on the solution set.
  std::vector<Expr> residual_equations;
};

/// Gauss-Jordan elimination over the field of expressions. Equations are
/// read as `e == 0`. Pivots are chosen per unknown in the given order,
/// preferring constant coefficients, then the smallest row. A candidate
/// pivot is rejected if it passes is_zero. Coefficients that pass is_zero
/// after an elimination step are replaced by the literal 0.
///
/// Throws NonAffineError if an equation is not affine in the unknowns and
/// InconsistentSystemError if a residual reduces to a nonzero constant.
LinearSolveResult solve_linear(std::span<const Expr> equations,
                               std::span<const std::string> unknowns,
                               const ProbeOptions& probe = {});

}  // namespace ksoc
