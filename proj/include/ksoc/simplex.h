#pragma once

#include <Eigen/Dense>

namespace ksoc {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

/// minimize c.x subject to A x = b, x >= 0. Dense two-phase simplex with
/// Bland's rule; `tol` bounds pivots and reduced costs.
LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                  double tol = 1e-9);

}  // namespace ksoc
