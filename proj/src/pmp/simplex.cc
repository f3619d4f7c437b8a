#include "ksoc/simplex.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ksoc {
namespace {

class Tableau {
 public:
  // Rows 0..m-1 are constraints, row m the objective. Last column is the
  // right-hand side.
  Tableau(Eigen::MatrixXd t, std::vector<int> basis, double tol)
      : t_(std::move(t)), basis_(std::move(basis)), tol_(tol) {}

  int rows() const { return static_cast<int>(t_.rows()) - 1; }
  int cols() const { return static_cast<int>(t_.cols()) - 1; }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= rows(); ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  // Returns false if unbounded. Columns >= allowed are never entered.
  bool optimize(int allowed) {
    const int cap = 50 * (rows() + cols() + 10);
    for (int iter = 0; iter < cap; ++iter) {
      int enter = -1;
      for (int j = 0; j < allowed; ++j) {
        if (t_(rows(), j) < -tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows(); ++i) {
        if (t_(i, enter) <= tol_) continue;
        const double ratio = t_(i, cols()) / t_(i, enter);
        if (ratio < best - tol_ ||
            (std::abs(ratio - best) <= tol_ && leave >= 0 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex iteration limit reached");
  }

  Eigen::MatrixXd& table() { return t_; }
  std::vector<int>& basis() { return basis_; }

 private:
  Eigen::MatrixXd t_;
  std::vector<int> basis_;
  double tol_;
};

}  // namespace

LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                  double tol) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m || c.size() != n) throw std::invalid_argument("LP shape mismatch");
  LpResult result;

  // Phase 1: artificial variables n..n+m-1.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double s = b[i] < 0 ? -1.0 : 1.0;
    t.block(i, 0, 1, n) = s * A.row(i);
    t(i, n + i) = 1.0;
    t(i, n + m) = s * b[i];
    basis[static_cast<std::size_t>(i)] = n + i;
  }
  for (int i = 0; i < m; ++i) t.row(m) -= t.row(i);
  for (int i = 0; i < m; ++i) t(m, n + i) = 0.0;
  Tableau tab(std::move(t), std::move(basis), tol);
  tab.optimize(n + m);
  const double scale = 1.0 + b.cwiseAbs().maxCoeff();
  if (-tab.table()(m, n + m) > tol * scale * 10) {
    result.status = LpStatus::kInfeasible;
    return result;
  }

  // Drive remaining artificials out of the basis; drop redundant rows.
  Eigen::MatrixXd& T = tab.table();
  std::vector<int> keep_rows;
  for (int i = 0; i < m; ++i) {
    if (tab.basis()[i] < n) {
      keep_rows.push_back(i);
      continue;
    }
    int col = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(T(i, j)) > tol) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      tab.pivot(i, col);
      keep_rows.push_back(i);
    }
  }

  const int r = static_cast<int>(keep_rows.size());
  Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(r + 1, n + 1);
  std::vector<int> basis2;
  for (int i = 0; i < r; ++i) {
    const int src = keep_rows[static_cast<std::size_t>(i)];
    t2.block(i, 0, 1, n) = T.block(src, 0, 1, n);
    t2(i, n) = T(src, n + m);
    basis2.push_back(tab.basis()[src]);
  }
  t2.block(r, 0, 1, n) = c.transpose();
  for (int i = 0; i < r; ++i) {
    const int bj = basis2[static_cast<std::size_t>(i)];
    if (c[bj] != 0.0) t2.row(r) -= c[bj] * t2.row(i);
  }
  Tableau phase2(std::move(t2), std::move(basis2), tol);
  if (!phase2.optimize(n)) {
    result.status = LpStatus::kUnbounded;
    return result;
  }
  result.status = LpStatus::kOptimal;
  result.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < r; ++i) {
    result.x[phase2.basis()[i]] = std::max(0.0, phase2.table()(i, n));
  }
  result.objective = c.dot(result.x);
  return result;
}

}  // namespace ksoc
