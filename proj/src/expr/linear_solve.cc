#include "ksoc/linear_solve.h"

#include <optional>
#include <set>

#include "ksoc/errors.h"

namespace ksoc {
namespace {

struct Row {
  std::vector<Expr> coef;
  Expr constant;
  std::size_t source;

  std::size_t weight() const {
    std::size_t w = constant.size();
    for (const Expr& c : coef) w += c.size();
    return w;
  }
};

Expr cleaned(const Expr& e, const ProbeOptions& probe) {
  if (e.is_constant()) return e;
  return is_zero(e, probe) ? Expr() : e;
}

}  // namespace

LinearSolveResult solve_linear(std::span<const Expr> equations,
                               std::span<const std::string> unknowns,
                               const ProbeOptions& probe) {
  const std::size_t m = unknowns.size();
  Substitution zero_unknowns;
  for (const std::string& u : unknowns) zero_unknowns[u] = Expr();

  std::vector<Row> rows;
  rows.reserve(equations.size());
  for (std::size_t i = 0; i < equations.size(); ++i) {
    const Expr eq = canonicalize(equations[i]);
    Row row{{}, Expr(), i};
    row.coef.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      Expr c = differentiate(eq, unknowns[j]);
      for (std::size_t k = j; k < m; ++k) {
        if (!depends_on(c, unknowns[k])) continue;
        if (!is_zero(differentiate(c, unknowns[k]), probe)) {
          throw NonAffineError(i, unknowns[j]);
        }
      }
      row.coef.push_back(cleaned(c, probe));
    }
    row.constant = substitute(eq, zero_unknowns);
    rows.push_back(std::move(row));
  }

  std::vector<bool> used(rows.size(), false);
  std::vector<std::optional<std::size_t>> pivot_row(m);

  for (std::size_t j = 0; j < m; ++j) {
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (used[r] || rows[r].coef[j].is_zero_literal()) continue;
      if (!rows[r].coef[j].is_constant() && is_zero(rows[r].coef[j], probe)) {
        rows[r].coef[j] = Expr();
        continue;
      }
      if (!best) {
        best = r;
        continue;
      }
      const bool c_new = rows[r].coef[j].is_constant();
      const bool c_old = rows[*best].coef[j].is_constant();
      if (c_new != c_old) {
        if (c_new) best = r;
      } else if (rows[r].weight() < rows[*best].weight()) {
        best = r;
      }
    }
    if (!best) continue;
    const std::size_t pr = *best;
    used[pr] = true;
    pivot_row[j] = pr;

    Row& p = rows[pr];
    const Expr inv = reciprocal(p.coef[j]);
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j) continue;
      if (!p.coef[k].is_zero_literal()) p.coef[k] = cleaned(p.coef[k] * inv, probe);
    }
    p.constant = cleaned(p.constant * inv, probe);
    p.coef[j] = Expr(1);

    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r == pr || rows[r].coef[j].is_zero_literal()) continue;
      Row& o = rows[r];
      const Expr factor = o.coef[j];
      for (std::size_t k = 0; k < m; ++k) {
        if (k == j || p.coef[k].is_zero_literal()) continue;
        o.coef[k] = cleaned(o.coef[k] - factor * p.coef[k], probe);
      }
      if (!p.constant.is_zero_literal()) {
        o.constant = cleaned(o.constant - factor * p.constant, probe);
      }
      o.coef[j] = Expr();
    }
  }

  LinearSolveResult result;
  for (std::size_t j = 0; j < m; ++j) {
    if (!pivot_row[j]) result.unsolved.push_back(unknowns[j]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!pivot_row[j]) continue;
    const Row& p = rows[*pivot_row[j]];
    Expr value = -p.constant;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j || pivot_row[k] || p.coef[k].is_zero_literal()) continue;
      value -= p.coef[k] * Expr::symbol(unknowns[k]);
    }
    result.assignments.emplace(unknowns[j], value);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (used[r]) continue;
    const Row& o = rows[r];
    Expr residual = o.constant;
    for (std::size_t k = 0; k < m; ++k) {
      if (!o.coef[k].is_zero_literal()) {
        residual += o.coef[k] * Expr::symbol(unknowns[k]);
      }
    }
    if (residual.is_zero_literal()) continue;
    if (residual.is_constant()) {
      throw InconsistentSystemError("equation " + std::to_string(o.source) +
                                    " reduces to the nonzero constant " +
                                    residual.to_string());
    }
    if (is_zero(residual, probe)) continue;
    result.residual_equations.push_back(residual);
  }
  return result;
}

}  // namespace ksoc
