#include "ksoc/hamiltonian.h"

#include <stdexcept>

#include "ksoc/errors.h"
#include "ksoc/naming.h"

namespace ksoc {

namespace {

std::vector<std::vector<std::string>> momentum_table(int k, int n) {
  std::vector<std::vector<std::string>> out(k);
  for (int A = 1; A <= k; ++A) {
    for (int B = 1; B <= k; ++B) out[A - 1].push_back(names::p0(A, B));
    for (int i = 1; i <= n; ++i) out[A - 1].push_back(names::p(A, i));
  }
  return out;
}

}  // namespace

std::vector<Expr> build_hamiltonians(const ExtendedSystem& ext) {
  const auto p = momentum_table(ext.k(), ext.n());
  std::vector<Expr> H;
  for (int A = 0; A < ext.k(); ++A) {
    Expr h;
    for (int j = 0; j < ext.dim(); ++j) {
      h += Expr::symbol(p[A][j]) * ext.X_hat[A][j];
    }
    H.push_back(h);
  }
  return H;
}

DerivedHamiltonianSystem derive_hamilton_equations(const ExtendedSystem& ext,
                                                   const ProbeOptions& probe) {
  DerivedHamiltonianSystem d;
  d.ext = ext;
  d.momentum_names = momentum_table(ext.k(), ext.n());
  d.H = build_hamiltonians(ext);
  const int k = ext.k();
  const int n = ext.n();
  const ControlSystem& cs = ext.base;
  for (int A = 0; A < k; ++A) {
    d.state_rhs.push_back(ext.X_hat[A]);
    std::vector<Expr> row;
    for (int B = 0; B < k; ++B) row.push_back(Expr());
    const Expr pa0 = Expr::symbol(d.momentum_names[A][A]);
    for (int i = 0; i < n; ++i) {
      const std::string& qi = cs.state_names[i];
      Expr r = -(pa0 * differentiate(cs.F, qi));
      for (int j = 0; j < n; ++j) {
        r -= Expr::symbol(d.momentum_names[A][k + j]) * differentiate(cs.X[A][j], qi);
      }
      const Expr check = r + differentiate(d.H[A], qi);
      if (!is_zero(check, probe)) {
        throw std::logic_error("momentum equation disagrees with -dH/dq for " +
                               d.momentum_names[A][k + i]);
      }
      row.push_back(r);
    }
    d.costate_rhs.push_back(std::move(row));
  }
  return d;
}

Expr DerivedHamiltonianSystem::rhs(const std::string& coordinate, int A) const {
  if (A < 1 || A > k()) throw ValidationError("direction index out of range");
  for (int j = 0; j < dim(); ++j) {
    if (ext.state_names[j] == coordinate) return state_rhs[A - 1][j];
  }
  for (int C = 0; C < k(); ++C) {
    for (int j = 0; j < dim(); ++j) {
      if (momentum_names[C][j] != coordinate) continue;
      return C == A - 1 ? costate_rhs[C][j] : Expr();
    }
  }
  throw ValidationError("unknown coordinate '" + coordinate + "'");
}

std::vector<std::string> DerivedHamiltonianSystem::all_momenta() const {
  std::vector<std::string> out;
  for (const auto& row : momentum_names) out.insert(out.end(), row.begin(), row.end());
  return out;
}

HdwSumReport check_hdw_split(const DerivedHamiltonianSystem& dhs,
                             const std::vector<std::vector<Expr>>& split,
                             const ProbeOptions& probe) {
  if (static_cast<int>(split.size()) != dhs.k()) {
    throw ValidationError("split must have k rows");
  }
  HdwSumReport report;
  for (int j = 0; j < dhs.dim(); ++j) {
    const std::string& qj = dhs.ext.state_names[j];
    Expr target;
    Expr summed;
    for (int A = 0; A < dhs.k(); ++A) {
      if (static_cast<int>(split[A].size()) != dhs.dim()) {
        throw ValidationError("split rows must have k + n entries");
      }
      target -= differentiate(dhs.H[A], qj);
      summed += split[A][j];
    }
    const Expr residual = summed - target;
    const bool pass = is_zero(residual, probe);
    report.summed_rhs.push_back(target);
    report.residuals.push_back(pass ? Expr() : residual);
    if (!pass) report.pass = false;
  }
  return report;
}

HdwSumReport build_hdw_sum(const DerivedHamiltonianSystem& dhs, const ProbeOptions& probe) {
  return check_hdw_split(dhs, dhs.costate_rhs, probe);
}

}  // namespace ksoc
