#pragma once

#include <string>
#include <vector>

#include "ksoc/control_model.h"
#include "ksoc/expr.h"

namespace ksoc {

/// Per-direction Hamilton equations of the extended system. Coordinates
/// are indexed by j = 0..k+n-1 in the order of ext.state_names; momenta
/// p^A_j use the names p{A}_0{B} and p{A}_{i}.
struct DerivedHamiltonianSystem {
  ExtendedSystem ext;
  std::vector<std::vector<std::string>> momentum_names;  // [A][j]
  std::vector<Expr> H;                                   // H_A
  std::vector<std::vector<Expr>> state_rhs;              // [A][j]: dq^j/dt^A
  std::vector<std::vector<Expr>> costate_rhs;            // [A][j]: dp^A_j/dt^A
  /// Every momentum p^C with C != A has zero derivative along t^A.
  static constexpr const char* kOffDiagonalPolicy =
      "(Y_A)^C_0B = 0 and (Y_A)^C_j = 0 for C != A";

  int k() const { return ext.k(); }
  int n() const { return ext.n(); }
  int dim() const { return ext.dim(); }

  /// Right-hand side of d(name)/dt^A for any state or momentum coordinate.
  /// Throws ValidationError for an unknown coordinate.
  Expr rhs(const std::string& coordinate, int A) const;

  /// All momentum names, A-major.
  std::vector<std::string> all_momenta() const;
};

std::vector<Expr> build_hamiltonians(const ExtendedSystem& ext);

/// Builds the rhs table and cross-checks every momentum equation against
/// -dH_A/dq^i computed independently (throws std::logic_error on mismatch).
DerivedHamiltonianSystem derive_hamilton_equations(const ExtendedSystem& ext,
                                                   const ProbeOptions& probe = {});

struct HdwSumReport {
  std::vector<Expr> summed_rhs;  // sum_A (Y_A)^A_i, i over extended coordinates
  std::vector<Expr> residuals;
  bool pass = true;
};

/// The summed system sum_A dp^A_i/dt^A = -sum_A dH_A/dq^i, checked against
/// the per-direction table.
HdwSumReport build_hdw_sum(const DerivedHamiltonianSystem& dhs, const ProbeOptions& probe = {});

/// Checks an arbitrary split split[A][j] of the summed momentum derivative.
HdwSumReport check_hdw_split(const DerivedHamiltonianSystem& dhs,
                             const std::vector<std::vector<Expr>>& split,
                             const ProbeOptions& probe = {});

}  // namespace ksoc
