#include "ksoc/control_model.h"

#include <set>

#include "ksoc/errors.h"
#include "ksoc/naming.h"

namespace ksoc {

ControlSystem ControlSystem::make(int k, int n, int l, std::vector<std::vector<Expr>> X,
                                  Expr F, std::vector<Interval> U) {
  ControlSystem cs;
  cs.k = k;
  cs.n = n;
  cs.l = l;
  for (int A = 1; A <= k; ++A) cs.time_names.push_back(names::t(A));
  for (int i = 1; i <= n; ++i) cs.state_names.push_back(names::q(i));
  for (int a = 1; a <= l; ++a) cs.control_names.push_back(names::u(a));
  cs.X = std::move(X);
  for (auto& row : cs.X) {
    for (auto& e : row) e = canonicalize(e);
  }
  cs.F = canonicalize(F);
  cs.U = std::move(U);
  cs.validate();
  return cs;
}

std::vector<std::string> ControlSystem::coordinate_names() const {
  std::vector<std::string> out = time_names;
  out.insert(out.end(), state_names.begin(), state_names.end());
  out.insert(out.end(), control_names.begin(), control_names.end());
  return out;
}

void ControlSystem::validate() const {
  if (k < 1) throw ValidationError("k must be positive");
  if (n < 1) throw ValidationError("n must be positive");
  if (l < 0) throw ValidationError("l must be nonnegative");
  if (static_cast<int>(time_names.size()) != k ||
      static_cast<int>(state_names.size()) != n ||
      static_cast<int>(control_names.size()) != l) {
    throw ValidationError("coordinate name lists do not match k, n, l");
  }
  const std::vector<std::string> coords = coordinate_names();
  const std::set<std::string> declared(coords.begin(), coords.end());
  if (declared.size() != coords.size()) throw ValidationError("duplicate coordinate name");
  for (int B = 1; B <= k; ++B) {
    if (declared.count(names::q0(B))) {
      throw ValidationError("coordinate name '" + names::q0(B) + "' is reserved");
    }
  }
  if (static_cast<int>(X.size()) != k) throw ValidationError("X must have k rows");
  auto check_symbols = [&](const Expr& e, const std::string& where) {
    for (const std::string& s : free_symbols(e)) {
      if (!declared.count(s)) {
        throw ValidationError("undeclared symbol '" + s + "' in " + where);
      }
    }
  };
  for (int A = 0; A < k; ++A) {
    if (static_cast<int>(X[A].size()) != n) {
      throw ValidationError("row " + std::to_string(A + 1) + " of X must have n entries");
    }
    for (int i = 0; i < n; ++i) {
      check_symbols(X[A][i], "X[" + std::to_string(A + 1) + "][" + std::to_string(i + 1) + "]");
    }
  }
  check_symbols(F, "F");
  if (static_cast<int>(U.size()) != l) throw ValidationError("U must have l intervals");
  for (const Interval& iv : U) {
    if (!(iv.lo <= iv.hi)) throw ValidationError("control interval with lo > hi");
  }
}

Assumption1Report check_assumption1(const ControlSystem& cs, const ProbeOptions& probe) {
  Assumption1Report report;
  for (int A = 0; A < cs.k; ++A) {
    Expr lie;
    for (int i = 0; i < cs.n; ++i) {
      lie += cs.X[A][i] * differentiate(cs.F, cs.state_names[i]);
    }
    const bool pass = is_zero(lie, probe);
    report.per_axis.push_back({lie, pass});
    if (!pass) {
      report.failing_axes.push_back(A + 1);
      report.pass = false;
    }
  }
  return report;
}

CompatibilityReport check_compatibility(const ControlSystem& cs, const ProbeOptions& probe) {
  CompatibilityReport report;
  for (int A = 0; A < cs.k; ++A) {
    for (int B = A + 1; B < cs.k; ++B) {
      for (int i = 0; i < cs.n; ++i) {
        Expr r;
        for (int j = 0; j < cs.n; ++j) {
          r += cs.X[A][j] * differentiate(cs.X[B][i], cs.state_names[j]) -
               cs.X[B][j] * differentiate(cs.X[A][i], cs.state_names[j]);
        }
        const bool pass = is_zero(r, probe);
        report.entries.push_back({A + 1, B + 1, i + 1, {r, pass}});
        if (!pass) report.pass = false;
      }
    }
  }
  return report;
}

ExtendedSystem extend_system(const ControlSystem& cs, const ProbeOptions& probe) {
  cs.validate();
  const Assumption1Report a1 = check_assumption1(cs, probe);
  if (!a1.pass) throw AssumptionViolatedError(a1.failing_axes);
  ExtendedSystem ext;
  ext.base = cs;
  for (int B = 1; B <= cs.k; ++B) ext.state_names.push_back(names::q0(B));
  ext.state_names.insert(ext.state_names.end(), cs.state_names.begin(), cs.state_names.end());
  const Expr F = canonicalize(cs.F);
  for (int A = 0; A < cs.k; ++A) {
    std::vector<Expr> row;
    row.reserve(cs.k + cs.n);
    for (int B = 0; B < cs.k; ++B) row.push_back(A == B ? F : Expr());
    for (int i = 0; i < cs.n; ++i) row.push_back(canonicalize(cs.X[A][i]));
    ext.X_hat.push_back(std::move(row));
  }
  return ext;
}

}  // namespace ksoc
