#include "ksoc/skinner_rusk.h"

#include <algorithm>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "ksoc/compiled_expr.h"
#include "ksoc/errors.h"
#include "ksoc/linear_solve.h"
#include "ksoc/naming.h"

namespace ksoc {
namespace {

struct Role {
  enum Kind { kTime, kControl, kState, kVelocity, kMomentum } kind;
  int a = 0;  // axis, control, state or momentum axis
  int b = 0;  // state index for v and p
};

std::map<std::string, Role, std::less<>> roles(const ImplicitProblem& p) {
  std::map<std::string, Role, std::less<>> r;
  for (int A = 1; A <= p.k; ++A) r[names::t(A)] = {Role::kTime, A, 0};
  if (p.controls_present) {
    for (int a = 1; a <= p.l; ++a) r[names::u(a)] = {Role::kControl, a, 0};
  }
  for (int i = 1; i <= p.n; ++i) r[names::q(i)] = {Role::kState, i, 0};
  for (int A = 1; A <= p.k; ++A) {
    for (int i = 1; i <= p.n; ++i) {
      r[names::v(i, A)] = {Role::kVelocity, A, i};
      r[names::p(A, i)] = {Role::kMomentum, A, i};
    }
  }
  return r;
}

std::vector<std::vector<double>> sample_points(std::size_t dim, int samples, const ProbeOptions& probe) {
  std::mt19937_64 rng(probe.seed);
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(samples), std::vector<double>(dim));
  for (auto& pt : pts) {
    for (double& x : pt) x = unit_interval_sample(rng(), probe.lo, probe.hi);
  }
  return pts;
}

// Gradient of one expression at each sample point.
std::vector<Eigen::RowVectorXd> gradient_rows(const Expr& f, const std::vector<std::string>& coords,
                                              const std::vector<std::vector<double>>& pts) {
  std::vector<Eigen::RowVectorXd> rows(pts.size(), Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(coords.size())));
  const auto syms = free_symbols(f);
  for (std::size_t j = 0; j < coords.size(); ++j) {
    if (!syms.count(coords[j])) continue;
    const CompiledExpr d(differentiate(f, coords[j]), coords);
    for (std::size_t s = 0; s < pts.size(); ++s) rows[s][static_cast<Eigen::Index>(j)] = d(pts[s]);
  }
  return rows;
}

int rank_of(const std::vector<Eigen::RowVectorXd>& rows, Eigen::Index cols, double tol) {
  if (rows.empty()) return 0;
  Eigen::MatrixXd J(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) J.row(static_cast<Eigen::Index>(r)) = rows[r];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double cut = tol * std::max(1.0, s[0]);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) r += s[i] > cut;
  return r;
}

bool same_up_to_sign(const Expr& a, const Expr& b) { return a == b || a == -b; }

}  // namespace

std::vector<std::string> ImplicitProblem::time_names() const {
  std::vector<std::string> r;
  for (int A = 1; A <= k; ++A) r.push_back(names::t(A));
  return r;
}

std::vector<std::string> ImplicitProblem::control_names() const {
  std::vector<std::string> r;
  if (!controls_present) return r;
  for (int a = 1; a <= l; ++a) r.push_back(names::u(a));
  return r;
}

std::vector<std::string> ImplicitProblem::state_names() const {
  std::vector<std::string> r;
  for (int i = 1; i <= n; ++i) r.push_back(names::q(i));
  return r;
}

std::vector<std::string> ImplicitProblem::velocity_names() const {
  std::vector<std::string> r;
  for (int A = 1; A <= k; ++A) {
    for (int i = 1; i <= n; ++i) r.push_back(names::v(i, A));
  }
  return r;
}

std::vector<std::string> ImplicitProblem::momentum_names() const {
  std::vector<std::string> r;
  for (int A = 1; A <= k; ++A) {
    for (int i = 1; i <= n; ++i) r.push_back(names::p(A, i));
  }
  return r;
}

std::vector<std::string> ImplicitProblem::multiplier_names() const {
  std::vector<std::string> r;
  for (std::size_t a = 1; a <= constraints.size(); ++a) r.push_back(names::lam(static_cast<int>(a)));
  return r;
}

std::vector<std::string> ImplicitProblem::coordinates() const {
  std::vector<std::string> r = time_names();
  for (const auto& x : {control_names(), state_names(), velocity_names(), momentum_names()}) {
    r.insert(r.end(), x.begin(), x.end());
  }
  return r;
}

void ImplicitProblem::validate(const ProbeOptions& probe, int samples, double rank_tol) const {
  if (k < 1 || n < 1 || l < 0) throw ValidationError("implicit problem needs k >= 1, n >= 1, l >= 0");
  if (!controls_present && l != 0) throw ValidationError("l must be 0 when controls are absent");
  auto coords = time_names();
  for (const auto& x : {control_names(), state_names(), velocity_names()}) {
    coords.insert(coords.end(), x.begin(), x.end());
  }
  const std::set<std::string> allowed(coords.begin(), coords.end());
  auto check = [&](const Expr& e, const std::string& what) {
    for (const auto& s : free_symbols(e)) {
      if (!allowed.count(s)) throw ValidationError(what + " uses undeclared symbol '" + s + "'");
    }
  };
  for (std::size_t a = 0; a < constraints.size(); ++a) check(constraints[a], "constraint " + std::to_string(a + 1));
  check(lagrangian, "Lagrangian");
  if (constraints.empty()) return;
  const auto pts = sample_points(coords.size(), samples, probe);
  std::vector<std::vector<Eigen::RowVectorXd>> grads;
  for (const Expr& c : constraints) grads.push_back(gradient_rows(c, coords, pts));
  for (std::size_t s = 0; s < pts.size(); ++s) {
    std::vector<Eigen::RowVectorXd> rows;
    for (const auto& g : grads) rows.push_back(g[s]);
    const int r = rank_of(rows, static_cast<Eigen::Index>(coords.size()), rank_tol);
    if (r < static_cast<int>(constraints.size())) {
      throw ValidationError("constraint differentials are dependent: Jacobian rank " + std::to_string(r) +
                            " < " + std::to_string(constraints.size()) + " at sample " + std::to_string(s));
    }
  }
}

Expr build_unified_hamiltonian(const ImplicitProblem& p) {
  Expr h;
  for (int A = 1; A <= p.k; ++A) {
    for (int i = 1; i <= p.n; ++i) h += Expr::symbol(names::p(A, i)) * Expr::symbol(names::v(i, A));
  }
  return h - p.lagrangian;
}

std::vector<std::string> DerivedImplicitSystem::component_names() const {
  const auto& p = problem;
  std::vector<std::string> r;
  for (int A = 1; A <= p.k; ++A) {
    for (int B = p.k; B >= 1; --B) {
      for (int i = 1; i <= p.n; ++i) r.push_back(names::zf(A, i, B));
    }
  }
  for (int A = 1; A <= p.k; ++A) {
    for (int i = 1; i <= p.n; ++i) r.push_back(names::zg(A, A, i));
  }
  if (p.controls_present) {
    for (int A = 1; A <= p.k; ++A) {
      for (int a = 1; a <= p.l; ++a) r.push_back(names::zd(A, a));
    }
  }
  return r;
}

Expr DerivedImplicitSystem::component(const std::string& name) const {
  if (!components.empty()) {
    auto it = table().determined.find(name);
    if (it != table().determined.end()) return it->second;
  }
  return Expr::symbol(name);
}

std::vector<Expr> DerivedImplicitSystem::constraints_through(int g) const {
  std::vector<Expr> r;
  for (int i = 0; i <= g && i < static_cast<int>(constraint_generations.size()); ++i) {
    const auto& gen = constraint_generations[static_cast<std::size_t>(i)];
    r.insert(r.end(), gen.begin(), gen.end());
  }
  return r;
}

DerivedImplicitSystem derive_primary_equations(const ImplicitProblem& p) {
  DerivedImplicitSystem ds;
  ds.problem = p;
  ds.multipliers = p.multiplier_names();
  Expr lam_psi;
  for (std::size_t a = 0; a < p.constraints.size(); ++a) {
    lam_psi += Expr::symbol(ds.multipliers[a]) * p.constraints[a];
  }
  const Expr& L = p.lagrangian;
  for (int A = 1; A <= p.k; ++A) {
    for (int i = 1; i <= p.n; ++i) {
      const std::string v = names::v(i, A);
      ds.primary.momentum.push_back(Expr::symbol(names::p(A, i)) - differentiate(L, v) +
                                    differentiate(lam_psi, v));
    }
  }
  for (const std::string& u : p.control_names()) {
    ds.primary.control.push_back(differentiate(lam_psi, u) - differentiate(L, u));
  }
  for (int i = 1; i <= p.n; ++i) {
    Expr g;
    for (int A = 1; A <= p.k; ++A) g += Expr::symbol(names::zg(A, A, i));
    const std::string q = names::q(i);
    ds.primary.g_sum.push_back(g - differentiate(L, q) + differentiate(lam_psi, q));
  }
  return ds;
}

DerivedImplicitSystem solve_multipliers_and_controls(DerivedImplicitSystem ds, const ProbeOptions& probe) {
  const auto& p = ds.problem;
  std::vector<Expr> eqs = ds.primary.momentum;
  eqs.insert(eqs.end(), ds.primary.control.begin(), ds.primary.control.end());
  std::vector<std::string> unknowns = ds.multipliers;
  const auto controls = p.control_names();
  unknowns.insert(unknowns.end(), controls.begin(), controls.end());
  const LinearSolveResult res = solve_linear(eqs, unknowns, probe);

  ds.solved.clear();
  for (const auto& [name, value] : res.assignments) ds.solved.emplace(name, value);
  ds.unsolved_multipliers.clear();
  ds.unsolved_controls.clear();
  const std::set<std::string> control_set(controls.begin(), controls.end());
  for (const auto& u : res.unsolved) {
    (control_set.count(u) ? ds.unsolved_controls : ds.unsolved_multipliers).push_back(u);
  }
  ds.singular_controls = !ds.unsolved_controls.empty();

  // Multipliers are eliminated everywhere; controls stay coordinates.
  Substitution lam;
  for (const auto& m : ds.multipliers) {
    if (auto it = ds.solved.find(m); it != ds.solved.end()) lam.emplace(m, it->second);
  }
  ds.g_sum.clear();
  for (const Expr& g : ds.primary.g_sum) ds.g_sum.push_back(substitute(g, lam));

  std::vector<Expr> gen0 = p.constraints;
  for (const Expr& r : res.residual_equations) gen0.push_back(r);
  for (const auto& u : controls) {
    if (auto it = ds.solved.find(u); it != ds.solved.end()) {
      gen0.push_back(Expr::symbol(u) - substitute(it->second, lam));
    }
  }
  ds.constraint_generations.assign(1, std::move(gen0));
  ds.components.clear();
  ds.tangency.clear();
  ds.stabilized = false;
  return ds;
}

Expr apply_z(const ImplicitProblem& p, int A, const Expr& e) {
  const auto role_map = roles(p);
  Expr out;
  for (const auto& s : free_symbols(e)) {
    auto it = role_map.find(s);
    if (it == role_map.end()) continue;
    const Role& r = it->second;
    Expr coef;
    switch (r.kind) {
      case Role::kTime:
        if (r.a != A) continue;
        coef = Expr(1);
        break;
      case Role::kControl:
        coef = Expr::symbol(names::zd(A, r.a));
        break;
      case Role::kState:
        coef = Expr::symbol(names::v(r.a, A));
        break;
      case Role::kVelocity:
        coef = Expr::symbol(names::zf(A, r.b, r.a));
        break;
      case Role::kMomentum:
        if (r.a != A) continue;
        coef = Expr::symbol(names::zg(A, A, r.b));
        break;
    }
    out += coef * differentiate(e, s);
  }
  return out;
}

std::vector<TangencyCondition> generate_tangency_conditions(const DerivedImplicitSystem& ds,
                                                            bool substitute_determined,
                                                            const ProbeOptions& probe) {
  const auto& p = ds.problem;
  const int g = static_cast<int>(ds.constraint_generations.size()) - 1;
  const auto& active = ds.constraint_generations.back();
  std::set<std::string> unknowns;
  for (const auto& c : ds.component_names()) unknowns.insert(c);
  for (const auto& m : ds.unsolved_multipliers) unknowns.insert(m);
  Substitution det;
  if (substitute_determined && !ds.components.empty()) {
    for (const auto& [name, value] : ds.table().determined) det.emplace(name, value);
  }
  std::vector<TangencyCondition> out;
  for (int A = 1; A <= p.k; ++A) {
    for (std::size_t i = 0; i < active.size(); ++i) {
      TangencyCondition c;
      c.A = A;
      c.generation = g;
      c.index = i;
      c.value = apply_z(p, A, active[i]);
      if (!det.empty()) c.value = substitute(c.value, det);
      if (c.value.is_zero_literal() || is_zero(c.value, probe)) {
        c.cls = TangencyClass::kIdenticallyZero;
      } else {
        const auto syms = free_symbols(c.value);
        const bool comp = std::any_of(syms.begin(), syms.end(), [&](const std::string& s) { return unknowns.count(s) > 0; });
        c.cls = comp ? TangencyClass::kComponent : TangencyClass::kPointConstraint;
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

int numeric_rank(const std::vector<Expr>& fs, const std::vector<std::string>& coords,
                 const std::vector<double>& point, double tol) {
  std::vector<Eigen::RowVectorXd> rows;
  for (const Expr& f : fs) rows.push_back(gradient_rows(f, coords, {point})[0]);
  return rank_of(rows, static_cast<Eigen::Index>(coords.size()), tol);
}

RankReport rank_check(const DerivedImplicitSystem& ds, const ProbeOptions& probe, int samples, double tol) {
  const auto& p = ds.problem;
  Expr lam_psi;
  for (std::size_t a = 0; a < p.constraints.size(); ++a) {
    lam_psi += Expr::symbol(ds.multipliers[a]) * p.constraints[a];
  }
  Substitution sub;
  for (const auto& [name, value] : ds.solved) sub.emplace(name, value);
  std::vector<std::string> vars = p.control_names();
  const auto vel = p.velocity_names();
  vars.insert(vars.end(), vel.begin(), vel.end());
  const auto coords = p.coordinates();
  std::vector<std::string> slots = coords;
  slots.insert(slots.end(), ds.unsolved_multipliers.begin(), ds.unsolved_multipliers.end());
  const Expr f = p.lagrangian - lam_psi;
  const auto m = static_cast<Eigen::Index>(vars.size());
  std::vector<std::vector<CompiledExpr>> hess(static_cast<std::size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) {
    const Expr da = differentiate(f, vars[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) {
      // Controls are substituted only after differentiating.
      Expr dab = differentiate(da, vars[static_cast<std::size_t>(b)]);
      for (int pass = 0; pass < 2; ++pass) dab = substitute(dab, sub);
      hess[static_cast<std::size_t>(a)].emplace_back(dab, slots);
    }
  }
  RankReport r;
  r.size = static_cast<int>(m);
  r.min_rank = r.size;
  const auto pts = sample_points(slots.size(), samples, probe);
  for (const auto& pt : pts) {
    Eigen::MatrixXd M(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) M(a, b) = hess[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)](pt);
    }
    std::vector<Eigen::RowVectorXd> rows;
    for (Eigen::Index a = 0; a < m; ++a) rows.push_back(M.row(a));
    const int rk = rank_of(rows, m, tol);
    r.min_rank = std::min(r.min_rank, rk);
    r.max_rank = std::max(r.max_rank, rk);
  }
  if (m == 0) r.min_rank = 0;
  r.degenerate = r.min_rank < r.size;
  return r;
}

DerivedImplicitSystem run_constraint_algorithm(const ImplicitProblem& p, const ConstraintAlgorithmOptions& opts) {
  if (opts.max_generations < 1) throw ValidationError("max_generations must be >= 1");
  DerivedImplicitSystem ds = solve_multipliers_and_controls(derive_primary_equations(p), opts.probe);
  ComponentSnapshot none;
  none.free = ds.component_names();
  ds.components.push_back(none);

  const auto coords = p.coordinates();
  const auto pts = sample_points(coords.size(), opts.rank_samples, opts.probe);
  const auto ncols = static_cast<Eigen::Index>(coords.size());
  std::vector<std::vector<Eigen::RowVectorXd>> active_rows(pts.size());
  std::vector<Expr> active;
  auto add_active = [&](const Expr& c) {
    const auto g = gradient_rows(c, coords, pts);
    for (std::size_t s = 0; s < pts.size(); ++s) active_rows[s].push_back(g[s]);
    active.push_back(c);
  };
  for (const Expr& c : ds.constraint_generations[0]) add_active(c);
  std::vector<int> rank(pts.size());
  for (std::size_t s = 0; s < pts.size(); ++s) rank[s] = rank_of(active_rows[s], ncols, opts.rank_tol);

  std::vector<std::string> unknowns = ds.component_names();
  unknowns.insert(unknowns.end(), ds.unsolved_multipliers.begin(), ds.unsolved_multipliers.end());
  std::vector<Expr> equations = ds.g_sum;

  for (int gen = 1; gen <= opts.max_generations; ++gen) {
    auto conds = generate_tangency_conditions(ds, false, opts.probe);
    for (const auto& c : conds) {
      if (c.cls != TangencyClass::kIdenticallyZero) equations.push_back(c.value);
    }
    ds.tangency.insert(ds.tangency.end(), conds.begin(), conds.end());

    const LinearSolveResult res = solve_linear(equations, unknowns, opts.probe);
    ComponentSnapshot snap;
    const std::set<std::string> comps(unknowns.begin(), unknowns.end() - static_cast<std::ptrdiff_t>(ds.unsolved_multipliers.size()));
    for (const auto& [name, value] : res.assignments) {
      if (comps.count(name)) snap.determined.emplace(name, value);
    }
    for (const auto& u : res.unsolved) {
      if (comps.count(u)) snap.free.push_back(u);
    }
    ds.components.push_back(std::move(snap));

    std::vector<Expr> fresh;
    for (const Expr& r : res.residual_equations) {
      if (std::any_of(active.begin(), active.end(), [&](const Expr& a) { return same_up_to_sign(a, r); })) continue;
      const auto g = gradient_rows(r, coords, pts);
      bool grows = false;
      std::vector<int> next(pts.size());
      for (std::size_t s = 0; s < pts.size(); ++s) {
        active_rows[s].push_back(g[s]);
        next[s] = rank_of(active_rows[s], ncols, opts.rank_tol);
        active_rows[s].pop_back();
        grows = grows || next[s] > rank[s];
      }
      if (!grows) continue;
      add_active(r);
      rank = next;
      fresh.push_back(r);
    }
    ds.constraint_generations.push_back(fresh);
    if (fresh.empty()) {
      ds.stabilized = true;
      break;
    }
  }
  return ds;
}

DerivedImplicitSystem constraint_algorithm(const ImplicitProblem& p, const ConstraintAlgorithmOptions& opts) {
  DerivedImplicitSystem ds = run_constraint_algorithm(p, opts);
  if (!ds.stabilized) throw NotStabilizedError(opts.max_generations);
  return ds;
}

}  // namespace ksoc
