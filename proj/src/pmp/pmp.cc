#include "ksoc/pmp.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ksoc/errors.h"
#include "ksoc/simplex.h"

namespace ksoc {

namespace {

std::vector<int> other_axes_then(int k, int A0) {
  std::vector<int> order;
  for (int a = 0; a < k; ++a) {
    if (a != A0) order.push_back(a);
  }
  order.push_back(A0);
  return order;
}

std::vector<double> corner_time(const Grid& grid) {
  std::vector<double> t;
  for (const GridAxis& a : grid.axes) t.push_back(a.t0);
  return t;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SectionField variational_field(const DerivedHamiltonianSystem& dhs, int A) {
  const ControlSystem& cs = dhs.ext.base;
  const int dim = dhs.dim();
  std::vector<std::string> names = dhs.ext.state_names;
  std::vector<Expr> vars;
  for (int j = 0; j < dim; ++j) {
    std::string v = "dx" + std::to_string(j + 1);
    while (std::find(names.begin(), names.end(), v) != names.end()) v = "d" + v;
    names.push_back(v);
    vars.push_back(Expr::symbol(v));
  }
  std::vector<std::vector<Expr>> rhs;
  for (int B = 0; B < dhs.k(); ++B) {
    std::vector<Expr> row = dhs.state_rhs[B];
    for (int j = 0; j < dim; ++j) {
      Expr e;
      if (B == A - 1) {
        for (int m = 0; m < dim; ++m) {
          e += differentiate(dhs.state_rhs[B][j], dhs.ext.state_names[m]) * vars[m];
        }
      }
      row.push_back(e);
    }
    rhs.push_back(std::move(row));
  }
  return SectionField(cs.time_names, std::move(names), cs.control_names, std::move(rhs));
}

PerturbationVector propagate_with(const SectionField& field, const Grid& grid,
                                  const ControlField& control, const PerturbationVector& pv,
                                  double to_time) {
  const int A0 = pv.A - 1;
  if (to_time < pv.base_time[A0]) throw ValidationError("propagation target precedes base time");
  std::vector<double> x = pv.base_state;
  x.insert(x.end(), pv.v.data(), pv.v.data() + pv.v.size());
  std::vector<double> target = pv.base_time;
  target[A0] = to_time;
  const std::vector<int> order{A0};
  const std::vector<double> y = integrate_path(field, grid, control, pv.base_time, x, target, order);
  PerturbationVector out;
  out.A = pv.A;
  out.base_time = target;
  const auto dim = pv.base_state.size();
  out.base_state.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(dim));
  out.v = Eigen::Map<const Eigen::VectorXd>(y.data() + dim, static_cast<Eigen::Index>(dim));
  return out;
}

}  // namespace

ControlField perturb_control(const ControlField& u, const PerturbationData& pi, double s) {
  if (s < 0) throw ValidationError("perturbation size must be nonnegative");
  if (pi.l < 0) throw ValidationError("perturbation length must be nonnegative");
  if (pi.A < 1 || pi.A > u.k()) throw ValidationError("perturbation axis out of range");
  if (s == 0.0 || pi.l == 0.0) return u;
  return u.with_slab(pi.A - 1, pi.r - pi.l * s, pi.r, pi.u);
}

std::vector<double> base_point(const Grid& grid, const PerturbationData& pi) {
  const int k = grid.k();
  if (pi.A < 1 || pi.A > k) throw ValidationError("perturbation axis out of range");
  std::vector<double> t(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a) {
    t[a] = pi.line.empty() ? grid.axes[a].tf : pi.line[a];
  }
  if (!pi.line.empty() && static_cast<int>(pi.line.size()) != k) {
    throw ValidationError("perturbation line needs k coordinates");
  }
  t[pi.A - 1] = pi.r;
  for (int a = 0; a < k; ++a) {
    const GridAxis& ax = grid.axes[a];
    if (!(t[a] >= ax.t0 && t[a] <= ax.tf)) {
      throw BasePointOutsideGridError("base point coordinate t" + std::to_string(a + 1) + " = " +
                                      std::to_string(t[a]) + " outside the grid");
    }
  }
  return t;
}

std::vector<double> state_at(const DerivedHamiltonianSystem& dhs, const Trajectory& traj,
                             std::span<const double> t, int A) {
  const SectionField field = SectionField::states_of(dhs);
  const auto x0 = traj.state(0);
  const std::vector<int> order = other_axes_then(dhs.k(), A - 1);
  return integrate_path(field, traj.grid, traj.control, corner_time(traj.grid), x0, t, order);
}

PerturbationVector perturbation_vector(const DerivedHamiltonianSystem& dhs,
                                       const Trajectory& traj, const PerturbationData& pi) {
  if (static_cast<int>(pi.u.size()) != traj.control.l()) {
    throw ValidationError("perturbation control has wrong length");
  }
  PerturbationVector pv;
  pv.A = pi.A;
  pv.base_time = base_point(traj.grid, pi);
  pv.base_state = state_at(dhs, traj, pv.base_time, pi.A);
  const SectionField field = SectionField::states_of(dhs);
  const auto current = traj.control.at_left(pv.base_time, pi.A - 1);
  std::vector<double> a(static_cast<std::size_t>(dhs.dim()));
  std::vector<double> b(a.size());
  field.eval(pi.A - 1, pv.base_time, pv.base_state, pi.u, a);
  field.eval(pi.A - 1, pv.base_time, pv.base_state, current, b);
  pv.v = pi.l * (to_vec(a) - to_vec(b));
  return pv;
}

PerturbationVector perturbation_vector_oracle(const DerivedHamiltonianSystem& dhs,
                                              const Trajectory& traj, const PerturbationData& pi,
                                              double s) {
  PerturbationVector pv;
  pv.A = pi.A;
  pv.base_time = base_point(traj.grid, pi);
  const int A0 = pi.A - 1;
  if (pi.r - pi.l * s < traj.grid.axes[A0].t0) {
    throw BasePointOutsideGridError("perturbation window leaves the grid");
  }
  const SectionField field = SectionField::states_of(dhs);
  const auto x0 = traj.state(0);
  const std::vector<int> order = other_axes_then(dhs.k(), A0);
  const std::vector<double> t0 = corner_time(traj.grid);
  auto D = [&](double size) {
    const ControlField pert = perturb_control(traj.control, pi, size);
    const ControlField ref = traj.control.refined(A0, pi.r - pi.l * size, pi.r);
    const auto xp = integrate_path(field, traj.grid, pert, t0, x0, pv.base_time, order);
    const auto xr = integrate_path(field, traj.grid, ref, t0, x0, pv.base_time, order);
    if (pv.base_state.empty()) pv.base_state = xr;
    return Eigen::VectorXd((to_vec(xp) - to_vec(xr)) / size);
  };
  const Eigen::VectorXd d1 = D(s);
  const Eigen::VectorXd d2 = D(0.5 * s);
  pv.v = 2.0 * d2 - d1;
  return pv;
}

PerturbationVector propagate_vector(const DerivedHamiltonianSystem& dhs, const Trajectory& traj,
                                    const PerturbationVector& v, double to_time) {
  return propagate_with(variational_field(dhs, v.A), traj.grid, traj.control, v, to_time);
}

Cone build_cone(const DerivedHamiltonianSystem& dhs, const Trajectory& traj, int A, double t,
                const SamplingPlan& plan) {
  const Grid& grid = traj.grid;
  const int A0 = A - 1;
  std::vector<double> rs = plan.r_values;
  if (rs.empty()) {
    for (int i = 0; i < grid.axes[A0].steps; ++i) {
      const double mid = 0.5 * (grid.t(A0, i) + grid.t(A0, i + 1));
      if (mid <= t) rs.push_back(mid);
    }
  }
  std::vector<std::vector<double>> us = plan.u_values;
  if (us.empty()) {
    const auto& U = dhs.ext.base.U;
    const int l = static_cast<int>(U.size());
    const int g = std::max(2, plan.u_points_per_axis);
    std::size_t total = 1;
    for (int a = 0; a < l; ++a) total *= static_cast<std::size_t>(g);
    for (std::size_t c = 0; c < total; ++c) {
      std::vector<double> u(static_cast<std::size_t>(l));
      std::size_t rem = c;
      for (int a = 0; a < l; ++a) {
        const int i = static_cast<int>(rem % static_cast<std::size_t>(g));
        rem /= static_cast<std::size_t>(g);
        u[a] = U[a].lo + (U[a].hi - U[a].lo) * i / (g - 1);
      }
      us.push_back(std::move(u));
    }
  }
  if (rs.empty() || us.empty()) throw ValidationError("sampling plan is empty");
  const SectionField var = variational_field(dhs, A);
  Cone cone;
  cone.A = A;
  cone.t = t;
  for (double r : rs) {
    for (const auto& u : us) {
      PerturbationData pi{A, r, 1.0, u, plan.line};
      const PerturbationVector pv = perturbation_vector(dhs, traj, pi);
      if (pv.v.norm() <= cone.tol) continue;
      cone.generators.push_back(propagate_with(var, grid, traj.control, pv, t).v);
    }
  }
  return cone;
}

Eigen::VectorXd cost_descent_direction(int k, int n, int A) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(k + n);
  d[A - 1] = -1.0;
  return d;
}

SeparationResult separation_test(const Cone& cone, const Eigen::VectorXd& d) {
  const auto m = d.size();
  if (d.norm() == 0.0) throw ValidationError("separation direction must be nonzero");
  std::vector<Eigen::VectorXd> gens;
  for (const auto& g : cone.generators) {
    if (g.size() != m) throw ValidationError("generator dimension mismatch");
    if (g.norm() > cone.tol) gens.push_back(g);
  }
  if (gens.empty()) throw DegenerateConeError("every cone generator is below tolerance");
  const auto N = static_cast<Eigen::Index>(gens.size());
  Eigen::MatrixXd G(m, N);
  for (Eigen::Index i = 0; i < N; ++i) G.col(i) = gens[static_cast<std::size_t>(i)];

  SeparationResult result;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-9 * std::max(1.0, smax)) ++rank;
  }
  if (rank < m) {
    Eigen::VectorXd beta = svd.matrixU().col(m - 1);
    if (beta.dot(d) < 0) beta = -beta;
    result.kind = SeparationResult::Kind::kSeparator;
    result.beta = beta.normalized();
    return result;
  }

  // Variables: beta+ (m), beta- (m), slacks s (N), w.
  const Eigen::Index nv = 2 * m + N + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 2, nv);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(N + 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    A.block(i, 0, 1, m) = G.col(i).transpose();
    A.block(i, m, 1, m) = -G.col(i).transpose();
    A(i, 2 * m + i) = 1.0;
  }
  A.block(N, 0, 1, m) = d.transpose();
  A.block(N, m, 1, m) = -d.transpose();
  A(N, 2 * m + N) = -1.0;
  const Eigen::VectorXd gsum = G.rowwise().sum();
  A.block(N + 1, 0, 1, m) = -gsum.transpose();
  A.block(N + 1, m, 1, m) = gsum.transpose();
  b[N + 1] = 1.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(nv);
  c.head(2 * m).setOnes();
  const LpResult sep = solve_lp(A, b, c);
  if (sep.status == LpStatus::kOptimal) {
    const Eigen::VectorXd beta = sep.x.head(m) - sep.x.segment(m, m);
    result.kind = SeparationResult::Kind::kSeparator;
    result.beta = beta.normalized();
    return result;
  }

  // Certificate: maximize tau with d = G (mu + tau 1), tau <= 1.
  Eigen::MatrixXd A2 = Eigen::MatrixXd::Zero(m + 1, N + 2);
  Eigen::VectorXd b2(m + 1);
  A2.block(0, 0, m, N) = G;
  A2.block(0, N, m, 1) = gsum;
  b2.head(m) = d;
  A2(m, N) = 1.0;
  A2(m, N + 1) = 1.0;
  b2[m] = 1.0;
  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(N + 2);
  c2[N] = -1.0;
  const LpResult cert = solve_lp(A2, b2, c2);
  result.kind = SeparationResult::Kind::kInterior;
  if (cert.status == LpStatus::kOptimal && cert.x[N] > 0) {
    result.weights = cert.x.head(N).array() + cert.x[N];
  }
  return result;
}

// ---------------------------------------------------------------------------
// Verification

bool AxisReport::pass() const {
  return std::all_of(std::begin(conditions), std::end(conditions),
                     [](const ConditionResult& c) { return c.pass; });
}

namespace {

class HamiltonianEvaluator {
 public:
  HamiltonianEvaluator(const DerivedHamiltonianSystem& dhs, const Trajectory& traj, int A0)
      : l_(static_cast<int>(dhs.ext.base.U.size())), box_(dhs.ext.base.U) {
    std::vector<std::string> slots = traj.time_names;
    slots.insert(slots.end(), traj.state_names.begin(), traj.state_names.end());
    slots.insert(slots.end(), traj.momentum_names.begin(), traj.momentum_names.end());
    slots.insert(slots.end(), traj.control_names.begin(), traj.control_names.end());
    h_ = CompiledExpr(dhs.H[static_cast<std::size_t>(A0)], slots);
    controls_at_ = slots.size() - static_cast<std::size_t>(l_);
  }

  void load(const Trajectory& traj, std::size_t node) {
    buf_ = traj.grid.times(traj.grid.unflat(node));
    const auto x = traj.state(node);
    const auto p = traj.momentum(node);
    buf_.insert(buf_.end(), x.begin(), x.end());
    buf_.insert(buf_.end(), p.begin(), p.end());
    buf_.resize(controls_at_ + static_cast<std::size_t>(l_));
  }

  double operator()(std::span<const double> u) {
    std::copy(u.begin(), u.end(), buf_.begin() + static_cast<std::ptrdiff_t>(controls_at_));
    return h_(buf_);
  }

  // Grid maximum over the box followed by coordinate-wise golden-section
  // refinement around the best grid point.
  double sup(int points) {
    if (l_ == 0) return (*this)(std::span<const double>());
    const int g = std::max(2, points);
    std::vector<double> u(static_cast<std::size_t>(l_)), best_u;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t total = 1;
    for (int a = 0; a < l_; ++a) total *= static_cast<std::size_t>(g);
    for (std::size_t c = 0; c < total; ++c) {
      std::size_t rem = c;
      for (int a = 0; a < l_; ++a) {
        const int i = static_cast<int>(rem % static_cast<std::size_t>(g));
        rem /= static_cast<std::size_t>(g);
        u[a] = box_[a].lo + (box_[a].hi - box_[a].lo) * i / (g - 1);
      }
      const double v = (*this)(u);
      if (v > best) {
        best = v;
        best_u = u;
      }
    }
    constexpr double kInvPhi = 0.6180339887498949;
    for (int round = 0; round < 2; ++round) {
      for (int a = 0; a < l_; ++a) {
        const double delta = (box_[a].hi - box_[a].lo) / (g - 1);
        double lo = std::max(box_[a].lo, best_u[a] - delta);
        double hi = std::min(box_[a].hi, best_u[a] + delta);
        u = best_u;
        auto f = [&](double x) {
          u[a] = x;
          return (*this)(u);
        };
        double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
        double f1 = f(x1), f2 = f(x2);
        for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
          if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kInvPhi * (hi - lo);
            f2 = f(x2);
          } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kInvPhi * (hi - lo);
            f1 = f(x1);
          }
        }
        for (double x : {x1, x2, lo, hi}) {
          const double v = f(x);
          if (v > best) {
            best = v;
            best_u[a] = x;
          }
        }
      }
    }
    return best;
  }

 private:
  int l_;
  std::vector<Interval> box_;
  CompiledExpr h_;
  std::size_t controls_at_ = 0;
  std::vector<double> buf_;
};

void record(ConditionResult& c, double residual, double tol) {
  ++c.checked;
  c.max_residual = std::max(c.max_residual, residual);
  if (!(residual <= tol)) ++c.violations;
}

}  // namespace

PmpReport verify_pmp(const DerivedHamiltonianSystem& dhs, const Trajectory& traj,
                     const PmpTolerances& tol) {
  if (!traj.has_momenta()) throw ValidationError("candidate has no costates");
  if (traj.state_names != dhs.ext.state_names || traj.momentum_names != dhs.all_momenta()) {
    throw ValidationError("candidate coordinates do not match the system");
  }
  const Grid& grid = traj.grid;
  const int k = dhs.k();
  const auto dim = static_cast<std::size_t>(dhs.dim());
  const std::size_t nodes = grid.node_count();
  PmpReport report;

  for (int A0 = 0; A0 < k; ++A0) {
    AxisReport ar;
    ar.A = A0 + 1;
    const std::size_t off = static_cast<std::size_t>(A0) * dim;
    const SectionField field = SectionField::with_costate(dhs, A0 + 1);
    const double h = grid.axes[A0].h();

    // (1) one-step residuals along t^A, and p^A constant along other axes.
    ConditionResult& c1 = ar.conditions[0];
    for (std::size_t node = 0; node < nodes; ++node) {
      std::vector<int> idx = grid.unflat(node);
      const auto p = traj.momentum(node);
      if (idx[A0] < grid.axes[A0].steps) {
        std::vector<double> x(traj.state(node).begin(), traj.state(node).end());
        x.insert(x.end(), p.begin() + static_cast<std::ptrdiff_t>(off),
                 p.begin() + static_cast<std::ptrdiff_t>(off + dim));
        std::vector<double> t = grid.times(idx);
        double res = std::numeric_limits<double>::infinity();
        try {
          advance(field, traj.control, A0, t, x, h, 1);
          idx[A0] += 1;
          const std::size_t next = grid.flat(idx);
          idx[A0] -= 1;
          res = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            res = std::max(res, std::abs(x[j] - traj.state(next)[j]) / h);
            res = std::max(res, std::abs(x[dim + j] - traj.momentum(next)[off + j]) / h);
          }
        } catch (const NonFiniteStateError&) {
        }
        record(c1, res, tol.tol_dyn);
      }
      for (int B = 0; B < k; ++B) {
        if (B == A0 || idx[B] >= grid.axes[B].steps) continue;
        idx[B] += 1;
        const auto q = traj.momentum(grid.flat(idx));
        idx[B] -= 1;
        double res = 0.0;
        for (std::size_t j = off; j < off + dim; ++j) {
          res = std::max(res, std::abs(q[j] - p[j]) / grid.axes[B].h());
        }
        record(c1, res, tol.tol_dyn);
      }
    }

    // (2) maximum condition, (3) constancy of the supremum along t^A.
    HamiltonianEvaluator H(dhs, traj, A0);
    std::vector<double> M(nodes);
    ConditionResult& c2 = ar.conditions[1];
    for (std::size_t node = 0; node < nodes; ++node) {
      H.load(traj, node);
      const std::vector<double> t = grid.times(grid.unflat(node));
      const auto u = traj.control.at(t);
      const double hu = H(u);
      const double s = std::max(H.sup(tol.control_grid_points), hu);
      M[node] = s;
      record(c2, s - hu, tol.tol_max);
    }
    ConditionResult& c3 = ar.conditions[2];
    for (std::size_t node = 0; node < nodes; ++node) {
      std::vector<int> idx = grid.unflat(node);
      if (idx[A0] != 0) continue;
      std::vector<double> line;
      std::vector<std::size_t> members;
      for (int i = 0; i <= grid.axes[A0].steps; ++i) {
        idx[A0] = i;
        members.push_back(grid.flat(idx));
        line.push_back(M[members.back()]);
      }
      std::vector<double> sorted = line;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                       sorted.end());
      const double median = sorted[sorted.size() / 2];
      for (double v : line) record(c3, std::abs(v - median), tol.tol_const);
    }

    // (4) nontriviality, (5) constant cost multipliers with nonpositive sign.
    ConditionResult& c4 = ar.conditions[3];
    ConditionResult& c5 = ar.conditions[4];
    const auto p_ref = traj.momentum(0);
    for (std::size_t node = 0; node < nodes; ++node) {
      const auto p = traj.momentum(node);
      double norm = 0.0;
      for (std::size_t j = off; j < off + dim; ++j) norm += p[j] * p[j];
      norm = std::sqrt(norm);
      ++c4.checked;
      c4.max_residual = std::max(c4.max_residual, std::max(0.0, tol.tol_nonzero - norm));
      if (!(norm >= tol.tol_nonzero)) ++c4.violations;
      double drift = 0.0;
      for (int B = 0; B < k; ++B) {
        drift = std::max(drift, std::abs(p[off + B] - p_ref[off + B]));
      }
      const double sign = std::max(0.0, p[off + static_cast<std::size_t>(A0)]);
      ++c5.checked;
      c5.max_residual = std::max({c5.max_residual, drift, sign});
      if (!(drift <= tol.tol_const) || sign > 0.0) ++c5.violations;
    }

    for (int c = 0; c < 3; ++c) {
      ar.conditions[c].pass = ar.conditions[c].violation_fraction() <= tol.allowed_fraction;
    }
    c4.pass = c4.violations == 0;
    c5.pass = c5.violations == 0;
    if (!ar.pass()) report.pass = false;
    report.axes.push_back(ar);
  }
  return report;
}

}  // namespace ksoc
