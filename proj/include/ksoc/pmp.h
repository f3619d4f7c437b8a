#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ksoc/hamiltonian.h"
#include "ksoc/section_integrator.h"

namespace ksoc {

/// Needle variation on axis A: the control takes the value u on the slab
/// r - l*s <= t^A < r across all other axes.
struct PerturbationData {
  int A = 1;  // 1-based
  double r = 0.0;
  double l = 1.0;
  std::vector<double> u;
  /// Coordinates of the base point on the other axes (entry A ignored).
  /// Empty means the terminal corner.
  std::vector<double> line;
};

struct PerturbationVector {
  int A = 1;
  std::vector<double> base_time;   // k entries, base_time[A-1] = r
  std::vector<double> base_state;  // extended state at base_time
  Eigen::VectorXd v;               // k + n components
};

ControlField perturb_control(const ControlField& u, const PerturbationData& pi, double s);

/// Point t with t^A = r and the other coordinates from pi.line. Throws
/// BasePointOutsideGridError.
std::vector<double> base_point(const Grid& grid, const PerturbationData& pi);

/// Extended state at `t`, reached from the corner along the other axes
/// first and along axis A last.
std::vector<double> state_at(const DerivedHamiltonianSystem& dhs, const Trajectory& trajectory,
                             std::span<const double> t, int A);

/// l * [X_A(x, u_A) - X_A(x, u(r-))] at the base point.
PerturbationVector perturbation_vector(const DerivedHamiltonianSystem& dhs,
                                       const Trajectory& trajectory, const PerturbationData& pi);

/// Re-integration estimate 2 D(s/2) - D(s), D(s) = (x[pi^s](t) - x(t)) / s.
PerturbationVector perturbation_vector_oracle(const DerivedHamiltonianSystem& dhs,
                                              const Trajectory& trajectory,
                                              const PerturbationData& pi, double s = 1e-2);

/// Integrates the variational equation along t^A from the base time to
/// t^A = to_time jointly with the state.
PerturbationVector propagate_vector(const DerivedHamiltonianSystem& dhs,
                                    const Trajectory& trajectory, const PerturbationVector& v,
                                    double to_time);

struct SamplingPlan {
  std::vector<double> r_values;            // empty: midpoints of grid cells on axis A
  std::vector<std::vector<double>> u_values;  // empty: tensor grid over U
  int u_points_per_axis = 5;
  std::vector<double> line;                // as in PerturbationData
};

struct Cone {
  int A = 1;
  double t = 0.0;
  std::vector<Eigen::VectorXd> generators;
  double tol = 1e-9;
};

Cone build_cone(const DerivedHamiltonianSystem& dhs, const Trajectory& trajectory, int A,
                double t, const SamplingPlan& plan = {});

/// d = -e_{0_A} in extended coordinates.
Eigen::VectorXd cost_descent_direction(int k, int n, int A);

struct SeparationResult {
  enum class Kind { kInterior, kSeparator };
  Kind kind = Kind::kSeparator;
  Eigen::VectorXd beta;     // unit covector for kSeparator
  Eigen::VectorXd weights;  // positive generator weights for kInterior, if found
};

/// Interior: d is a strictly positive combination of the generators.
/// Separator: unit beta with <beta, d> >= 0 and <beta, g> <= tol for all g.
/// Throws DegenerateConeError if every generator is below tolerance.
SeparationResult separation_test(const Cone& cone, const Eigen::VectorXd& d);

struct PmpTolerances {
  double tol_dyn = 1e-6;
  double tol_max = 1e-6;
  double tol_const = 1e-6;
  double tol_nonzero = 1e-12;
  int control_grid_points = 33;
  double allowed_fraction = 0.02;
};

struct ConditionResult {
  bool pass = true;
  double max_residual = 0.0;
  std::size_t violations = 0;
  std::size_t checked = 0;
  double violation_fraction() const {
    return checked ? static_cast<double>(violations) / static_cast<double>(checked) : 0.0;
  }
};

struct AxisReport {
  int A = 1;
  ConditionResult conditions[5];
  bool pass() const;
};

struct PmpReport {
  std::vector<AxisReport> axes;
  bool pass = true;
};

/// Checks the five necessary conditions on a candidate with costates.
PmpReport verify_pmp(const DerivedHamiltonianSystem& dhs, const Trajectory& candidate,
                     const PmpTolerances& tol = {});

}  // namespace ksoc
