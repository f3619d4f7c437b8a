#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ksoc/compiled_expr.h"
#include "ksoc/control_model.h"
#include "ksoc/expr.h"
#include "ksoc/hamiltonian.h"

namespace ksoc {

struct GridAxis {
  double t0 = 0.0;
  double tf = 1.0;
  int steps = 1;
  double h() const { return (tf - t0) / steps; }
};

/// Tensor grid over the box I_1 x ... x I_k. Nodes are stored row-major
/// with axis 0 slowest.
struct Grid {
  std::vector<GridAxis> axes;

  int k() const { return static_cast<int>(axes.size()); }
  std::vector<int> shape() const;
  std::size_t node_count() const;
  std::size_t flat(std::span<const int> index) const;
  std::vector<int> unflat(std::size_t node) const;
  double t(int axis, int index) const;
  std::vector<double> times(std::span<const int> index) const;
  /// Throws ValidationError unless every axis has steps >= 1 and tf > t0.
  void validate() const;
};

/// Piecewise-constant controls on tensor cells. Axis a is cut at the sorted
/// interior breakpoints[a]; cells are right-continuous (a point on a
/// breakpoint belongs to the cell above it).
class ControlField {
 public:
  ControlField() = default;
  ControlField(std::vector<std::vector<double>> breakpoints,
               std::vector<std::vector<double>> values, int l);

  static ControlField constant(int k, std::vector<double> u);
  /// One cell per grid cell; values in grid-cell order (axis 0 slowest).
  static ControlField on_grid(const Grid& grid, std::vector<std::vector<double>> values, int l);

  int k() const { return static_cast<int>(breakpoints_.size()); }
  int l() const { return l_; }
  const std::vector<std::vector<double>>& breakpoints() const { return breakpoints_; }
  const std::vector<std::vector<double>>& values() const { return values_; }

  std::vector<int> cell_of(std::span<const double> t) const;
  /// Cell reached from below on axis `axis` (left limit), right-continuous
  /// on the other axes.
  std::vector<int> cell_of_left(std::span<const double> t, int axis) const;
  std::size_t flat_cell(std::span<const int> cell) const;
  std::span<const double> at(std::span<const double> t) const;
  std::span<const double> at_left(std::span<const double> t, int axis) const;
  std::span<const double> cell_value(std::span<const int> cell) const;

  /// Breakpoints of `axis` strictly between a and b (sorted in the
  /// direction from a to b).
  std::vector<double> crossings(int axis, double a, double b) const;

  /// Throws ValidationError on shape mismatch or values outside the box.
  void validate(const std::vector<Interval>& box) const;

  /// Replaces the value on the slab {t : lo <= t^axis < hi} by `u`,
  /// inserting breakpoints at lo and hi as needed.
  ControlField with_slab(int axis, double lo, double hi, std::span<const double> u) const;
  /// Same values with breakpoints inserted at lo and hi.
  ControlField refined(int axis, double lo, double hi) const;

 private:
  ControlField remap(int axis, double lo, double hi, std::span<const double> u,
                     bool replace) const;

  std::vector<std::vector<double>> breakpoints_;
  std::vector<std::vector<double>> values_;
  int l_ = 0;
};

/// First-order system d x^j / d t^A = rhs[A][j](t, x, u) in slot form.
class SectionField {
 public:
  SectionField() = default;
  SectionField(std::vector<std::string> time_names, std::vector<std::string> state_names,
               std::vector<std::string> control_names, std::vector<std::vector<Expr>> rhs);

  /// Extended states only.
  static SectionField states_of(const DerivedHamiltonianSystem& dhs);
  /// Extended states followed by the momenta p^A of one direction A
  /// (1-based); rows B != A carry the state equations and zero momenta.
  static SectionField with_costate(const DerivedHamiltonianSystem& dhs, int A);

  int k() const { return static_cast<int>(time_names_.size()); }
  int dim() const { return static_cast<int>(state_names_.size()); }
  int l() const { return static_cast<int>(control_names_.size()); }
  const std::vector<std::string>& time_names() const { return time_names_; }
  const std::vector<std::string>& state_names() const { return state_names_; }
  const std::vector<std::string>& control_names() const { return control_names_; }
  const std::vector<std::vector<Expr>>& rhs() const { return rhs_; }

  /// out[j] = rhs[A][j] for 0-based A.
  void eval(int A, std::span<const double> t, std::span<const double> x,
            std::span<const double> u, std::span<double> out) const;

 private:
  std::vector<std::string> time_names_;
  std::vector<std::string> state_names_;
  std::vector<std::string> control_names_;
  std::vector<std::vector<Expr>> rhs_;
  std::vector<std::vector<CompiledExpr>> compiled_;
};

/// Advances x along axis A (0-based) from t[A] to t[A] + delta with `n`
/// RK4 steps, splitting steps at control breakpoints; t[A] is updated.
void advance(const SectionField& field, const ControlField& control, int A,
             std::vector<double>& t, std::vector<double>& x, double delta, int n);

struct IntegrationOptions {
  std::vector<int> axis_order;  // 0-based; empty means 0, 1, ..., k-1
  int defect_probes = 8;
  std::uint64_t seed = kDefaultSeed;
};

struct Trajectory {
  Grid grid;
  ControlField control;
  std::vector<std::string> time_names;
  std::vector<std::string> state_names;
  std::vector<std::string> momentum_names;
  std::vector<std::string> control_names;
  std::vector<double> states;   // node_count x state_names.size()
  std::vector<double> momenta;  // empty or node_count x momentum_names.size()
  double defect = 0.0;
  std::uint64_t seed = kDefaultSeed;
  std::string method = "rk4";
  std::vector<int> axis_order;

  std::size_t n_states() const { return state_names.size(); }
  std::size_t n_momenta() const { return momentum_names.size(); }
  bool has_momenta() const { return !momenta.empty(); }
  std::span<const double> state(std::size_t node) const;
  std::span<const double> momentum(std::size_t node) const;
  std::span<double> state(std::size_t node);
  std::span<double> momentum(std::size_t node);
  std::size_t state_index(std::string_view name) const;
  std::size_t momentum_index(std::string_view name) const;
};

/// Fixed-step sweep: axis_order[0] from the corner, then each later axis
/// from every node already filled. The defect is the largest difference at
/// seeded probe nodes between the stored value and a reverse-order path.
Trajectory integrate_section(const SectionField& field, const Grid& grid,
                             const ControlField& control, std::span<const double> initial,
                             const IntegrationOptions& options = {});

/// `initial` holds either the n base states (the q0 block starts at 0) or
/// all k + n extended states with a zero q0 block.
Trajectory integrate_section(const DerivedHamiltonianSystem& dhs, const Grid& grid,
                             const ControlField& control, std::span<const double> initial,
                             const IntegrationOptions& options = {});

/// Moves from (from_t, x0) to target_t one axis at a time in `axis_order`,
/// using the grid step size on each axis.
std::vector<double> integrate_path(const SectionField& field, const Grid& grid,
                                   const ControlField& control, std::span<const double> from_t,
                                   std::span<const double> x0, std::span<const double> target_t,
                                   std::span<const int> axis_order);

/// Fills trajectory.momenta. For each A, p^A starts from the terminal
/// values on the face t^A = t^A_f and is integrated backward along every
/// t^A-line jointly with the state, restarting the state from the stored
/// node at each step. `terminal` lists all momenta in dhs.all_momenta()
/// order.
void integrate_costate(const DerivedHamiltonianSystem& dhs, Trajectory& trajectory,
                       std::span<const double> terminal);

struct FunctionalValues {
  /// per_axis[A][node]: integral of F along t^A from t^A_0 to the node.
  std::vector<std::vector<double>> per_axis;
  /// Integral of F over the whole box.
  double total = 0.0;
  /// Largest |q0_A - per_axis[A]| over nodes, per A.
  std::vector<double> q0_deviation;
};

/// Trapezoid quadrature per cell, with the cell's control at both ends.
FunctionalValues functional_values(const Expr& F, const Trajectory& trajectory);

void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out);
/// Reads the node table written by write_trajectory_csv; columns are
/// k indices, k times, n_states states, optional k * n_states momenta and
/// l controls. Control values per
/// grid cell are taken from each cell's lower corner.
Trajectory read_trajectory_csv(std::istream& in, int k, int n_states, int l);

}  // namespace ksoc
