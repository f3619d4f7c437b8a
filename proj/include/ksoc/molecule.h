#pragma once

// Orientation of a bipolar molecule in the plane by two external fields,
// posed as an implicit control problem with k = 2 (t1 = t, t2 = theta),
// n = 6, l = 2 and L = (u1^2 + u2^2) / 2.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ksoc/section_integrator.h"
#include "ksoc/skinner_rusk.h"

namespace ksoc {

ImplicitProblem builtin_molecule_problem();

struct GoldenItem {
  std::string name;
  std::string expected;  // right-hand side as published
  std::string derived;   // left-hand side from the engine, reduced
  bool pass = false;
  /// Known disagreement with the published value; `note` explains it.
  bool flagged = false;
  std::string note;
};

struct GoldenRecord {
  std::vector<GoldenItem> items;
  /// Component table the items are read from.
  int comparison_generation = 1;
  int generations = 0;
  bool stabilized = false;
  std::vector<std::string> free_components;
  RankReport rank;

  /// Every unflagged item matches.
  bool pass() const;
  const GoldenItem& item(const std::string& name) const;
};

/// Reduces `e` on the constraint set known after tangency pass `generation`:
/// substitutes solved multipliers and controls and the component table of
/// that pass, then eliminates momenta with the constraints of generations
/// <= `generation` that are affine in the momenta alone.
Expr reduce_on_constraints(const DerivedImplicitSystem& ds, int generation, const Expr& e,
                           const ProbeOptions& probe = {});

/// Runs the constraint algorithm on the builtin problem and compares every
/// published quantity. Items pass on structural equality after reduction.
GoldenRecord verify_golden(const ConstraintAlgorithmOptions& opts = {});

struct MoleculeIntegrationOptions {
  Grid grid{{{0.0, 1.0, 16}, {0.0, 1.0, 16}}};
  /// Values for undetermined components; missing ones are 0.
  std::map<std::string, double, std::less<>> free_values;
  /// q, v, p at the grid corner (30 values). Empty: molecule_initial_data.
  std::vector<double> initial;
  double amplitude = 0.1;
  std::uint64_t seed = kDefaultSeed;
  /// Component table to integrate; -1 selects the latest. The default is
  /// the first tangency pass: later tables divide by p2_5^2 + p2_6^2, which
  /// vanishes where the solved controls do.
  int generation = 1;
};

/// A point on the stabilized constraint set at t = 0: q, v^3_1, v^4_1, v^5_1,
/// v^6_1, p^2_3 and p^2_4 are seeded uniform in [-amplitude, amplitude],
/// p^1_5 = -p^2_3, p^1_6 = -p^2_4, every other momentum is 0 (so both solved
/// controls vanish), and the remaining velocities follow from Psi^1..Psi^8.
std::vector<double> molecule_initial_data(std::uint64_t seed, double amplitude);

struct MoleculeRun {
  Trajectory trajectory;  // states q, v, p; no separate momenta block
  double defect = 0.0;
  /// Largest state difference at the far grid corner between the t1-first
  /// and t2-first paths from the initial corner.
  double corner_defect = 0.0;
  /// Trapezoid value of the double integral of (u1^2 + u2^2) / 2.
  double energy = 0.0;
  std::vector<double> u1, u2;  // solved controls at the nodes
};

/// The section field of the determined Z_A with the solved controls
/// substituted, over states (q, v, p).
SectionField molecule_field(const DerivedImplicitSystem& ds, const MoleculeIntegrationOptions& opts);

MoleculeRun integrate_molecule(const DerivedImplicitSystem& ds, const MoleculeIntegrationOptions& opts = {});

}  // namespace ksoc
