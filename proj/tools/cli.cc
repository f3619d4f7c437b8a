#include "cli.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ksoc/control_model.h"
#include "ksoc/errors.h"
#include "ksoc/hamiltonian.h"
#include "ksoc/molecule.h"
#include "ksoc/pmp.h"
#include "ksoc/section_integrator.h"
#include "ksoc/skinner_rusk.h"

namespace ksoc::cli {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kBuiltinMolecule = "builtin:molecule";

struct Options {
  std::string command;
  std::string problem;
  std::string trajectory;
  std::string out_dir;
  std::string grid;
  std::string control;
  std::string initial;
  std::string integrate;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tol;
  bool json = false;
  bool timings = false;
  bool implicit = false;
};

struct Tolerances {
  double tol_zero = 1e-9;
  double tol_rank = 1e-8;
  PmpTolerances pmp;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string join_path(const std::string& path, const std::string& key) { return path + "/" + key; }

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ValidationError((path.empty() ? std::string("/") : path) + ": " + what);
}

const Json& need(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) field_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) field_error(join_path(path, key), "missing field");
  return *it;
}

int as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) field_error(path, "expected an integer");
  return j.get<int>();
}

double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

std::vector<double> as_doubles(const Json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_double(j[i], path + "/" + std::to_string(i)));
  return v;
}

Expr as_expr(const Json& j, const std::string& path) {
  if (!j.is_string()) field_error(path, "expected an expression string");
  try {
    return parse_expr(j.get<std::string>());
  } catch (const ValidationError& e) {
    field_error(path, e.what());
  }
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + item + "' in " + what);
    }
  }
  return v;
}

/// "t0:tf:steps,..." or "NxM..." on the unit box.
Grid parse_grid_spec(const std::string& spec) {
  Grid g;
  if (spec.find(':') == std::string::npos) {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, 'x')) {
      const auto v = parse_list(item, "grid spec");
      if (v.size() != 1 || v[0] != static_cast<int>(v[0])) throw UsageError("bad grid spec '" + spec + "'");
      g.axes.push_back({0.0, 1.0, static_cast<int>(v[0])});
    }
  } else {
    std::stringstream ss(spec);
    std::string axis;
    while (std::getline(ss, axis, ',')) {
      std::replace(axis.begin(), axis.end(), ':', ',');
      const auto v = parse_list(axis, "grid spec");
      if (v.size() != 3 || v[2] != static_cast<int>(v[2])) throw UsageError("bad grid spec '" + spec + "'");
      g.axes.push_back({v[0], v[1], static_cast<int>(v[2])});
    }
  }
  if (g.axes.empty()) throw UsageError("empty grid spec");
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw UsageError(std::string("grid spec: ") + e.what());
  }
  return g;
}

Grid grid_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) field_error(path, "expected a nonempty array of axes");
  Grid g;
  for (std::size_t a = 0; a < j.size(); ++a) {
    const std::string p = path + "/" + std::to_string(a);
    const Json& ax = j[a];
    if (ax.is_array()) {
      if (ax.size() != 3) field_error(p, "expected [t0, tf, steps]");
      g.axes.push_back({as_double(ax[0], p + "/0"), as_double(ax[1], p + "/1"), as_int(ax[2], p + "/2")});
    } else {
      g.axes.push_back({as_double(need(ax, "t0", p), p + "/t0"), as_double(need(ax, "tf", p), p + "/tf"),
                        as_int(need(ax, "steps", p), p + "/steps")});
    }
  }
  try {
    g.validate();
  } catch (const ValidationError& e) {
    field_error(path, e.what());
  }
  return g;
}

// Problem file ----------------------------------------------------------------

struct Problem {
  Json doc;
  fs::path dir;
  bool builtin_molecule = false;
  std::optional<ControlSystem> system;
  std::optional<ImplicitProblem> implicit;
  int max_generations = 10;
};

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

ControlSystem system_from_json(const Json& s) {
  const std::string path = "/system";
  const int k = as_int(need(s, "k", path), path + "/k");
  const int n = as_int(need(s, "n", path), path + "/n");
  const int l = s.contains("l") ? as_int(s["l"], path + "/l") : 0;
  const Json& X = need(s, "X", path);
  if (!X.is_array()) field_error(path + "/X", "expected k rows of n expressions");
  std::vector<std::vector<Expr>> rows;
  for (std::size_t A = 0; A < X.size(); ++A) {
    const std::string p = path + "/X/" + std::to_string(A);
    if (!X[A].is_array()) field_error(p, "expected an array of expressions");
    std::vector<Expr> row;
    for (std::size_t i = 0; i < X[A].size(); ++i) row.push_back(as_expr(X[A][i], p + "/" + std::to_string(i)));
    rows.push_back(std::move(row));
  }
  const Expr F = as_expr(need(s, "F", path), path + "/F");
  std::vector<Interval> U;
  if (s.contains("U")) {
    const Json& u = s["U"];
    if (!u.is_array()) field_error(path + "/U", "expected an array of [lo, hi]");
    for (std::size_t a = 0; a < u.size(); ++a) {
      const std::string p = path + "/U/" + std::to_string(a);
      const auto b = as_doubles(u[a], p);
      if (b.size() != 2) field_error(p, "expected [lo, hi]");
      U.push_back({b[0], b[1]});
    }
  }
  try {
    return ControlSystem::make(k, n, l, std::move(rows), F, std::move(U));
  } catch (const ValidationError& e) {
    field_error(path, e.what());
  }
}

ImplicitProblem implicit_from_json(const Json& s) {
  const std::string path = "/implicit";
  ImplicitProblem p;
  p.k = as_int(need(s, "k", path), path + "/k");
  p.n = as_int(need(s, "n", path), path + "/n");
  p.l = s.contains("l") ? as_int(s["l"], path + "/l") : 0;
  p.controls_present = p.l > 0;
  const Json& c = need(s, "constraints", path);
  if (!c.is_array()) field_error(path + "/constraints", "expected an array of expressions");
  for (std::size_t a = 0; a < c.size(); ++a) {
    p.constraints.push_back(as_expr(c[a], path + "/constraints/" + std::to_string(a)));
  }
  p.lagrangian = as_expr(need(s, "lagrangian", path), path + "/lagrangian");
  return p;
}

Problem load_problem(const std::string& file) {
  Problem pr;
  if (file.empty()) throw UsageError("--problem is required");
  if (file == kBuiltinMolecule) {
    pr.builtin_molecule = true;
    pr.implicit = builtin_molecule_problem();
    pr.doc = Json::object();
    return pr;
  }
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open problem file '" + file + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  pr.dir = fs::path(file).parent_path();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    field_error("", "problem file is empty; expected an object with a 'system' or 'implicit' section");
  }
  try {
    pr.doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("problem file is not valid JSON at " + line_column(text, e.byte) + ": " + e.what());
  }
  if (!pr.doc.is_object()) field_error("", "expected a JSON object");
  const bool has_system = pr.doc.contains("system");
  const bool has_implicit = pr.doc.contains("implicit");
  if (has_system == has_implicit) field_error("", "exactly one of 'system' and 'implicit' must be present");
  static const std::vector<std::string> known = {"system",   "implicit",         "grid",       "controls",
                                                 "initial",  "terminal_momenta", "tolerances", "seed",
                                                 "trajectory", "max_generations", "generation", "free_values"};
  for (const auto& [key, value] : pr.doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) field_error("/" + key, "unknown field");
  }
  if (has_system) {
    pr.system = system_from_json(pr.doc["system"]);
  } else if (pr.doc["implicit"].is_string()) {
    if (pr.doc["implicit"].get<std::string>() != kBuiltinMolecule) {
      field_error("/implicit", "unknown builtin problem");
    }
    pr.builtin_molecule = true;
    pr.implicit = builtin_molecule_problem();
  } else {
    pr.implicit = implicit_from_json(pr.doc["implicit"]);
  }
  if (pr.doc.contains("max_generations")) {
    pr.max_generations = as_int(pr.doc["max_generations"], "/max_generations");
  }
  return pr;
}

void set_tolerance(Tolerances& t, const std::string& key, double value, const std::string& where) {
  if (key == "tol_zero") {
    t.tol_zero = value;
  } else if (key == "tol_rank") {
    t.tol_rank = value;
  } else if (key == "tol_dyn") {
    t.pmp.tol_dyn = value;
  } else if (key == "tol_max") {
    t.pmp.tol_max = value;
  } else if (key == "tol_const") {
    t.pmp.tol_const = value;
  } else if (key == "tol_nonzero") {
    t.pmp.tol_nonzero = value;
  } else if (key == "allowed_fraction") {
    t.pmp.allowed_fraction = value;
  } else if (key == "control_grid_points") {
    if (value != static_cast<int>(value) || value < 2) throw ValidationError(where + ": expected an integer >= 2");
    t.pmp.control_grid_points = static_cast<int>(value);
  } else {
    throw ValidationError(where + ": unknown tolerance '" + key + "'");
  }
}

Tolerances resolve_tolerances(const Problem& pr, const Options& o) {
  Tolerances t;
  if (pr.doc.contains("tolerances")) {
    const Json& j = pr.doc["tolerances"];
    if (!j.is_object()) field_error("/tolerances", "expected an object");
    for (const auto& [key, value] : j.items()) {
      set_tolerance(t, key, as_double(value, "/tolerances/" + key), "/tolerances/" + key);
    }
  }
  for (const auto& kv : o.tol) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--tol expects KEY=VAL, got '" + kv + "'");
    const auto v = parse_list(kv.substr(eq + 1), "--tol");
    if (v.size() != 1) throw UsageError("--tol expects one value, got '" + kv + "'");
    try {
      set_tolerance(t, kv.substr(0, eq), v[0], "--tol");
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
  }
  return t;
}

std::uint64_t resolve_seed(const Problem& pr, const Options& o) {
  if (o.seed) return *o.seed;
  if (pr.doc.contains("seed")) {
    const Json& s = pr.doc["seed"];
    if (!s.is_number_unsigned()) field_error("/seed", "expected a nonnegative integer");
    return s.get<std::uint64_t>();
  }
  return kDefaultSeed;
}

// Report helpers --------------------------------------------------------------

std::vector<std::string> strings(const std::vector<Expr>& es) {
  std::vector<std::string> v;
  for (const Expr& e : es) v.push_back(e.to_string());
  return v;
}

Json expr_map(const std::vector<std::string>& names, const std::vector<Expr>& values) {
  Json j = Json::object();
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = values[i].to_string();
  return j;
}

Json grid_json(const Grid& g) {
  Json j = Json::array();
  for (const auto& ax : g.axes) j.push_back({{"t0", ax.t0}, {"tf", ax.tf}, {"steps", ax.steps}});
  return j;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct Outcome {
  Json report = Json::object();
  std::string text;
  int exit_code = kExitOk;
  std::vector<std::pair<std::string, std::string>> files;  // name, content
};

// derive ----------------------------------------------------------------------

void derive_explicit(const ControlSystem& cs, const ProbeOptions& probe, Outcome& o) {
  std::ostringstream t;
  const auto a1 = check_assumption1(cs, probe);
  Json ja = {{"pass", a1.pass}, {"residuals", Json::array()}, {"failing_axes", a1.failing_axes}};
  for (const auto& r : a1.per_axis) ja["residuals"].push_back(r.residual.to_string());
  o.report["assumption1"] = ja;
  const auto comp = check_compatibility(cs, probe);
  Json jc = {{"pass", comp.pass}, {"entries", Json::array()}};
  for (const auto& e : comp.entries) {
    jc["entries"].push_back({{"A", e.A}, {"B", e.B}, {"i", e.i}, {"residual", e.check.residual.to_string()},
                             {"pass", e.check.pass}});
  }
  o.report["compatibility"] = jc;
  t << "assumption 1 (cost invariant along every X_A): " << (a1.pass ? "pass" : "FAIL") << "\n";
  t << "compatibility of the X_A: " << (comp.pass ? "pass" : "fail (integration may be path dependent)") << "\n";
  if (!a1.pass) {
    o.report["status"] = "fail";
    o.exit_code = kExitDerivation;
    t << "cannot extend the system: L_{X_A} F != 0\n";
    o.text = t.str();
    return;
  }
  const auto ext = extend_system(cs, probe);
  const auto dhs = derive_hamilton_equations(ext, probe);
  o.report["extended_states"] = ext.state_names;
  o.report["hamiltonians"] = strings(dhs.H);
  Json eqs = Json::array();
  for (int A = 1; A <= dhs.k(); ++A) {
    const auto a = static_cast<std::size_t>(A - 1);
    eqs.push_back({{"A", A},
                   {"states", expr_map(ext.state_names, dhs.state_rhs[a])},
                   {"costates", expr_map(dhs.momentum_names[a], dhs.costate_rhs[a])}});
  }
  o.report["equations"] = eqs;
  o.report["off_diagonal_policy"] = DerivedHamiltonianSystem::kOffDiagonalPolicy;
  const auto hdw = build_hdw_sum(dhs, probe);
  o.report["hdw_sum"] = {{"pass", hdw.pass}, {"summed_rhs", strings(hdw.summed_rhs)}};
  o.report["status"] = "ok";
  for (int A = 1; A <= dhs.k(); ++A) {
    const auto a = static_cast<std::size_t>(A - 1);
    t << "H_" << A << " = " << dhs.H[a].to_string() << "\n";
    for (std::size_t j = 0; j < ext.state_names.size(); ++j) {
      t << "  d" << ext.state_names[j] << "/dt" << A << " = " << dhs.state_rhs[a][j].to_string() << "\n";
    }
    for (std::size_t j = 0; j < dhs.momentum_names[a].size(); ++j) {
      t << "  d" << dhs.momentum_names[a][j] << "/dt" << A << " = " << dhs.costate_rhs[a][j].to_string() << "\n";
    }
  }
  t << "summed (De Donder-Weyl) system: " << (hdw.pass ? "consistent" : "INCONSISTENT") << "\n";
  o.text = t.str();
}

Json table_json(const ComponentSnapshot& s) {
  Json det = Json::object();
  for (const auto& [k, v] : s.determined) det[k] = v.to_string();
  return {{"determined", det}, {"free", s.free}};
}

void derive_implicit(const ImplicitProblem& p, const ProbeOptions& probe, const Tolerances& tol,
                     int max_generations, Outcome& o) {
  p.validate(probe, 16, tol.tol_rank);
  ConstraintAlgorithmOptions opts;
  opts.max_generations = max_generations;
  opts.probe = probe;
  opts.rank_tol = tol.tol_rank;
  const auto ds = run_constraint_algorithm(p, opts);
  std::ostringstream t;
  o.report["hamiltonian"] = build_unified_hamiltonian(p).to_string();
  o.report["primary"] = {{"momentum", strings(ds.primary.momentum)},
                         {"control", strings(ds.primary.control)},
                         {"g_sum", strings(ds.primary.g_sum)}};
  Json mult = Json::object(), ctrl = Json::object();
  for (const auto& [k, v] : ds.solved) (k.rfind("lam", 0) == 0 ? mult : ctrl)[k] = v.to_string();
  o.report["multipliers"] = mult;
  o.report["controls"] = ctrl;
  o.report["unsolved_multipliers"] = ds.unsolved_multipliers;
  o.report["unsolved_controls"] = ds.unsolved_controls;
  o.report["singular_controls"] = ds.singular_controls;
  Json gens = Json::array();
  for (const auto& g : ds.constraint_generations) gens.push_back(strings(g));
  o.report["constraint_generations"] = gens;
  o.report["components"] = table_json(ds.table());
  const auto rank = rank_check(ds, probe, opts.rank_samples, tol.tol_rank);
  o.report["rank"] = {{"size", rank.size}, {"min", rank.min_rank}, {"max", rank.max_rank},
                      {"degenerate", rank.degenerate}};
  o.report["stabilized"] = ds.stabilized;
  o.report["status"] = ds.stabilized ? "ok" : "fail";
  if (!ds.stabilized) o.exit_code = kExitDerivation;

  t << "H = " << build_unified_hamiltonian(p).to_string() << "\n";
  t << "multipliers and controls:\n";
  for (const auto& [k, v] : ds.solved) t << "  " << k << " = " << v.to_string() << "\n";
  for (const auto& m : ds.unsolved_multipliers) t << "  " << m << " undetermined\n";
  if (ds.singular_controls) t << "  singular control case: controls left free\n";
  for (std::size_t g = 0; g < ds.constraint_generations.size(); ++g) {
    t << "constraints, generation " << g << ":\n";
    for (const Expr& c : ds.constraint_generations[g]) t << "  " << c.to_string() << " = 0\n";
  }
  t << "components of Z_A:\n";
  for (const auto& [k, v] : ds.table().determined) t << "  " << k << " = " << v.to_string() << "\n";
  for (const auto& f : ds.table().free) t << "  " << f << " free\n";
  t << "rank of the (u, v) Hessian: " << rank.min_rank << ".." << rank.max_rank << " of " << rank.size << "\n";
  t << (ds.stabilized ? "stabilized" : "NOT stabilized") << " after " << ds.constraint_generations.size() - 1
    << " generations\n";
  o.text = t.str();
}

// integrate -------------------------------------------------------------------

ControlField controls_from(const Problem& pr, const Options& opts, int k, int l) {
  if (!opts.control.empty()) return ControlField::constant(k, parse_list(opts.control, "--control"));
  if (!pr.doc.contains("controls")) return ControlField::constant(k, std::vector<double>(static_cast<std::size_t>(l), 0.0));
  const Json& c = pr.doc["controls"];
  if (c.contains("constant")) return ControlField::constant(k, as_doubles(c["constant"], "/controls/constant"));
  const Json& bp = need(c, "breakpoints", "/controls");
  const Json& vals = need(c, "values", "/controls");
  std::vector<std::vector<double>> b, v;
  for (std::size_t a = 0; a < bp.size(); ++a) b.push_back(as_doubles(bp[a], "/controls/breakpoints/" + std::to_string(a)));
  for (std::size_t a = 0; a < vals.size(); ++a) v.push_back(as_doubles(vals[a], "/controls/values/" + std::to_string(a)));
  try {
    return ControlField(std::move(b), std::move(v), l);
  } catch (const ValidationError& e) {
    field_error("/controls", e.what());
  }
}

Grid grid_from(const Problem& pr, const Options& opts) {
  if (!opts.grid.empty()) return parse_grid_spec(opts.grid);
  if (!pr.doc.contains("grid")) throw UsageError("no grid: pass --grid or add a 'grid' section");
  return grid_from_json(pr.doc["grid"], "/grid");
}

std::vector<double> initial_from(const Problem& pr, const Options& opts) {
  if (!opts.initial.empty()) return parse_list(opts.initial, "--initial");
  if (!pr.doc.contains("initial")) return {};
  return as_doubles(pr.doc["initial"], "/initial");
}

Json final_state(const Trajectory& tr) {
  Json j = Json::object();
  const auto s = tr.state(tr.grid.node_count() - 1);
  for (std::size_t i = 0; i < tr.state_names.size(); ++i) j[tr.state_names[i]] = s[i];
  return j;
}

void integrate_explicit(const Problem& pr, const Options& opts, const ProbeOptions& probe, Outcome& o) {
  const ControlSystem& cs = *pr.system;
  const auto dhs = derive_hamilton_equations(extend_system(cs, probe), probe);
  const Grid grid = grid_from(pr, opts);
  if (grid.k() != cs.k) throw ValidationError("grid has " + std::to_string(grid.k()) + " axes, system has k = " + std::to_string(cs.k));
  const ControlField control = controls_from(pr, opts, cs.k, cs.l);
  try {
    control.validate(cs.U);
  } catch (const ValidationError& e) {
    field_error("/controls", e.what());
  }
  const auto x0 = initial_from(pr, opts);
  if (x0.empty()) throw UsageError("no initial data: pass --initial or add an 'initial' array");
  IntegrationOptions io;
  io.seed = probe.seed;
  Trajectory tr = integrate_section(dhs, grid, control, x0, io);
  if (pr.doc.contains("terminal_momenta")) {
    integrate_costate(dhs, tr, as_doubles(pr.doc["terminal_momenta"], "/terminal_momenta"));
  }
  const auto fv = functional_values(cs.F, tr);
  o.report["grid"] = grid_json(grid);
  o.report["nodes"] = grid.node_count();
  o.report["defect"] = tr.defect;
  o.report["functional_total"] = fv.total;
  o.report["q0_deviation"] = fv.q0_deviation;
  o.report["final_state"] = final_state(tr);
  o.report["costates"] = tr.has_momenta();
  o.report["status"] = "ok";
  std::ostringstream csv;
  write_trajectory_csv(tr, csv);
  o.files.emplace_back("trajectory.csv", csv.str());
  std::ostringstream t;
  t << "integrated " << grid.node_count() << " nodes; mixed-consistency defect " << fmt(tr.defect) << "\n";
  t << "functional over the box: " << fmt(fv.total) << "\n";
  t << "final state:";
  const auto s = tr.state(grid.node_count() - 1);
  for (std::size_t i = 0; i < tr.state_names.size(); ++i) t << " " << tr.state_names[i] << "=" << fmt(s[i]);
  t << "\n";
  o.text = t.str();
}

MoleculeIntegrationOptions molecule_options(const Problem& pr, const Options& opts, const ProbeOptions& probe,
                                            const std::string& grid_spec) {
  MoleculeIntegrationOptions mo;
  if (!grid_spec.empty()) {
    mo.grid = parse_grid_spec(grid_spec);
  } else if (pr.doc.contains("grid")) {
    mo.grid = grid_from_json(pr.doc["grid"], "/grid");
  }
  mo.initial = initial_from(pr, opts);
  mo.seed = probe.seed;
  if (pr.doc.contains("generation")) mo.generation = as_int(pr.doc["generation"], "/generation");
  if (pr.doc.contains("free_values")) {
    const Json& fvj = pr.doc["free_values"];
    if (!fvj.is_object()) field_error("/free_values", "expected an object of numbers");
    for (const auto& [k, v] : fvj.items()) mo.free_values[k] = as_double(v, "/free_values/" + k);
  }
  return mo;
}

Json molecule_run_json(const MoleculeRun& run, const MoleculeIntegrationOptions& mo) {
  return {{"grid", grid_json(mo.grid)},
          {"defect", run.defect},
          {"corner_defect", run.corner_defect},
          {"energy", run.energy},
          {"final_state", final_state(run.trajectory)}};
}

void integrate_implicit(const Problem& pr, const Options& opts, const ProbeOptions& probe, const Tolerances& tol,
                        Outcome& o) {
  ConstraintAlgorithmOptions ca;
  ca.max_generations = pr.max_generations;
  ca.probe = probe;
  ca.rank_tol = tol.tol_rank;
  const auto ds = constraint_algorithm(*pr.implicit, ca);
  const auto mo = molecule_options(pr, opts, probe, opts.grid);
  if (mo.grid.k() != ds.problem.k) throw ValidationError("grid does not match k");
  std::ostringstream t, csv;
  if (pr.builtin_molecule) {
    const auto run = integrate_molecule(ds, mo);
    o.report = molecule_run_json(run, mo);
    write_trajectory_csv(run.trajectory, csv);
    t << "integrated the determined Z_A; defect " << fmt(run.defect) << ", corner defect " << fmt(run.corner_defect)
      << ", energy " << fmt(run.energy) << "\n";
  } else {
    if (mo.initial.empty()) throw UsageError("no initial data: pass --initial or add an 'initial' array");
    const SectionField field = molecule_field(ds, mo);
    std::vector<double> free;
    for (const auto& name : field.control_names()) {
      auto it = mo.free_values.find(name);
      free.push_back(it == mo.free_values.end() ? 0.0 : it->second);
    }
    IntegrationOptions io;
    io.seed = probe.seed;
    const auto tr = integrate_section(field, mo.grid, ControlField::constant(ds.problem.k, free), mo.initial, io);
    o.report = {{"grid", grid_json(mo.grid)}, {"defect", tr.defect}, {"final_state", final_state(tr)}};
    write_trajectory_csv(tr, csv);
    t << "integrated the determined Z_A; defect " << fmt(tr.defect) << "\n";
  }
  o.report["status"] = "ok";
  o.files.emplace_back("trajectory.csv", csv.str());
  o.text = t.str();
}

// pmp-verify ------------------------------------------------------------------

void pmp_verify(const Problem& pr, const Options& opts, const ProbeOptions& probe, const Tolerances& tol,
                Outcome& o) {
  if (!pr.system) throw ValidationError("/system: pmp-verify needs an explicit system");
  const ControlSystem& cs = *pr.system;
  const auto dhs = derive_hamilton_equations(extend_system(cs, probe), probe);
  std::string path = opts.trajectory;
  if (path.empty()) {
    if (!pr.doc.contains("trajectory") || !pr.doc["trajectory"].is_string()) {
      throw UsageError("no trajectory: pass --trajectory or add a 'trajectory' path");
    }
    path = (pr.dir / pr.doc["trajectory"].get<std::string>()).string();
  }
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory '" + path + "'");
  Trajectory tr;
  try {
    tr = read_trajectory_csv(in, cs.k, dhs.dim(), cs.l);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!tr.has_momenta()) throw ValidationError(path + ": candidate has no costate columns");
  if (tr.state_names != dhs.ext.state_names || tr.momentum_names != dhs.all_momenta()) {
    throw ValidationError(path + ": column names do not match the system");
  }
  const auto rep = verify_pmp(dhs, tr, tol.pmp);
  static const char* kNames[5] = {"hamilton_equations", "maximum", "constant_supremum", "nontrivial_covector",
                                  "cost_multiplier"};
  Json axes = Json::array();
  std::ostringstream t;
  for (const auto& ax : rep.axes) {
    Json conds = Json::array();
    t << "direction " << ax.A << ":\n";
    for (int c = 0; c < 5; ++c) {
      const auto& r = ax.conditions[c];
      conds.push_back({{"condition", c + 1},
                       {"name", kNames[c]},
                       {"pass", r.pass},
                       {"max_residual", r.max_residual},
                       {"violations", r.violations},
                       {"checked", r.checked},
                       {"violation_fraction", r.violation_fraction()}});
      t << "  (" << c + 1 << ") " << kNames[c] << ": " << (r.pass ? "pass" : "FAIL") << "  max residual "
        << fmt(r.max_residual) << ", " << r.violations << "/" << r.checked << " nodes violate\n";
    }
    axes.push_back({{"A", ax.A}, {"pass", ax.pass()}, {"conditions", conds}});
  }
  o.report["tolerances"] = {{"tol_dyn", tol.pmp.tol_dyn},
                            {"tol_max", tol.pmp.tol_max},
                            {"tol_const", tol.pmp.tol_const},
                            {"tol_nonzero", tol.pmp.tol_nonzero},
                            {"allowed_fraction", tol.pmp.allowed_fraction},
                            {"control_grid_points", tol.pmp.control_grid_points}};
  o.report["axes"] = axes;
  o.report["pass"] = rep.pass;
  o.report["status"] = rep.pass ? "pass" : "fail";
  if (!rep.pass) o.exit_code = kExitVerification;
  t << (rep.pass ? "all conditions hold" : "candidate violates the maximum principle") << "\n";
  o.text = t.str();
}

// example-molecule ------------------------------------------------------------

void example_molecule(const Options& opts, const ProbeOptions& probe, const Tolerances& tol, Outcome& o) {
  ConstraintAlgorithmOptions ca;
  ca.probe = probe;
  ca.rank_tol = tol.tol_rank;
  const auto rec = verify_golden(ca);
  Json items = Json::array();
  std::ostringstream t;
  for (const auto& it : rec.items) {
    Json j = {{"name", it.name}, {"expected", it.expected}, {"derived", it.derived}, {"pass", it.pass},
              {"flagged", it.flagged}};
    if (!it.note.empty()) j["note"] = it.note;
    items.push_back(j);
    t << (it.pass ? "  ok    " : "  FAIL  ") << it.name << "\n";
    if (!it.pass || it.flagged) {
      t << "        expected " << it.expected << "\n        derived  " << it.derived << "\n";
      if (!it.note.empty()) t << "        note: " << it.note << "\n";
    }
  }
  o.report["comparison_generation"] = rec.comparison_generation;
  o.report["generations"] = rec.generations;
  o.report["stabilized"] = rec.stabilized;
  o.report["free_components"] = rec.free_components;
  o.report["rank"] = {{"size", rec.rank.size}, {"min", rec.rank.min_rank}, {"max", rec.rank.max_rank},
                      {"degenerate", rec.rank.degenerate}};
  o.report["items"] = items;
  o.report["pass"] = rec.pass();
  t << "constraint algorithm " << (rec.stabilized ? "stabilized" : "did not stabilize") << " after "
    << rec.generations << " generations\n";
  t << (rec.pass() ? "every published quantity reproduced" : "some published quantities differ") << "\n";
  if (!opts.integrate.empty()) {
    const auto ds = constraint_algorithm(builtin_molecule_problem(), ca);
    Problem none;
    none.doc = Json::object();
    const auto mo = molecule_options(none, opts, probe, opts.integrate);
    const auto run = integrate_molecule(ds, mo);
    o.report["integration"] = molecule_run_json(run, mo);
    std::ostringstream csv;
    write_trajectory_csv(run.trajectory, csv);
    o.files.emplace_back("trajectory.csv", csv.str());
    t << "integration: defect " << fmt(run.defect) << ", corner defect " << fmt(run.corner_defect) << ", energy "
      << fmt(run.energy) << "\n";
  }
  o.report["status"] = rec.pass() ? "pass" : "fail";
  if (!rec.pass()) o.exit_code = kExitVerification;
  o.text = t.str();
}

// dispatch --------------------------------------------------------------------

const char* category(int code) {
  switch (code) {
    case kExitUsage: return "usage";
    case kExitValidation: return "validation";
    case kExitDerivation: return "derivation";
    default: return "verification";
  }
}

Outcome execute(const Options& opts) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  Problem pr;
  if (opts.command != "example-molecule") pr = load_problem(opts.problem);
  if (opts.command == "example-molecule" && !opts.problem.empty()) {
    throw UsageError("example-molecule takes no --problem");
  }
  const Tolerances tol = resolve_tolerances(pr, opts);
  ProbeOptions probe;
  probe.seed = resolve_seed(pr, opts);
  probe.tol = tol.tol_zero;

  if (opts.command == "derive") {
    if (opts.implicit && pr.system) throw UsageError("--implicit given but the problem has a 'system' section");
    if (pr.system) {
      derive_explicit(*pr.system, probe, o);
    } else {
      derive_implicit(*pr.implicit, probe, tol, pr.max_generations, o);
    }
  } else if (opts.command == "integrate") {
    if (pr.system) {
      integrate_explicit(pr, opts, probe, o);
    } else {
      integrate_implicit(pr, opts, probe, tol, o);
    }
  } else if (opts.command == "pmp-verify") {
    pmp_verify(pr, opts, probe, tol, o);
  } else {
    example_molecule(opts, probe, tol, o);
  }

  Json head = {{"schema_version", kSchemaVersion},
               {"command", opts.command},
               {"seed", probe.seed},
               {"path", opts.command == "example-molecule" ? "implicit" : (pr.system ? "explicit" : "implicit")}};
  head.update(o.report);
  if (opts.timings) {
    head["timings"] = {
        {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  }
  o.report = std::move(head);
  return o;
}

void emit(const Options& opts, const Outcome& o, std::ostream& out) {
  const std::string json_text = o.report.dump(2) + "\n";
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    std::ofstream(fs::path(opts.out_dir) / "report.json") << json_text;
    std::ofstream(fs::path(opts.out_dir) / "report.txt") << o.text;
    for (const auto& [name, content] : o.files) std::ofstream(fs::path(opts.out_dir) / name) << content;
  }
  if (opts.json) {
    out << json_text;
  } else {
    out << o.text;
  }
}

int fail(const Options& opts, int code, const std::string& message, std::ostream& out, std::ostream& err) {
  err << "ksoc " << opts.command << ": " << category(code) << " error: " << message << "\n";
  if (opts.json) {
    const Json j = {{"schema_version", kSchemaVersion},
                    {"command", opts.command},
                    {"status", "error"},
                    {"error", {{"category", category(code)}, {"exit_code", code}, {"message", message}}}};
    out << j.dump(2) << "\n";
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opts;
  CLI::App app{"k-symplectic optimal control toolkit", "ksoc"};
  app.require_subcommand(1);
  auto common = [&](CLI::App* sub, bool with_problem) {
    if (with_problem) sub->add_option("--problem", opts.problem, "problem file (JSON) or builtin:molecule");
    sub->add_option("--seed", opts.seed, "seed for every randomized probe");
    sub->add_flag("--json", opts.json, "print the JSON report instead of text");
    sub->add_option("--out", opts.out_dir, "directory for report.json, report.txt and data files");
    sub->add_option("--tol", opts.tol, "tolerance override KEY=VAL (repeatable)");
    sub->add_flag("--timings", opts.timings, "include wall-clock timings in the JSON report");
  };
  auto* derive = app.add_subcommand("derive", "derive Hamilton equations or run the constraint algorithm");
  common(derive, true);
  derive->add_flag("--implicit", opts.implicit, "require the implicit (unified formalism) path");
  auto* integ = app.add_subcommand("integrate", "integrate an integral section on a grid");
  common(integ, true);
  integ->add_option("--grid", opts.grid, "t0:tf:steps,... or NxM on the unit box");
  integ->add_option("--control", opts.control, "constant control values u1,u2,...");
  integ->add_option("--initial", opts.initial, "initial state at the grid corner");
  auto* pmp = app.add_subcommand("pmp-verify", "check a candidate against the maximum principle");
  common(pmp, true);
  pmp->add_option("--trajectory", opts.trajectory, "candidate CSV with costate columns");
  auto* mol = app.add_subcommand("example-molecule", "reproduce the molecule example");
  common(mol, false);
  mol->add_option("--integrate", opts.integrate, "grid spec for integrating the determined Z_A");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ksoc: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  for (auto* sub : app.get_subcommands()) opts.command = sub->get_name();

  try {
    const Outcome o = execute(opts);
    emit(opts, o, out);
    return o.exit_code;
  } catch (const UsageError& e) {
    return fail(opts, kExitUsage, e.what(), out, err);
  } catch (const ValidationError& e) {
    return fail(opts, kExitValidation, e.what(), out, err);
  } catch (const UnboundSymbolError& e) {
    return fail(opts, kExitValidation, e.what(), out, err);
  } catch (const BasePointOutsideGridError& e) {
    return fail(opts, kExitValidation, e.what(), out, err);
  } catch (const std::exception& e) {
    return fail(opts, kExitDerivation, e.what(), out, err);
  }
}

}  // namespace ksoc::cli
