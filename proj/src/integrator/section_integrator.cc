#include "ksoc/section_integrator.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ksoc/errors.h"
#include "ksoc/naming.h"

namespace ksoc {

// ---------------------------------------------------------------------------
// SectionField

SectionField::SectionField(std::vector<std::string> time_names,
                           std::vector<std::string> state_names,
                           std::vector<std::string> control_names,
                           std::vector<std::vector<Expr>> rhs)
    : time_names_(std::move(time_names)),
      state_names_(std::move(state_names)),
      control_names_(std::move(control_names)),
      rhs_(std::move(rhs)) {
  if (rhs_.size() != time_names_.size()) throw ValidationError("field needs one row per axis");
  std::vector<std::string> slots = time_names_;
  slots.insert(slots.end(), state_names_.begin(), state_names_.end());
  slots.insert(slots.end(), control_names_.begin(), control_names_.end());
  for (const auto& row : rhs_) {
    if (row.size() != state_names_.size()) throw ValidationError("field row has wrong length");
    std::vector<CompiledExpr> c;
    c.reserve(row.size());
    for (const Expr& e : row) c.emplace_back(e, slots);
    compiled_.push_back(std::move(c));
  }
}

SectionField SectionField::states_of(const DerivedHamiltonianSystem& dhs) {
  const ControlSystem& cs = dhs.ext.base;
  return SectionField(cs.time_names, dhs.ext.state_names, cs.control_names, dhs.state_rhs);
}

SectionField SectionField::with_costate(const DerivedHamiltonianSystem& dhs, int A) {
  const ControlSystem& cs = dhs.ext.base;
  std::vector<std::string> names = dhs.ext.state_names;
  const auto& p = dhs.momentum_names[static_cast<std::size_t>(A - 1)];
  names.insert(names.end(), p.begin(), p.end());
  std::vector<std::vector<Expr>> rhs;
  for (int B = 0; B < dhs.k(); ++B) {
    std::vector<Expr> row = dhs.state_rhs[B];
    if (B == A - 1) {
      row.insert(row.end(), dhs.costate_rhs[B].begin(), dhs.costate_rhs[B].end());
    } else {
      row.resize(row.size() + p.size());
    }
    rhs.push_back(std::move(row));
  }
  return SectionField(cs.time_names, std::move(names), cs.control_names, std::move(rhs));
}

void SectionField::eval(int A, std::span<const double> t, std::span<const double> x,
                        std::span<const double> u, std::span<double> out) const {
  thread_local std::vector<double> slots;
  slots.clear();
  slots.insert(slots.end(), t.begin(), t.end());
  slots.insert(slots.end(), x.begin(), x.end());
  slots.insert(slots.end(), u.begin(), u.end());
  const auto& row = compiled_[static_cast<std::size_t>(A)];
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j](slots);
}

// ---------------------------------------------------------------------------
// Stepping

namespace {

void rk4(const SectionField& f, int A, std::vector<double>& t, std::vector<double>& x,
         double h, std::span<const double> u) {
  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), y(n);
  const double t0 = t[A];
  f.eval(A, t, x, u, k1);
  t[A] = t0 + 0.5 * h;
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] + 0.5 * h * k1[j];
  f.eval(A, t, y, u, k2);
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] + 0.5 * h * k2[j];
  f.eval(A, t, y, u, k3);
  t[A] = t0 + h;
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] + h * k3[j];
  f.eval(A, t, y, u, k4);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    if (!std::isfinite(x[j])) {
      throw NonFiniteStateError("non-finite state component '" + f.state_names()[j] +
                                "' at t" + std::to_string(A + 1) + " = " + std::to_string(t0 + h));
    }
  }
}

}  // namespace

void advance(const SectionField& field, const ControlField& control, int A,
             std::vector<double>& t, std::vector<double>& x, double delta, int n) {
  if (n < 1) throw ValidationError("advance needs at least one step");
  const double start = t[A];
  const double scale = std::max(1.0, std::abs(start));
  if (delta != 0.0 && std::abs(delta) / n < 1e-14 * scale) {
    throw StepUnderflowError("step size below resolution on axis " + std::to_string(A + 1));
  }
  for (int s = 0; s < n; ++s) {
    const double a = start + delta * s / n;
    const double b = s + 1 == n ? start + delta : start + delta * (s + 1) / n;
    std::vector<double> points{a};
    for (double c : control.crossings(A, a, b)) points.push_back(c);
    points.push_back(b);
    for (std::size_t p = 0; p + 1 < points.size(); ++p) {
      const double c = points[p];
      const double d = points[p + 1];
      t[A] = c;
      if (std::abs(d - c) <= 1e-15 * scale) {
        t[A] = d;
        continue;
      }
      std::vector<double> tm = t;
      tm[A] = 0.5 * (c + d);
      const auto u = control.at(tm);
      const std::vector<double> uc(u.begin(), u.end());
      rk4(field, A, t, x, d - c, uc);
      t[A] = d;
    }
  }
  t[A] = start + delta;
}

std::vector<double> integrate_path(const SectionField& field, const Grid& grid,
                                   const ControlField& control, std::span<const double> from_t,
                                   std::span<const double> x0, std::span<const double> target_t,
                                   std::span<const int> axis_order) {
  std::vector<double> t(from_t.begin(), from_t.end());
  std::vector<double> x(x0.begin(), x0.end());
  for (int a : axis_order) {
    const double delta = target_t[a] - t[a];
    if (delta == 0.0) continue;
    const double h = grid.axes[static_cast<std::size_t>(a)].h();
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(delta) / h - 1e-9)));
    advance(field, control, a, t, x, delta, n);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Trajectory

std::span<const double> Trajectory::state(std::size_t node) const {
  return std::span<const double>(states).subspan(node * n_states(), n_states());
}
std::span<double> Trajectory::state(std::size_t node) {
  return std::span<double>(states).subspan(node * n_states(), n_states());
}
std::span<const double> Trajectory::momentum(std::size_t node) const {
  return std::span<const double>(momenta).subspan(node * n_momenta(), n_momenta());
}
std::span<double> Trajectory::momentum(std::size_t node) {
  return std::span<double>(momenta).subspan(node * n_momenta(), n_momenta());
}

std::size_t Trajectory::state_index(std::string_view name) const {
  for (std::size_t j = 0; j < state_names.size(); ++j) {
    if (state_names[j] == name) return j;
  }
  throw ValidationError("trajectory has no state '" + std::string(name) + "'");
}

std::size_t Trajectory::momentum_index(std::string_view name) const {
  for (std::size_t j = 0; j < momentum_names.size(); ++j) {
    if (momentum_names[j] == name) return j;
  }
  throw ValidationError("trajectory has no momentum '" + std::string(name) + "'");
}

namespace {

std::vector<int> resolve_order(const std::vector<int>& order, int k) {
  if (order.empty()) {
    std::vector<int> o(static_cast<std::size_t>(k));
    std::iota(o.begin(), o.end(), 0);
    return o;
  }
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (int a = 0; a < k; ++a) {
    if (static_cast<int>(sorted.size()) != k || sorted[a] != a) {
      throw ValidationError("axis order must be a permutation of the axes");
    }
  }
  return order;
}

}  // namespace

Trajectory integrate_section(const SectionField& field, const Grid& grid,
                             const ControlField& control, std::span<const double> initial,
                             const IntegrationOptions& options) {
  grid.validate();
  const int k = grid.k();
  if (field.k() != k || control.k() != k) throw ValidationError("axis count mismatch");
  if (control.l() != field.l()) throw ValidationError("control dimension mismatch");
  const auto dim = static_cast<std::size_t>(field.dim());
  if (initial.size() != dim) throw ValidationError("initial state has wrong length");

  Trajectory traj;
  traj.grid = grid;
  traj.control = control;
  traj.time_names = field.time_names();
  traj.state_names = field.state_names();
  traj.control_names = field.control_names();
  traj.seed = options.seed;
  traj.axis_order = resolve_order(options.axis_order, k);
  const std::size_t nodes = grid.node_count();
  traj.states.assign(nodes * dim, 0.0);
  std::copy(initial.begin(), initial.end(), traj.states.begin());

  for (int s = 0; s < k; ++s) {
    const int A = traj.axis_order[s];
    const double h = grid.axes[A].h();
    for (std::size_t node = 0; node < nodes; ++node) {
      std::vector<int> idx = grid.unflat(node);
      bool start = idx[A] == 0;
      for (int j = s + 1; j < k && start; ++j) start = idx[traj.axis_order[j]] == 0;
      if (!start) continue;
      std::vector<double> x(traj.state(node).begin(), traj.state(node).end());
      for (int i = 1; i <= grid.axes[A].steps; ++i) {
        std::vector<double> t = grid.times(idx);
        advance(field, control, A, t, x, h, 1);
        idx[A] = i;
        const auto dst = traj.state(grid.flat(idx));
        std::copy(x.begin(), x.end(), dst.begin());
      }
    }
  }

  if (k >= 2 && options.defect_probes > 0) {
    std::mt19937_64 rng(options.seed);
    std::vector<int> reverse(traj.axis_order.rbegin(), traj.axis_order.rend());
    const std::vector<int> corner(static_cast<std::size_t>(k), 0);
    const std::vector<double> t0 = grid.times(corner);
    for (int probe = 0; probe < options.defect_probes; ++probe) {
      const std::size_t node = static_cast<std::size_t>(rng() % nodes);
      const std::vector<double> target = grid.times(grid.unflat(node));
      const std::vector<double> x =
          integrate_path(field, grid, control, t0, initial, target, reverse);
      const auto stored = traj.state(node);
      for (std::size_t j = 0; j < dim; ++j) {
        traj.defect = std::max(traj.defect, std::abs(x[j] - stored[j]));
      }
    }
  }
  return traj;
}

Trajectory integrate_section(const DerivedHamiltonianSystem& dhs, const Grid& grid,
                             const ControlField& control, std::span<const double> initial,
                             const IntegrationOptions& options) {
  const auto k = static_cast<std::size_t>(dhs.k());
  const auto n = static_cast<std::size_t>(dhs.n());
  std::vector<double> x0(k + n, 0.0);
  if (initial.size() == n) {
    std::copy(initial.begin(), initial.end(), x0.begin() + static_cast<std::ptrdiff_t>(k));
  } else if (initial.size() == k + n) {
    for (std::size_t B = 0; B < k; ++B) {
      if (initial[B] != 0.0) throw ValidationError("q0 components must start at 0");
    }
    std::copy(initial.begin(), initial.end(), x0.begin());
  } else {
    throw ValidationError("initial state must have n or k + n entries");
  }
  return integrate_section(SectionField::states_of(dhs), grid, control, x0, options);
}

void integrate_costate(const DerivedHamiltonianSystem& dhs, Trajectory& traj,
                       std::span<const double> terminal) {
  const int k = dhs.k();
  const auto dim = static_cast<std::size_t>(dhs.dim());
  const std::vector<std::string> momenta = dhs.all_momenta();
  if (terminal.size() != momenta.size()) throw ValidationError("terminal covector has wrong length");
  if (traj.n_states() != dim) throw ValidationError("trajectory does not match the system");
  const Grid& grid = traj.grid;
  const std::size_t nodes = grid.node_count();
  traj.momentum_names = momenta;
  traj.momenta.assign(nodes * momenta.size(), 0.0);

  for (int A = 0; A < k; ++A) {
    const SectionField field = SectionField::with_costate(dhs, A + 1);
    const std::size_t offset = static_cast<std::size_t>(A) * dim;
    const int N = grid.axes[A].steps;
    const double h = grid.axes[A].h();
    for (std::size_t node = 0; node < nodes; ++node) {
      std::vector<int> idx = grid.unflat(node);
      if (idx[A] != N) continue;
      auto pm = traj.momentum(node);
      std::copy(terminal.begin() + static_cast<std::ptrdiff_t>(offset),
                terminal.begin() + static_cast<std::ptrdiff_t>(offset + dim),
                pm.begin() + static_cast<std::ptrdiff_t>(offset));
      for (int i = N; i >= 1; --i) {
        const std::size_t cur = grid.flat(idx);
        std::vector<double> x(traj.state(cur).begin(), traj.state(cur).end());
        const auto pc = traj.momentum(cur);
        x.insert(x.end(), pc.begin() + static_cast<std::ptrdiff_t>(offset),
                 pc.begin() + static_cast<std::ptrdiff_t>(offset + dim));
        std::vector<double> t = grid.times(idx);
        advance(field, traj.control, A, t, x, -h, 1);
        idx[A] = i - 1;
        auto pp = traj.momentum(grid.flat(idx));
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(dim), x.end(),
                  pp.begin() + static_cast<std::ptrdiff_t>(offset));
      }
    }
  }
}

FunctionalValues functional_values(const Expr& F, const Trajectory& traj) {
  const Grid& grid = traj.grid;
  const int k = grid.k();
  std::vector<std::string> slots = traj.time_names;
  slots.insert(slots.end(), traj.state_names.begin(), traj.state_names.end());
  slots.insert(slots.end(), traj.control_names.begin(), traj.control_names.end());
  const CompiledExpr f(F, slots);
  auto value = [&](std::size_t node, std::span<const double> u) {
    const std::vector<double> t = grid.times(grid.unflat(node));
    std::vector<double> v = t;
    const auto x = traj.state(node);
    v.insert(v.end(), x.begin(), x.end());
    v.insert(v.end(), u.begin(), u.end());
    return f(v);
  };

  FunctionalValues out;
  const std::size_t nodes = grid.node_count();
  out.per_axis.assign(static_cast<std::size_t>(k), std::vector<double>(nodes, 0.0));
  for (int A = 0; A < k; ++A) {
    const double h = grid.axes[A].h();
    for (std::size_t node = 0; node < nodes; ++node) {
      std::vector<int> idx = grid.unflat(node);
      if (idx[A] != 0) continue;
      double acc = 0.0;
      for (int i = 1; i <= grid.axes[A].steps; ++i) {
        const std::size_t prev = grid.flat(idx);
        std::vector<double> tm = grid.times(idx);
        tm[A] += 0.5 * h;
        const auto u = traj.control.at(tm);
        idx[A] = i;
        const std::size_t cur = grid.flat(idx);
        acc += 0.5 * h * (value(prev, u) + value(cur, u));
        out.per_axis[A][cur] = acc;
      }
    }
  }

  // Product trapezoid over k-dimensional cells.
  double volume = 1.0;
  for (const GridAxis& a : grid.axes) volume *= a.h();
  const std::size_t corners = std::size_t{1} << k;
  for (std::size_t node = 0; node < nodes; ++node) {
    const std::vector<int> idx = grid.unflat(node);
    bool lower = true;
    for (int a = 0; a < k && lower; ++a) lower = idx[a] < grid.axes[a].steps;
    if (!lower) continue;
    std::vector<double> tc = grid.times(idx);
    for (int a = 0; a < k; ++a) tc[a] += 0.5 * grid.axes[a].h();
    const auto u = traj.control.at(tc);
    double sum = 0.0;
    for (std::size_t c = 0; c < corners; ++c) {
      std::vector<int> corner = idx;
      for (int a = 0; a < k; ++a) corner[a] += static_cast<int>((c >> a) & 1u);
      sum += value(grid.flat(corner), u);
    }
    out.total += volume * sum / static_cast<double>(corners);
  }

  for (int A = 0; A < k; ++A) {
    const std::string name = names::q0(A + 1);
    const auto it = std::find(traj.state_names.begin(), traj.state_names.end(), name);
    if (it == traj.state_names.end()) continue;
    const auto j = static_cast<std::size_t>(it - traj.state_names.begin());
    double dev = 0.0;
    for (std::size_t node = 0; node < nodes; ++node) {
      dev = std::max(dev, std::abs(traj.state(node)[j] - out.per_axis[A][node]));
    }
    out.q0_deviation.push_back(dev);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ValidationError("malformed number '" + s + "' in trajectory");
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError("malformed number '" + s + "' in trajectory");
  }
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const Grid& grid = traj.grid;
  const int k = grid.k();
  std::vector<std::string> header;
  for (int a = 1; a <= k; ++a) header.push_back("i" + std::to_string(a));
  for (const auto& v : {traj.time_names, traj.state_names, traj.momentum_names, traj.control_names}) {
    header.insert(header.end(), v.begin(), v.end());
  }
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    const std::vector<int> idx = grid.unflat(node);
    const std::vector<double> t = grid.times(idx);
    for (int a = 0; a < k; ++a) out << (a ? "," : "") << idx[a];
    for (double v : t) out << ',' << format_double(v);
    for (double v : traj.state(node)) out << ',' << format_double(v);
    if (traj.has_momenta()) {
      for (double v : traj.momentum(node)) out << ',' << format_double(v);
    }
    for (double v : traj.control.at(t)) out << ',' << format_double(v);
    out << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in, int k, int n_states, int l) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty trajectory file");
  const std::vector<std::string> header = split_csv(line);
  const auto base = static_cast<std::size_t>(2 * k + n_states + l);
  const auto with_p = base + static_cast<std::size_t>(k * n_states);
  if (header.size() != base && header.size() != with_p) {
    throw ValidationError("trajectory header has " + std::to_string(header.size()) +
                          " columns, expected " + std::to_string(base) + " or " +
                          std::to_string(with_p));
  }
  const bool momenta = header.size() == with_p;
  Trajectory traj;
  std::size_t c = static_cast<std::size_t>(k);
  auto take = [&](std::size_t count) {
    std::vector<std::string> v(header.begin() + static_cast<std::ptrdiff_t>(c),
                               header.begin() + static_cast<std::ptrdiff_t>(c + count));
    c += count;
    return v;
  };
  traj.time_names = take(static_cast<std::size_t>(k));
  traj.state_names = take(static_cast<std::size_t>(n_states));
  if (momenta) traj.momentum_names = take(static_cast<std::size_t>(k * n_states));
  traj.control_names = take(static_cast<std::size_t>(l));

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<int>> indices;
  std::vector<std::map<int, double>> axis_times(static_cast<std::size_t>(k));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) throw ValidationError("ragged trajectory row");
    std::vector<int> idx;
    for (int a = 0; a < k; ++a) {
      const double v = parse_double(cells[a]);
      if (v < 0 || v != std::floor(v)) throw ValidationError("bad node index in trajectory");
      idx.push_back(static_cast<int>(v));
    }
    std::vector<double> row;
    for (std::size_t j = static_cast<std::size_t>(k); j < cells.size(); ++j) {
      row.push_back(parse_double(cells[j]));
    }
    for (int a = 0; a < k; ++a) axis_times[a][idx[a]] = row[a];
    indices.push_back(std::move(idx));
    rows.push_back(std::move(row));
  }
  for (int a = 0; a < k; ++a) {
    const auto& m = axis_times[a];
    if (m.size() < 2) throw ValidationError("trajectory axis needs at least two nodes");
    const int steps = m.rbegin()->first;
    if (m.begin()->first != 0 || static_cast<int>(m.size()) != steps + 1) {
      throw ValidationError("trajectory node indices are not contiguous");
    }
    traj.grid.axes.push_back({m.begin()->second, m.rbegin()->second, steps});
  }
  traj.grid.validate();
  for (int a = 0; a < k; ++a) {
    for (const auto& [i, t] : axis_times[a]) {
      const double expect = traj.grid.t(a, i);
      if (std::abs(expect - t) > 1e-9 * std::max(1.0, std::abs(t))) {
        throw ValidationError("trajectory grid is not uniform");
      }
    }
  }
  const std::size_t nodes = traj.grid.node_count();
  if (rows.size() != nodes) throw ValidationError("trajectory does not cover the grid");
  traj.states.assign(nodes * static_cast<std::size_t>(n_states), 0.0);
  if (momenta) traj.momenta.assign(nodes * static_cast<std::size_t>(k * n_states), 0.0);
  std::vector<std::vector<double>> node_controls(nodes);
  std::vector<bool> seen(nodes, false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t node = traj.grid.flat(indices[r]);
    if (seen[node]) throw ValidationError("duplicate trajectory node");
    seen[node] = true;
    std::size_t j = static_cast<std::size_t>(k);
    for (int s = 0; s < n_states; ++s) traj.state(node)[s] = rows[r][j++];
    if (momenta) {
      for (int s = 0; s < k * n_states; ++s) traj.momentum(node)[s] = rows[r][j++];
    }
    node_controls[node].assign(rows[r].begin() + static_cast<std::ptrdiff_t>(j), rows[r].end());
  }
  std::vector<std::vector<double>> cells;
  for (std::size_t node = 0; node < nodes; ++node) {
    const std::vector<int> idx = traj.grid.unflat(node);
    bool lower = true;
    for (int a = 0; a < k && lower; ++a) lower = idx[a] < traj.grid.axes[a].steps;
    if (lower) cells.push_back(node_controls[node]);
  }
  traj.control = ControlField::on_grid(traj.grid, std::move(cells), l);
  traj.method = "csv";
  return traj;
}

}  // namespace ksoc
