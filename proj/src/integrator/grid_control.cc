#include <algorithm>
#include <cmath>

#include "ksoc/errors.h"
#include "ksoc/section_integrator.h"

namespace ksoc {

std::vector<int> Grid::shape() const {
  std::vector<int> s;
  for (const GridAxis& a : axes) s.push_back(a.steps + 1);
  return s;
}

std::size_t Grid::node_count() const {
  std::size_t n = 1;
  for (const GridAxis& a : axes) n *= static_cast<std::size_t>(a.steps + 1);
  return n;
}

std::size_t Grid::flat(std::span<const int> index) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    f = f * static_cast<std::size_t>(axes[a].steps + 1) + static_cast<std::size_t>(index[a]);
  }
  return f;
}

std::vector<int> Grid::unflat(std::size_t node) const {
  std::vector<int> index(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const auto n = static_cast<std::size_t>(axes[a].steps + 1);
    index[a] = static_cast<int>(node % n);
    node /= n;
  }
  return index;
}

double Grid::t(int axis, int index) const {
  const GridAxis& a = axes[static_cast<std::size_t>(axis)];
  if (index == a.steps) return a.tf;
  return a.t0 + index * a.h();
}

std::vector<double> Grid::times(std::span<const int> index) const {
  std::vector<double> t(axes.size());
  for (std::size_t a = 0; a < axes.size(); ++a) t[a] = this->t(static_cast<int>(a), index[a]);
  return t;
}

void Grid::validate() const {
  if (axes.empty()) throw ValidationError("grid needs at least one axis");
  for (const GridAxis& a : axes) {
    if (a.steps < 1) throw ValidationError("grid axis needs at least one step");
    if (!(a.tf > a.t0) || !std::isfinite(a.t0) || !std::isfinite(a.tf)) {
      throw ValidationError("grid axis needs t0 < tf");
    }
    const double scale = std::max({1.0, std::abs(a.t0), std::abs(a.tf)});
    if (a.h() < 1e-13 * scale) throw StepUnderflowError("grid step below resolution");
  }
}

ControlField::ControlField(std::vector<std::vector<double>> breakpoints,
                           std::vector<std::vector<double>> values, int l)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)), l_(l) {
  std::size_t cells = 1;
  for (const auto& bp : breakpoints_) {
    for (std::size_t i = 1; i < bp.size(); ++i) {
      if (!(bp[i - 1] < bp[i])) throw ValidationError("control breakpoints must increase");
    }
    cells *= bp.size() + 1;
  }
  if (values_.size() != cells) throw ValidationError("control field has wrong cell count");
  for (const auto& v : values_) {
    if (static_cast<int>(v.size()) != l_) throw ValidationError("control value has wrong length");
  }
}

ControlField ControlField::constant(int k, std::vector<double> u) {
  const int l = static_cast<int>(u.size());
  return ControlField(std::vector<std::vector<double>>(static_cast<std::size_t>(k)), {std::move(u)}, l);
}

ControlField ControlField::on_grid(const Grid& grid, std::vector<std::vector<double>> values, int l) {
  std::vector<std::vector<double>> bp(static_cast<std::size_t>(grid.k()));
  for (int a = 0; a < grid.k(); ++a) {
    for (int i = 1; i < grid.axes[a].steps; ++i) bp[a].push_back(grid.t(a, i));
  }
  return ControlField(std::move(bp), std::move(values), l);
}

std::vector<int> ControlField::cell_of(std::span<const double> t) const {
  std::vector<int> cell(breakpoints_.size());
  for (std::size_t a = 0; a < breakpoints_.size(); ++a) {
    const auto& bp = breakpoints_[a];
    cell[a] = static_cast<int>(std::upper_bound(bp.begin(), bp.end(), t[a]) - bp.begin());
  }
  return cell;
}

std::vector<int> ControlField::cell_of_left(std::span<const double> t, int axis) const {
  std::vector<int> cell = cell_of(t);
  const auto& bp = breakpoints_[static_cast<std::size_t>(axis)];
  cell[axis] = static_cast<int>(std::lower_bound(bp.begin(), bp.end(), t[axis]) - bp.begin());
  return cell;
}

std::size_t ControlField::flat_cell(std::span<const int> cell) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < breakpoints_.size(); ++a) {
    f = f * (breakpoints_[a].size() + 1) + static_cast<std::size_t>(cell[a]);
  }
  return f;
}

std::span<const double> ControlField::cell_value(std::span<const int> cell) const {
  return values_[flat_cell(cell)];
}

std::span<const double> ControlField::at(std::span<const double> t) const {
  if (values_.size() == 1) return values_[0];
  const std::vector<int> c = cell_of(t);
  return cell_value(c);
}

std::span<const double> ControlField::at_left(std::span<const double> t, int axis) const {
  if (values_.size() == 1) return values_[0];
  const std::vector<int> c = cell_of_left(t, axis);
  return cell_value(c);
}

std::vector<double> ControlField::crossings(int axis, double a, double b) const {
  std::vector<double> out;
  const auto& bp = breakpoints_[static_cast<std::size_t>(axis)];
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  for (double x : bp) {
    if (x > lo && x < hi) out.push_back(x);
  }
  if (a > b) std::reverse(out.begin(), out.end());
  return out;
}

void ControlField::validate(const std::vector<Interval>& box) const {
  if (static_cast<int>(box.size()) != l_) throw ValidationError("control dimension mismatch");
  for (const auto& v : values_) {
    for (int a = 0; a < l_; ++a) {
      if (!(v[a] >= box[a].lo && v[a] <= box[a].hi)) {
        throw ValidationError("control value outside the control box");
      }
    }
  }
}

ControlField ControlField::with_slab(int axis, double lo, double hi,
                                     std::span<const double> u) const {
  if (static_cast<int>(u.size()) != l_) throw ValidationError("control value has wrong length");
  if (!(lo < hi)) return *this;
  return remap(axis, lo, hi, u, true);
}

ControlField ControlField::refined(int axis, double lo, double hi) const {
  if (!(lo < hi)) return *this;
  return remap(axis, lo, hi, {}, false);
}

ControlField ControlField::remap(int axis, double lo, double hi, std::span<const double> u,
                                 bool replace) const {
  const auto ax = static_cast<std::size_t>(axis);
  std::vector<std::vector<double>> bp = breakpoints_;
  auto& cuts = bp[ax];
  for (double x : {lo, hi}) {
    if (!std::binary_search(cuts.begin(), cuts.end(), x)) {
      cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), x), x);
    }
  }
  // Representative point of each new cell along the modified axis.
  std::vector<double> mid(cuts.size() + 1);
  for (std::size_t c = 0; c <= cuts.size(); ++c) {
    if (cuts.empty()) {
      mid[c] = lo;
    } else if (c == 0) {
      mid[c] = cuts.front() - 1.0;
    } else if (c == cuts.size()) {
      mid[c] = cuts.back() + 1.0;
    } else {
      mid[c] = 0.5 * (cuts[c - 1] + cuts[c]);
    }
  }
  std::size_t cells = 1;
  for (const auto& b : bp) cells *= b.size() + 1;
  std::vector<std::vector<double>> values(cells);
  std::vector<int> cell(bp.size(), 0);
  for (std::size_t f = 0; f < cells; ++f) {
    std::size_t rem = f;
    for (std::size_t a = bp.size(); a-- > 0;) {
      cell[a] = static_cast<int>(rem % (bp[a].size() + 1));
      rem /= bp[a].size() + 1;
    }
    const double m = mid[static_cast<std::size_t>(cell[ax])];
    if (replace && m >= lo && m < hi) {
      values[f].assign(u.begin(), u.end());
      continue;
    }
    std::vector<int> old = cell;
    const auto& ob = breakpoints_[ax];
    old[ax] = static_cast<int>(std::upper_bound(ob.begin(), ob.end(), m) - ob.begin());
    const auto v = cell_value(old);
    values[f].assign(v.begin(), v.end());
  }
  return ControlField(std::move(bp), std::move(values), l_);
}

}  // namespace ksoc
