#include "ksoc/expr.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>

#include "ksoc/errors.h"
#include "poly.h"

namespace ksoc {

struct Expr::Node {
  ExprKind kind = ExprKind::kConstant;
  Rational value;
  std::string name;
  std::vector<Expr> children;
  int exponent = 0;
  bool canonical = false;
  std::size_t size = 1;
};

class ExprFactory {
 public:
  static Expr make(Expr::Node node) {
    std::size_t size = 1;
    for (const Expr& c : node.children) size += c.size();
    node.size = size;
    return Expr(std::make_shared<const Expr::Node>(std::move(node)));
  }
};

namespace {

const std::shared_ptr<const Expr::Node>& zero_node() {
  static const std::shared_ptr<const Expr::Node> node = [] {
    Expr::Node n;
    n.kind = ExprKind::kConstant;
    n.value = Rational(0);
    n.canonical = true;
    return std::make_shared<const Expr::Node>(std::move(n));
  }();
  return node;
}

int kind_rank(ExprKind k) {
  switch (k) {
    case ExprKind::kConstant: return 0;
    case ExprKind::kSymbol: return 1;
    case ExprKind::kSin: return 2;
    case ExprKind::kCos: return 3;
    case ExprKind::kPower: return 4;
    case ExprKind::kProduct: return 5;
    case ExprKind::kSum: return 6;
  }
  return 7;
}

// Natural order: digit runs compare numerically so that q2 < q10.
int natural_compare(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
      std::string_view ra = a.substr(i, i2 - i);
      std::string_view rb = b.substr(j, j2 - j);
      while (ra.size() > 1 && ra.front() == '0') ra.remove_prefix(1);
      while (rb.size() > 1 && rb.front() == '0') rb.remove_prefix(1);
      if (ra.size() != rb.size()) return ra.size() < rb.size() ? -1 : 1;
      if (int c = ra.compare(rb); c != 0) return c < 0 ? -1 : 1;
      // Equal numeric value: fall back to raw length (leading zeros).
      if (i2 - i != j2 - j) return (i2 - i) < (j2 - j) ? -1 : 1;
      i = i2;
      j = j2;
      continue;
    }
    if (a[i] != b[j]) return a[i] < b[j] ? -1 : 1;
    ++i;
    ++j;
  }
  if (i == a.size() && j == b.size()) return 0;
  return i == a.size() ? -1 : 1;
}

}  // namespace

Expr::Expr() : node_(zero_node()) {}

Expr::Expr(std::int64_t value) : Expr(Rational(value)) {}

Expr::Expr(const Rational& value) {
  if (value.is_zero()) {
    node_ = zero_node();
    return;
  }
  Node n;
  n.kind = ExprKind::kConstant;
  n.value = value;
  n.canonical = true;
  node_ = std::make_shared<const Node>(std::move(n));
}

Expr Expr::symbol(std::string name) {
  if (name.empty()) throw std::invalid_argument("empty symbol name");
  Node n;
  n.kind = ExprKind::kSymbol;
  n.name = std::move(name);
  n.canonical = true;
  return ExprFactory::make(std::move(n));
}

Expr Expr::raw_sum(std::vector<Expr> terms) {
  Node n;
  n.kind = ExprKind::kSum;
  n.children = std::move(terms);
  return ExprFactory::make(std::move(n));
}

Expr Expr::raw_product(std::vector<Expr> factors) {
  Node n;
  n.kind = ExprKind::kProduct;
  n.children = std::move(factors);
  return ExprFactory::make(std::move(n));
}

Expr Expr::raw_power(Expr base, int exponent) {
  Node n;
  n.kind = ExprKind::kPower;
  n.children = {std::move(base)};
  n.exponent = exponent;
  return ExprFactory::make(std::move(n));
}

Expr Expr::raw_sin(Expr arg) {
  Node n;
  n.kind = ExprKind::kSin;
  n.children = {std::move(arg)};
  return ExprFactory::make(std::move(n));
}

Expr Expr::raw_cos(Expr arg) {
  Node n;
  n.kind = ExprKind::kCos;
  n.children = {std::move(arg)};
  return ExprFactory::make(std::move(n));
}

ExprKind Expr::kind() const { return node_->kind; }
bool Expr::is_canonical() const { return node_->canonical; }
const Rational& Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
std::span<const Expr> Expr::children() const { return node_->children; }
int Expr::exponent() const { return node_->exponent; }
std::size_t Expr::size() const { return node_->size; }

bool operator==(const Expr& a, const Expr& b) { return compare(a, b) == 0; }

int compare(const Expr& a, const Expr& b) {
  if (a.node() == b.node()) return 0;
  const int ra = kind_rank(a.kind());
  const int rb = kind_rank(b.kind());
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a.kind()) {
    case ExprKind::kConstant:
      if (a.value() == b.value()) return 0;
      return a.value() < b.value() ? -1 : 1;
    case ExprKind::kSymbol:
      return natural_compare(a.name(), b.name());
    case ExprKind::kSin:
    case ExprKind::kCos:
      return compare(a.children()[0], b.children()[0]);
    case ExprKind::kPower:
      if (int c = compare(a.children()[0], b.children()[0]); c != 0) return c;
      if (a.exponent() == b.exponent()) return 0;
      return a.exponent() < b.exponent() ? -1 : 1;
    case ExprKind::kProduct:
    case ExprKind::kSum: {
      auto ca = a.children();
      auto cb = b.children();
      const std::size_t n = std::min(ca.size(), cb.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (int c = compare(ca[i], cb[i]); c != 0) return c;
      }
      if (ca.size() == cb.size()) return 0;
      return ca.size() < cb.size() ? -1 : 1;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Polynomial normal form.

namespace detail {

int MonoLess::degree(const Monomial& m) {
  int d = 0;
  for (const auto& [atom, e] : m) d += e;
  return d;
}

bool MonoLess::operator()(const Monomial& a, const Monomial& b) const {
  const int da = degree(a);
  const int db = degree(b);
  if (da != db) return da > db;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (int c = compare(a[i].first, b[i].first); c != 0) return c < 0;
    if (a[i].second != b[i].second) return a[i].second > b[i].second;
  }
  return a.size() < b.size();
}

namespace {

Monomial mono_mul(const Monomial& a, const Monomial& b) {
  Monomial out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size()) {
      out.push_back(a[i++]);
    } else if (i == a.size()) {
      out.push_back(b[j++]);
    } else {
      const int c = compare(a[i].first, b[j].first);
      if (c < 0) {
        out.push_back(a[i++]);
      } else if (c > 0) {
        out.push_back(b[j++]);
      } else {
        const int e = a[i].second + b[j].second;
        if (e != 0) out.emplace_back(a[i].first, e);
        ++i;
        ++j;
      }
    }
  }
  return out;
}

void add_term(Poly& p, const Monomial& m, const Rational& c) {
  if (c.is_zero()) return;
  auto [it, inserted] = p.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second.is_zero()) p.erase(it);
  }
}

// Monomials may carry cos(a)^e with e >= 2 or positive powers of sum atoms
// after multiplication; both are rewritten here.
bool needs_rewrite(const Monomial& m) {
  for (const auto& [atom, e] : m) {
    if (e >= 2 && atom.kind() == ExprKind::kCos) return true;
    if (e > 0 && atom.kind() == ExprKind::kSum) return true;
  }
  return false;
}

void add_normalized(Poly& out, const Monomial& m, const Rational& c);

Poly normalized(const Monomial& m, const Rational& c) {
  Poly p;
  add_normalized(p, m, c);
  return p;
}

void add_normalized(Poly& out, const Monomial& m, const Rational& c) {
  if (c.is_zero()) return;
  if (!needs_rewrite(m)) {
    add_term(out, m, c);
    return;
  }
  for (std::size_t k = 0; k < m.size(); ++k) {
    const auto& [atom, e] = m[k];
    if (e >= 2 && atom.kind() == ExprKind::kCos) {
      // cos^e = cos^(e-2) * (1 - sin^2)
      Monomial rest = m;
      if (e == 2) {
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(k));
      } else {
        rest[k].second = e - 2;
      }
      add_normalized(out, rest, c);
      const Expr s = sin(atom.children()[0]);
      Poly sin2 = poly_pow(to_poly(s), 2);
      Poly prod = poly_mul(normalized(rest, -c), sin2);
      for (const auto& [mm, cc] : prod) add_term(out, mm, cc);
      return;
    }
    if (e > 0 && atom.kind() == ExprKind::kSum) {
      Monomial rest = m;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(k));
      Poly expanded = poly_pow(to_poly_of_sum(atom), e);
      Poly prod = poly_mul(normalized(rest, c), expanded);
      for (const auto& [mm, cc] : prod) add_term(out, mm, cc);
      return;
    }
  }
}

Rational leading_coefficient(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::kConstant:
      return e.value();
    case ExprKind::kSum:
      return leading_coefficient(e.children()[0]);
    case ExprKind::kProduct:
      return e.children()[0].is_constant() ? e.children()[0].value()
                                           : Rational(1);
    default:
      return Rational(1);
  }
}

}  // namespace

Poly poly_add(const Poly& a, const Poly& b) {
  Poly out = a;
  for (const auto& [m, c] : b) add_term(out, m, c);
  return out;
}

Poly poly_scale(const Poly& a, const Rational& s) {
  if (s.is_zero()) return {};
  Poly out;
  for (const auto& [m, c] : a) out.emplace(m, c * s);
  return out;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ma, ca] : a) {
    for (const auto& [mb, cb] : b) {
      add_normalized(out, mono_mul(ma, mb), ca * cb);
    }
  }
  return out;
}

Poly poly_pow(const Poly& p, int e) {
  if (e == 0) return Poly{{Monomial{}, Rational(1)}};
  if (p.empty()) {
    if (e < 0) throw std::domain_error("zero raised to a negative power");
    return {};
  }
  if (e > 0) {
    Poly result{{Monomial{}, Rational(1)}};
    Poly base = p;
    unsigned n = static_cast<unsigned>(e);
    while (n > 0) {
      if (n & 1u) result = poly_mul(result, base);
      n >>= 1u;
      if (n > 0) base = poly_mul(base, base);
    }
    return result;
  }
  if (p.size() == 1) {
    const auto& [m, c] = *p.begin();
    Monomial inv;
    inv.reserve(m.size());
    for (const auto& [atom, k] : m) inv.emplace_back(atom, k * e);
    return normalized(inv, c.pow(e));
  }
  // Reciprocal of a multi-term polynomial: factor out the leading
  // coefficient and keep the monic sum as an atom.
  const Rational lc = p.begin()->second;
  const Expr monic = from_poly(poly_scale(p, Rational(1) / lc));
  return normalized(Monomial{{monic, e}}, lc.pow(e));
}

Poly to_poly(const Expr& e) {
  if (!e.is_canonical()) return to_poly(canonicalize(e));
  switch (e.kind()) {
    case ExprKind::kConstant:
      if (e.value().is_zero()) return {};
      return Poly{{Monomial{}, e.value()}};
    case ExprKind::kSymbol:
    case ExprKind::kSin:
    case ExprKind::kCos:
      return Poly{{Monomial{{e, 1}}, Rational(1)}};
    case ExprKind::kPower:
      return Poly{{Monomial{{e.children()[0], e.exponent()}}, Rational(1)}};
    case ExprKind::kProduct: {
      Rational c(1);
      Monomial m;
      for (const Expr& f : e.children()) {
        if (f.is_constant()) {
          c *= f.value();
        } else if (f.kind() == ExprKind::kPower) {
          m = mono_mul(m, Monomial{{f.children()[0], f.exponent()}});
        } else {
          m = mono_mul(m, Monomial{{f, 1}});
        }
      }
      return Poly{{m, c}};
    }
    case ExprKind::kSum: {
      Poly out;
      for (const Expr& t : e.children()) {
        for (const auto& [m, c] : to_poly(t)) add_term(out, m, c);
      }
      return out;
    }
  }
  return {};
}

Poly to_poly_of_sum(const Expr& sum_atom) {
  Poly out;
  for (const Expr& t : sum_atom.children()) {
    for (const auto& [m, c] : to_poly(t)) add_term(out, m, c);
  }
  return out;
}

namespace {

Expr make_canonical(Expr::Node node) {
  node.canonical = true;
  return ExprFactory::make(std::move(node));
}

Expr atom_power(const Expr& atom, int e) {
  if (e == 1) return atom;
  Expr::Node n;
  n.kind = ExprKind::kPower;
  n.children = {atom};
  n.exponent = e;
  return make_canonical(std::move(n));
}

Expr term_expr(const Monomial& m, const Rational& c) {
  if (m.empty()) return Expr(c);
  if (m.size() == 1 && c.is_one()) return atom_power(m[0].first, m[0].second);
  Expr::Node n;
  n.kind = ExprKind::kProduct;
  if (!c.is_one()) n.children.push_back(Expr(c));
  for (const auto& [atom, e] : m) n.children.push_back(atom_power(atom, e));
  return make_canonical(std::move(n));
}

}  // namespace

namespace {

std::optional<Monomial> mono_div(const Monomial& num, const Monomial& den) {
  Monomial out = num;
  for (const auto& [atom, e] : den) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& t) { return compare(t.first, atom) == 0; });
    if (it == out.end() || it->second < e) return std::nullopt;
    it->second -= e;
    if (it->second == 0) out.erase(it);
  }
  return out;
}

// Exact division by a polynomial with nonnegative exponents, or nullopt.
std::optional<Poly> try_divide(Poly q, const Poly& d) {
  const auto& [lead_m, lead_c] = *d.begin();
  Poly quotient;
  const std::size_t cap = 16 + 8 * q.size();
  for (std::size_t iter = 0; !q.empty(); ++iter) {
    if (iter > cap) return std::nullopt;
    const auto [qm, qc] = *q.begin();
    auto m = mono_div(qm, lead_m);
    if (!m) return std::nullopt;
    const Poly step{{*m, qc / lead_c}};
    quotient = poly_add(quotient, step);
    q = poly_add(q, poly_scale(poly_mul(step, d), Rational(-1)));
  }
  return quotient;
}

// Cancels sum atoms against their reciprocals where the numerator is an
// exact multiple, e.g. (x + y)*(x + y)^-1 -> 1.
Poly cancel_reciprocals(Poly p) {
  for (int round = 0; round < 32; ++round) {
    std::vector<std::pair<Expr, int>> candidates;
    for (const auto& [m, c] : p) {
      for (const auto& [atom, e] : m) {
        if (atom.kind() != ExprKind::kSum || e >= 0) continue;
        const bool seen = std::any_of(candidates.begin(), candidates.end(), [&](const auto& x) {
          return x.second == e && compare(x.first, atom) == 0;
        });
        if (!seen) candidates.emplace_back(atom, e);
      }
    }
    bool changed = false;
    for (const auto& [atom, e] : candidates) {
      const Poly d = to_poly_of_sum(atom);
      const bool polynomial = std::all_of(d.begin(), d.end(), [](const auto& t) {
        return std::all_of(t.first.begin(), t.first.end(),
                           [](const auto& f) { return f.second > 0; });
      });
      if (!polynomial) continue;
      Poly q;
      Poly others;
      for (const auto& [m, c] : p) {
        auto it = std::find_if(m.begin(), m.end(), [&](const auto& f) {
          return f.second == e && compare(f.first, atom) == 0;
        });
        if (it == m.end()) {
          others.emplace(m, c);
        } else {
          Monomial rest = m;
          rest.erase(rest.begin() + (it - m.begin()));
          q.emplace(rest, c);
        }
      }
      auto quotient = try_divide(q, d);
      if (!quotient) continue;
      const int raised = e + 1;
      Poly scaled = raised == 0 ? *quotient
                                : poly_mul(*quotient, Poly{{Monomial{{atom, raised}}, Rational(1)}});
      p = poly_add(others, scaled);
      changed = true;
      break;
    }
    if (!changed) break;
  }
  return p;
}

bool has_reciprocal_sum(const Poly& p) {
  for (const auto& [m, c] : p) {
    for (const auto& [atom, e] : m) {
      if (e < 0 && atom.kind() == ExprKind::kSum) return true;
    }
  }
  return false;
}

}  // namespace

Expr from_poly(const Poly& input) {
  if (input.empty()) return Expr();
  const Poly p = has_reciprocal_sum(input) ? cancel_reciprocals(input) : input;
  if (p.empty()) return Expr();
  if (p.size() == 1) return term_expr(p.begin()->first, p.begin()->second);
  Expr::Node n;
  n.kind = ExprKind::kSum;
  n.children.reserve(p.size());
  for (const auto& [m, c] : p) n.children.push_back(term_expr(m, c));
  return make_canonical(std::move(n));
}

Expr make_trig(ExprKind kind, const Expr& canonical_arg) {
  if (canonical_arg.is_zero_literal()) {
    return kind == ExprKind::kSin ? Expr() : Expr(1);
  }
  const bool negate = leading_coefficient(canonical_arg).sign() < 0;
  Expr arg = negate ? -canonical_arg : canonical_arg;
  Expr::Node n;
  n.kind = kind;
  n.children = {std::move(arg)};
  Expr atom = make_canonical(std::move(n));
  if (negate && kind == ExprKind::kSin) return -atom;
  return atom;
}

}  // namespace detail

using detail::from_poly;
using detail::Monomial;
using detail::Poly;
using detail::poly_add;
using detail::poly_mul;
using detail::poly_pow;
using detail::poly_scale;
using detail::to_poly;

Expr canonicalize(const Expr& e) {
  if (e.is_canonical()) return e;
  switch (e.kind()) {
    case ExprKind::kConstant:
      return Expr(e.value());
    case ExprKind::kSymbol:
      return Expr::symbol(e.name());
    case ExprKind::kSin:
    case ExprKind::kCos:
      return detail::make_trig(e.kind(), canonicalize(e.children()[0]));
    case ExprKind::kPower:
      return from_poly(poly_pow(to_poly(canonicalize(e.children()[0])),
                                e.exponent()));
    case ExprKind::kProduct: {
      Poly acc{{Monomial{}, Rational(1)}};
      for (const Expr& f : e.children()) {
        acc = poly_mul(acc, to_poly(canonicalize(f)));
        if (acc.empty()) break;
      }
      return from_poly(acc);
    }
    case ExprKind::kSum: {
      Poly acc;
      for (const Expr& t : e.children()) {
        acc = poly_add(acc, to_poly(canonicalize(t)));
      }
      return from_poly(acc);
    }
  }
  return e;
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_zero_literal()) return canonicalize(b);
  if (b.is_zero_literal()) return canonicalize(a);
  return from_poly(poly_add(to_poly(a), to_poly(b)));
}

Expr operator-(const Expr& a) {
  return from_poly(poly_scale(to_poly(a), Rational(-1)));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_zero_literal()) return canonicalize(a);
  return from_poly(poly_add(to_poly(a), poly_scale(to_poly(b), Rational(-1))));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_zero_literal() || b.is_zero_literal()) return Expr();
  if (a.is_constant(Rational(1))) return canonicalize(b);
  if (b.is_constant(Rational(1))) return canonicalize(a);
  return from_poly(poly_mul(to_poly(a), to_poly(b)));
}

Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }

Expr pow(const Expr& base, int exponent) {
  return from_poly(poly_pow(to_poly(base), exponent));
}

Expr reciprocal(const Expr& e) { return pow(e, -1); }

Expr sin(const Expr& arg) {
  return detail::make_trig(ExprKind::kSin, canonicalize(arg));
}

Expr cos(const Expr& arg) {
  return detail::make_trig(ExprKind::kCos, canonicalize(arg));
}

Expr sum(std::span<const Expr> terms) {
  Poly acc;
  for (const Expr& t : terms) acc = poly_add(acc, to_poly(t));
  return from_poly(acc);
}

// ---------------------------------------------------------------------------
// Symbols, differentiation, substitution.

void collect_free_symbols(const Expr& e, std::set<std::string>& out) {
  if (e.kind() == ExprKind::kSymbol) {
    out.insert(e.name());
    return;
  }
  for (const Expr& c : e.children()) collect_free_symbols(c, out);
}

std::set<std::string> free_symbols(const Expr& e) {
  std::set<std::string> out;
  collect_free_symbols(e, out);
  return out;
}

bool depends_on(const Expr& e, std::string_view x) {
  if (e.kind() == ExprKind::kSymbol) return e.name() == x;
  for (const Expr& c : e.children()) {
    if (depends_on(c, x)) return true;
  }
  return false;
}

namespace {

Poly d_poly(const Poly& p, std::string_view x);

Poly d_atom(const Expr& atom, std::string_view x) {
  switch (atom.kind()) {
    case ExprKind::kSymbol:
      if (atom.name() == x) return Poly{{Monomial{}, Rational(1)}};
      return {};
    case ExprKind::kSin: {
      const Expr& arg = atom.children()[0];
      Poly da = d_poly(to_poly(arg), x);
      if (da.empty()) return {};
      return poly_mul(to_poly(cos(arg)), da);
    }
    case ExprKind::kCos: {
      const Expr& arg = atom.children()[0];
      Poly da = d_poly(to_poly(arg), x);
      if (da.empty()) return {};
      return poly_scale(poly_mul(to_poly(sin(arg)), da), Rational(-1));
    }
    case ExprKind::kSum:
      return d_poly(detail::to_poly_of_sum(atom), x);
    default:
      throw std::logic_error("unexpected atom kind in differentiation");
  }
}

Poly d_poly(const Poly& p, std::string_view x) {
  Poly out;
  for (const auto& [m, c] : p) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      const auto& [atom, e] = m[j];
      if (!depends_on(atom, x)) continue;
      Poly da = d_atom(atom, x);
      if (da.empty()) continue;
      Monomial rest = m;
      if (e == 1) {
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
      } else {
        rest[j].second = e - 1;
      }
      Poly term = poly_mul(Poly{{Monomial{}, c * Rational(e)}},
                           Poly{{rest, Rational(1)}});
      out = poly_add(out, poly_mul(term, da));
    }
  }
  return out;
}

Poly subst_poly(const Poly& p, const Substitution& s);

bool touches(const Expr& e, const Substitution& s) {
  if (e.kind() == ExprKind::kSymbol) return s.find(e.name()) != s.end();
  for (const Expr& c : e.children()) {
    if (touches(c, s)) return true;
  }
  return false;
}

Poly subst_atom(const Expr& atom, const Substitution& s) {
  switch (atom.kind()) {
    case ExprKind::kSymbol: {
      auto it = s.find(atom.name());
      if (it == s.end()) return Poly{{Monomial{{atom, 1}}, Rational(1)}};
      return to_poly(it->second);
    }
    case ExprKind::kSin:
    case ExprKind::kCos: {
      Expr arg = from_poly(subst_poly(to_poly(atom.children()[0]), s));
      return to_poly(detail::make_trig(atom.kind(), arg));
    }
    case ExprKind::kSum:
      return subst_poly(detail::to_poly_of_sum(atom), s);
    default:
      throw std::logic_error("unexpected atom kind in substitution");
  }
}

Poly subst_poly(const Poly& p, const Substitution& s) {
  Poly out;
  for (const auto& [m, c] : p) {
    Poly term{{Monomial{}, c}};
    Monomial untouched;
    for (const auto& [atom, e] : m) {
      if (!touches(atom, s)) {
        untouched.emplace_back(atom, e);
        continue;
      }
      term = poly_mul(term, poly_pow(subst_atom(atom, s), e));
      if (term.empty()) break;
    }
    if (term.empty()) continue;
    if (!untouched.empty()) term = poly_mul(term, Poly{{untouched, Rational(1)}});
    out = poly_add(out, term);
  }
  return out;
}

}  // namespace

Expr differentiate(const Expr& e, std::string_view x) {
  if (!depends_on(e, x)) return Expr();
  return from_poly(d_poly(to_poly(e), x));
}

Expr substitute(const Expr& e, const Substitution& s) {
  if (s.empty() || !touches(e, s)) return canonicalize(e);
  return from_poly(subst_poly(to_poly(e), s));
}

// ---------------------------------------------------------------------------
// Numeric evaluation and probing.

double evaluate(const Expr& e, const Bindings& b) {
  switch (e.kind()) {
    case ExprKind::kConstant:
      return e.value().to_double();
    case ExprKind::kSymbol: {
      auto it = b.find(e.name());
      if (it == b.end()) throw UnboundSymbolError(e.name());
      return it->second;
    }
    case ExprKind::kSin:
      return std::sin(evaluate(e.children()[0], b));
    case ExprKind::kCos:
      return std::cos(evaluate(e.children()[0], b));
    case ExprKind::kPower:
      return std::pow(evaluate(e.children()[0], b), e.exponent());
    case ExprKind::kProduct: {
      double v = 1.0;
      for (const Expr& f : e.children()) v *= evaluate(f, b);
      return v;
    }
    case ExprKind::kSum: {
      double v = 0.0;
      for (const Expr& t : e.children()) v += evaluate(t, b);
      return v;
    }
  }
  return 0.0;
}

double unit_interval_sample(std::uint64_t bits, double lo, double hi) {
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

bool is_zero(const Expr& e, const ProbeOptions& options) {
  const Expr c = canonicalize(e);
  if (c.is_zero_literal()) return true;
  if (c.is_constant()) return false;
  const std::set<std::string> symbols = free_symbols(c);
  std::mt19937_64 rng(options.seed);
  Bindings b;
  for (int sample = 0; sample < options.samples; ++sample) {
    for (const std::string& s : symbols) {
      b[s] = unit_interval_sample(rng(), options.lo, options.hi);
    }
    double value = 0.0;
    double scale = 0.0;
    if (c.kind() == ExprKind::kSum) {
      for (const Expr& t : c.children()) {
        const double tv = evaluate(t, b);
        value += tv;
        scale += std::abs(tv);
      }
    } else {
      value = evaluate(c, b);
      scale = std::abs(value);
    }
    if (!std::isfinite(value) || !std::isfinite(scale)) return false;
    if (std::abs(value) > options.tol * (1.0 + scale)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Printing.

namespace {

bool negative_leading(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::kConstant:
      return e.value().sign() < 0;
    case ExprKind::kProduct:
      return e.children()[0].is_constant() &&
             e.children()[0].value().sign() < 0;
    default:
      return false;
  }
}

void print(const Expr& e, std::string& out);

void print_factor(const Expr& f, std::string& out) {
  if (f.kind() == ExprKind::kSum) {
    out += '(';
    print(f, out);
    out += ')';
  } else if (f.kind() == ExprKind::kConstant && f.value().sign() < 0) {
    out += '(';
    print(f, out);
    out += ')';
  } else {
    print(f, out);
  }
}

void print(const Expr& e, std::string& out) {
  switch (e.kind()) {
    case ExprKind::kConstant:
      out += e.value().to_string();
      return;
    case ExprKind::kSymbol:
      out += e.name();
      return;
    case ExprKind::kSin:
    case ExprKind::kCos:
      out += e.kind() == ExprKind::kSin ? "sin(" : "cos(";
      print(e.children()[0], out);
      out += ')';
      return;
    case ExprKind::kPower: {
      const Expr& base = e.children()[0];
      if (base.kind() == ExprKind::kSymbol || base.kind() == ExprKind::kSin ||
          base.kind() == ExprKind::kCos) {
        print(base, out);
      } else {
        out += '(';
        print(base, out);
        out += ')';
      }
      out += '^';
      out += std::to_string(e.exponent());
      return;
    }
    case ExprKind::kProduct: {
      auto fs = e.children();
      std::size_t start = 0;
      if (fs[0].is_constant()) {
        const Rational& c = fs[0].value();
        if (c == Rational(-1)) {
          out += '-';
          start = 1;
        }
      }
      for (std::size_t i = start; i < fs.size(); ++i) {
        if (i > start) out += '*';
        if (i == 0 && fs[i].is_constant()) {
          out += fs[i].value().to_string();
        } else {
          print_factor(fs[i], out);
        }
      }
      return;
    }
    case ExprKind::kSum: {
      auto ts = e.children();
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (i == 0) {
          print(ts[i], out);
        } else if (negative_leading(ts[i]) && ts[i].is_canonical()) {
          out += " - ";
          print(-ts[i], out);
        } else {
          out += " + ";
          print(ts[i], out);
        }
      }
      return;
    }
  }
}

}  // namespace

std::string Expr::to_string() const {
  std::string out;
  print(*this, out);
  return out;
}

}  // namespace ksoc
