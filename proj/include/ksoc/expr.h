#pragma once

// Symbolic expressions over named real variables.
//
// The fragment is deliberately small: rational constants, symbols, sums,
// products, integer powers, sin and cos. Every expression built through the
// arithmetic operators below is kept in canonical form:
//
//   * the expression is expanded into a sum of monomials, each a rational
//     coefficient times a product of atom powers;
//   * atoms are symbols, sin(a), cos(a) (a canonical), and sums that occur
//     only with negative exponents (reciprocals of monic sums);
//   * cos(a)^2 is rewritten as 1 - sin(a)^2, so trigonometric polynomials in
//     a single argument have a unique form;
//   * monomials are ordered graded-lexicographically (total degree first,
//     then atom order), factors by atom order.
//
// Raw trees (Expr::raw_*) are not normalized; canonicalize() turns them into
// the canonical form above.

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ksoc/rational.h"

namespace ksoc {

enum class ExprKind { kConstant, kSymbol, kSin, kCos, kPower, kProduct, kSum };

class Expr;
using Bindings = std::map<std::string, double, std::less<>>;
using Substitution = std::map<std::string, Expr, std::less<>>;

class Expr {
 public:
  struct Node;

  /// The constant 0.
  Expr();
  Expr(std::int64_t value);  // NOLINT(runtime/explicit)
  Expr(int value) : Expr(static_cast<std::int64_t>(value)) {}  // NOLINT
  Expr(const Rational& value);                                 // NOLINT

  static Expr symbol(std::string name);
  static Expr constant(const Rational& value) { return Expr(value); }

  static Expr raw_sum(std::vector<Expr> terms);
  static Expr raw_product(std::vector<Expr> factors);
  static Expr raw_power(Expr base, int exponent);
  static Expr raw_sin(Expr arg);
  static Expr raw_cos(Expr arg);

  ExprKind kind() const;
  bool is_canonical() const;

  /// Valid for kConstant.
  const Rational& value() const;
  /// Valid for kSymbol.
  const std::string& name() const;
  /// Terms of a sum, factors of a product, {base} of a power, {arg} of sin/cos.
  std::span<const Expr> children() const;
  /// Valid for kPower.
  int exponent() const;

  bool is_constant() const { return kind() == ExprKind::kConstant; }
  bool is_constant(const Rational& v) const {
    return is_constant() && value() == v;
  }
  /// True only for the literal constant 0 (no probing).
  bool is_zero_literal() const { return is_constant(Rational(0)); }

  /// Number of nodes in the tree.
  std::size_t size() const;

  /// Infix text in the grammar accepted by parse_expr().
  std::string to_string() const;

  /// Structural tree equality.
  friend bool operator==(const Expr& a, const Expr& b);
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

  const Node* node() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  friend class ExprFactory;
  std::shared_ptr<const Node> node_;
};

/// Total order on expression trees; 0 iff structurally equal.
int compare(const Expr& a, const Expr& b);

struct ExprLess {
  bool operator()(const Expr& a, const Expr& b) const {
    return compare(a, b) < 0;
  }
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr& operator+=(Expr& a, const Expr& b);
Expr& operator-=(Expr& a, const Expr& b);
Expr& operator*=(Expr& a, const Expr& b);

Expr pow(const Expr& base, int exponent);
Expr reciprocal(const Expr& e);
Expr sin(const Expr& arg);
Expr cos(const Expr& arg);
Expr sum(std::span<const Expr> terms);

Expr canonicalize(const Expr& e);

/// Partial derivative in `x`; every other symbol is an independent constant.
Expr differentiate(const Expr& e, std::string_view x);

Expr substitute(const Expr& e, const Substitution& s);

std::set<std::string> free_symbols(const Expr& e);
void collect_free_symbols(const Expr& e, std::set<std::string>& out);
bool depends_on(const Expr& e, std::string_view x);

/// Throws UnboundSymbolError naming the first missing symbol.
double evaluate(const Expr& e, const Bindings& b);

inline constexpr std::uint64_t kDefaultSeed = 20110615;

struct ProbeOptions {
  std::uint64_t seed = kDefaultSeed;
  int samples = 32;
  double tol = 1e-9;
  double lo = -2.0;
  double hi = 2.0;
};

/// Zero test: true if the canonical form is the constant 0, or if the
/// expression evaluates to |value| <= tol * (1 + scale) at every one of
/// `samples` random bindings, where scale is the sum of the magnitudes of the
/// top-level terms. One-sided: a false positive needs a nonzero expression
/// that vanishes numerically at every probe.
bool is_zero(const Expr& e, const ProbeOptions& options = {});

/// Deterministic uniform sample in [lo, hi) from a 64-bit generator output.
double unit_interval_sample(std::uint64_t bits, double lo, double hi);

/// Parses the infix grammar:
///
///   expr    = term { ("+" | "-") term } ;
///   term    = unary { ("*" | "/") unary } ;
///   unary   = ("-" | "+") unary | power ;
///   power   = primary [ "^" unary ] ;          (exponent must be an integer)
///   primary = number | ident | ("sin" | "cos") "(" expr ")" | "(" expr ")" ;
///   number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
///   ident   = letter { letter | digit | "_" } ;
///
/// Decimal literals are converted to exact rationals. The result is canonical.
Expr parse_expr(std::string_view text);

}  // namespace ksoc
