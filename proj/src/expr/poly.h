#pragma once

// Internal polynomial normal form shared by the expression translation units.

#include <map>
#include <utility>
#include <vector>

#include "ksoc/expr.h"

namespace ksoc::detail {

/// Sorted by atom, exponents nonzero.
using Monomial = std::vector<std::pair<Expr, int>>;

struct MonoLess {
  static int degree(const Monomial& m);
  bool operator()(const Monomial& a, const Monomial& b) const;
};

using Poly = std::map<Monomial, Rational, MonoLess>;

Poly poly_add(const Poly& a, const Poly& b);
Poly poly_scale(const Poly& a, const Rational& s);
Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_pow(const Poly& p, int e);

Poly to_poly(const Expr& e);
Poly to_poly_of_sum(const Expr& sum_atom);
Expr from_poly(const Poly& p);

/// sin/cos of a canonical argument with sign normalization.
Expr make_trig(ExprKind kind, const Expr& canonical_arg);

}  // namespace ksoc::detail
