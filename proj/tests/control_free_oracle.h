#pragma once

#include <random>
#include <string>
#include <vector>

#include "ksoc/naming.h"
#include "ksoc/skinner_rusk.h"

namespace ksoc::testing {

// Hand-coded control-free equations: p^A_i = dL/dv^i_A - lam dPsi/dv^i_A and
// sum_A (Y_A)^A_i = dL/dq^i - lam dPsi/dq^i, each built term by term.
struct ControlFreeOracle {
  std::vector<Expr> momentum, g_sum;
  explicit ControlFreeOracle(const ImplicitProblem& p) {
    for (int A = 1; A <= p.k; ++A) {
      for (int i = 1; i <= p.n; ++i) {
        const std::string v = "v" + std::to_string(i) + "_" + std::to_string(A);
        Expr rhs = differentiate(p.lagrangian, v);
        for (std::size_t a = 0; a < p.constraints.size(); ++a) {
          rhs = rhs - Expr::symbol("lam" + std::to_string(a + 1)) * differentiate(p.constraints[a], v);
        }
        momentum.push_back(Expr::symbol("p" + std::to_string(A) + "_" + std::to_string(i)) - rhs);
      }
    }
    for (int i = 1; i <= p.n; ++i) {
      const std::string q = "q" + std::to_string(i);
      Expr rhs = differentiate(p.lagrangian, q);
      for (std::size_t a = 0; a < p.constraints.size(); ++a) {
        rhs = rhs - Expr::symbol("lam" + std::to_string(a + 1)) * differentiate(p.constraints[a], q);
      }
      Expr y;
      for (int A = 1; A <= p.k; ++A) {
        y = y + Expr::symbol("ZG" + std::to_string(A) + "_" + std::to_string(A) + "_" + std::to_string(i));
      }
      g_sum.push_back(y - rhs);
    }
  }
};

inline ImplicitProblem random_control_free(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> K(1, 2), N(1, 3), S(1, 3), C(-3, 3), pick(0, 99);
  ImplicitProblem p;
  p.k = K(rng);
  p.n = N(rng);
  p.controls_present = false;
  auto coord = [&]() -> Expr {
    const int i = 1 + pick(rng) % p.n;
    switch (pick(rng) % 4) {
      case 0: return Expr::symbol(names::q(i));
      case 1: return sin(Expr::symbol(names::q(i)));
      case 2: return Expr::symbol(names::t(1 + pick(rng) % p.k));
      default: return Expr::symbol(names::v(i, 1 + pick(rng) % p.k));
    }
  };
  const int s = S(rng);
  for (int a = 0; a < s; ++a) {
    Expr psi = Expr::symbol(names::v(1 + a % p.n, 1 + a % p.k));
    for (int t = 0; t < 3; ++t) psi += Expr(C(rng)) * coord() * coord();
    p.constraints.push_back(psi);
  }
  for (int t = 0; t < 4; ++t) p.lagrangian += Expr(Rational(C(rng), 2)) * coord() * coord();
  return p;
}

}  // namespace ksoc::testing
