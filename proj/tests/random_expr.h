#pragma once

#include <random>

#include "ksoc/expr.h"

namespace ksoc::testing {

// Bounded random grammar over x, y, z with raw (unnormalized) trees.
class RandomExpr {
 public:
  explicit RandomExpr(std::uint64_t seed) : rng_(seed) {}

  Expr gen(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 7);
    switch (pick(rng_)) {
      case 0: {
        static const char* kNames[] = {"x", "y", "z"};

        return Expr::symbol(kNames[std::uniform_int_distribution<int>(0, 2)(rng_)]);
      }
      case 1: {
        const int n = std::uniform_int_distribution<int>(-5, 5)(rng_);
        const int d = std::uniform_int_distribution<int>(1, 4)(rng_);
        return Expr(Rational(n, d));
      }
      case 2:
      case 3: {
        std::vector<Expr> terms;
        const int n = std::uniform_int_distribution<int>(2, 3)(rng_);
        for (int i = 0; i < n; ++i) terms.push_back(gen(depth - 1));
        return Expr::raw_sum(std::move(terms));
      }
      case 4: {
        std::vector<Expr> f;
        const int n = std::uniform_int_distribution<int>(2, 3)(rng_);
        for (int i = 0; i < n; ++i) f.push_back(gen(depth - 1));
        return Expr::raw_product(std::move(f));
      }
      case 5:
        return Expr::raw_power(gen(depth - 1),
                               std::uniform_int_distribution<int>(2, 3)(rng_));
      case 6:
        return std::uniform_int_distribution<int>(0, 1)(rng_)
                   ? Expr::raw_sin(gen(depth - 1))
                   : Expr::raw_cos(gen(depth - 1));
      default:
        // 1 / (3 + e^2) stays bounded away from a pole.
        return Expr::raw_power(
            Expr::raw_sum({Expr(3), Expr::raw_power(gen(depth - 1), 2)}), -1);
    }
  }

  Bindings bindings() {
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    return {{"x", d(rng_)}, {"y", d(rng_)}, {"z", d(rng_)}};
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace ksoc::testing
