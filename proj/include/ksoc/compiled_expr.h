#pragma once

#include <span>
#include <string>
#include <vector>

#include "ksoc/expr.h"

namespace ksoc {

/// Stack program for fast repeated evaluation. Symbols are resolved to slot
/// indices at construction.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  /// Throws UnboundSymbolError if a free symbol of `e` has no slot.
  CompiledExpr(const Expr& e, std::span<const std::string> slots);

  double operator()(std::span<const double> values) const;

 private:
  enum class Op : unsigned char { kConst, kVar, kAdd, kMul, kPow, kSin, kCos };
  struct Instr {
    Op op;
    int arg;
    double value;
  };
  void emit(const Expr& e, const std::vector<std::pair<std::string, int>>& slots);

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

}  // namespace ksoc
