#include "ksoc/compiled_expr.h"

#include <algorithm>
#include <array>
#include <cmath>

#include "ksoc/errors.h"

namespace ksoc {

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) {
  std::vector<std::pair<std::string, int>> index;
  index.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    index.emplace_back(slots[i], static_cast<int>(i));
  }
  std::sort(index.begin(), index.end());
  emit(e, index);
  int depth = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::kConst:
      case Op::kVar:
        ++depth;
        break;
      case Op::kAdd:
      case Op::kMul:
        depth -= in.arg - 1;
        break;
      default:
        break;
    }
    max_depth_ = std::max(max_depth_, depth);
  }
}

void CompiledExpr::emit(const Expr& e,
                        const std::vector<std::pair<std::string, int>>& slots) {
  switch (e.kind()) {
    case ExprKind::kConstant:
      code_.push_back({Op::kConst, 0, e.value().to_double()});
      return;
    case ExprKind::kSymbol: {
      auto it = std::lower_bound(
          slots.begin(), slots.end(), e.name(),
          [](const auto& p, const std::string& n) { return p.first < n; });
      if (it == slots.end() || it->first != e.name()) {
        throw UnboundSymbolError(e.name());
      }
      code_.push_back({Op::kVar, it->second, 0.0});
      return;
    }
    case ExprKind::kSin:
    case ExprKind::kCos:
      emit(e.children()[0], slots);
      code_.push_back({e.kind() == ExprKind::kSin ? Op::kSin : Op::kCos, 0, 0.0});
      return;
    case ExprKind::kPower:
      emit(e.children()[0], slots);
      code_.push_back({Op::kPow, e.exponent(), 0.0});
      return;
    case ExprKind::kProduct:
    case ExprKind::kSum: {
      for (const Expr& c : e.children()) emit(c, slots);
      const int n = static_cast<int>(e.children().size());
      if (n == 0) {
        code_.push_back({Op::kConst, 0, e.kind() == ExprKind::kSum ? 0.0 : 1.0});
      } else if (n > 1) {
        code_.push_back({e.kind() == ExprKind::kSum ? Op::kAdd : Op::kMul, n, 0.0});
      }
      return;
    }
  }
}

namespace {

double int_pow(double x, int e) {
  if (e == 2) return x * x;
  if (e == -1) return 1.0 / x;
  return std::pow(x, e);
}

}  // namespace

double CompiledExpr::operator()(std::span<const double> values) const {
  if (code_.empty()) return 0.0;
  constexpr int kSmall = 64;
  std::array<double, kSmall> small;
  std::vector<double> large;
  double* stack = small.data();
  if (max_depth_ > kSmall) {
    large.resize(static_cast<std::size_t>(max_depth_));
    stack = large.data();
  }
  int top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::kConst:
        stack[top++] = in.value;
        break;
      case Op::kVar:
        stack[top++] = values[static_cast<std::size_t>(in.arg)];
        break;
      case Op::kAdd: {
        double acc = 0.0;
        for (int i = top - in.arg; i < top; ++i) acc += stack[i];
        top -= in.arg;
        stack[top++] = acc;
        break;
      }
      case Op::kMul: {
        double acc = 1.0;
        for (int i = top - in.arg; i < top; ++i) acc *= stack[i];
        top -= in.arg;
        stack[top++] = acc;
        break;
      }
      case Op::kPow:
        stack[top - 1] = int_pow(stack[top - 1], in.arg);
        break;
      case Op::kSin:
        stack[top - 1] = std::sin(stack[top - 1]);
        break;
      case Op::kCos:
        stack[top - 1] = std::cos(stack[top - 1]);
        break;
    }
  }
  return stack[0];
}

}  // namespace ksoc
