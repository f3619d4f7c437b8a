#include <cctype>
#include <stdexcept>
#include <string>

#include "ksoc/errors.h"
#include "ksoc/expr.h"

namespace ksoc {
namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(message, pos_);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr acc = term();
    for (;;) {
      if (accept('+')) {
        acc = acc + term();
      } else if (accept('-')) {
        acc = acc - term();
      } else {
        return acc;
      }
    }
  }

  Expr term() {
    Expr acc = unary();
    for (;;) {
      if (accept('*')) {
        acc = acc * unary();
      } else if (accept('/')) {
        const std::size_t at = pos_;
        Expr d = unary();
        if (d.is_zero_literal()) throw ParseError("division by zero", at);
        acc = acc * reciprocal(d);
      } else {
        return acc;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!accept('^')) return base;
    const std::size_t at = pos_;
    Expr e = unary();
    if (!e.is_constant() || !e.value().is_integer()) {
      throw ParseError("exponent must be an integer constant", at);
    }
    const std::int64_t n = e.value().num();
    if (n > 1000 || n < -1000) throw ParseError("exponent out of range", at);
    if (base.is_zero_literal() && n < 0) throw ParseError("division by zero", at);
    return pow(base, static_cast<int>(n));
  }

  Expr primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      std::string name(text_.substr(start, pos_ - start));
      if (name == "sin" || name == "cos") {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == '(') {
          ++pos_;
          Expr arg = expr();
          if (!accept(')')) fail("expected ')'");
          return name == "sin" ? sin(arg) : cos(arg);
        }
      }
      return Expr::symbol(std::move(name));
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    std::string digits;
    int scale = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      digits += text_[pos_++];
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits += text_[pos_++];
        --scale;
      }
    }
    if (digits.empty()) throw ParseError("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      int sign = 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) {
        sign = text_[p] == '-' ? -1 : 1;
        ++p;
      }
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        int e = 0;
        while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
          e = e * 10 + (text_[p] - '0');
          if (e > 400) throw ParseError("exponent out of range", start);
          ++p;
        }
        scale += sign * e;
        pos_ = p;
      }
    }
    try {
      Rational value(0);
      for (char d : digits) value = value * Rational(10) + Rational(d - '0');
      value = value * Rational(10).pow(scale);
      return Expr(value);
    } catch (const std::overflow_error&) {
      throw ParseError("numeric literal not representable", start);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view text) {
  try {
    return Parser(text).parse();
  } catch (const std::overflow_error& e) {
    throw ValidationError(std::string("coefficient overflow: ") + e.what());
  } catch (const std::domain_error& e) {
    throw ValidationError(e.what());
  }
}

}  // namespace ksoc
