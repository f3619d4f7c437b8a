#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ksoc {

/// Base class for every error raised by the library. The CLI maps subclasses
/// onto exit-code categories.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: expression text, problem files, grid specs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& message, std::size_t position)
      : ValidationError(message + " at offset " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UnboundSymbolError : public Error {
 public:
  explicit UnboundSymbolError(const std::string& symbol)
      : Error("no binding for symbol '" + symbol + "'"), symbol_(symbol) {}
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

class NonAffineError : public Error {
 public:
  NonAffineError(std::size_t equation, const std::string& unknown)
      : Error("equation " + std::to_string(equation) +
              " is not affine in unknown '" + unknown + "'"),
        equation_(equation),
        unknown_(unknown) {}
  std::size_t equation() const { return equation_; }
  const std::string& unknown() const { return unknown_; }

 private:
  std::size_t equation_;
  std::string unknown_;
};

class InconsistentSystemError : public Error {
 public:
  using Error::Error;
};

class AssumptionViolatedError : public Error {
 public:
  explicit AssumptionViolatedError(std::vector<int> failing_axes)
      : Error(describe(failing_axes)), failing_axes_(std::move(failing_axes)) {}
  const std::vector<int>& failing_axes() const { return failing_axes_; }

 private:
  static std::string describe(const std::vector<int>& axes) {
    std::string s = "Lie derivative of the cost is nonzero along X_A for A in {";
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (i > 0) s += ",";
      s += std::to_string(axes[i]);
    }
    return s + "}";
  }
  std::vector<int> failing_axes_;
};

class StepUnderflowError : public Error {
 public:
  using Error::Error;
};

class NonFiniteStateError : public Error {
 public:
  using Error::Error;
};

class BasePointOutsideGridError : public Error {
 public:
  using Error::Error;
};

class DegenerateConeError : public Error {
 public:
  using Error::Error;
};

class NotStabilizedError : public Error {
 public:
  explicit NotStabilizedError(int generations)
      : Error("constraint algorithm did not stabilize within " +
              std::to_string(generations) + " generations"),
        generations_(generations) {}
  int generations() const { return generations_; }

 private:
  int generations_;
};

}  // namespace ksoc
