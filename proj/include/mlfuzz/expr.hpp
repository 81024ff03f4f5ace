#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlfuzz {

// Variable bindings for Expr::eval. Parameter values are matched by position
// with Expr::parameters().
struct Env {
  double t = 0.0;
  double u = 0.0;
  std::optional<double> ud;
  std::span<const double> params;
};

// Scalar expressions over t, u, ud and declared parameters.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' exponent)?
//   exponent:= '-' exponent | power
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Functions: sin cos exp abs tanh sqrt sat (one argument), min max (two).
class Expr {
 public:
  enum class Op : std::uint8_t {
    Number, T, U, Ud, Param, Neg, Add, Sub, Mul, Div, Pow,
    Sin, Cos, Exp, Abs, Tanh, Sqrt, Sat, Min, Max
  };

  struct Node {
    Op op;
    std::int32_t lhs = -1;
    std::int32_t rhs = -1;
    double value = 0.0;     // Number
    std::uint32_t index = 0;  // Param
  };

  // Throws ParseError. Parameter names may not collide with t, u, ud or a
  // function name.
  static Expr parse(std::string_view source, std::vector<std::string> parameters = {});

  // A constant expression.
  static Expr constant(double value);

  double eval(const Env& env) const;

  // Fully parenthesized form that parses back to the same tree.
  std::string to_string() const;

  bool uses_t() const { return uses(Op::T); }
  bool uses_u() const { return uses(Op::U); }
  bool uses_ud() const { return uses(Op::Ud); }

  const std::vector<std::string>& parameters() const { return params_; }
  const std::string& source() const { return source_; }

  // Same shape, operators, literals and parameter names.
  friend bool structurally_equal(const Expr& a, const Expr& b);

 private:
  bool uses(Op op) const;
  double eval_node(std::int32_t i, const Env& env) const;
  void print_node(std::int32_t i, std::string& out) const;

  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
  std::vector<std::string> params_;
  std::string source_;

  friend class ExprParser;
};

}  // namespace mlfuzz
