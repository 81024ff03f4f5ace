#include "mlfuzz/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

#include "mlfuzz/error.hpp"

namespace mlfuzz {

namespace {

struct FunctionInfo {
  std::string_view name;
  Expr::Op op;
  int arity;
};

constexpr FunctionInfo kFunctions[] = {
    {"sin", Expr::Op::Sin, 1},   {"cos", Expr::Op::Cos, 1},   {"exp", Expr::Op::Exp, 1},
    {"abs", Expr::Op::Abs, 1},   {"tanh", Expr::Op::Tanh, 1}, {"sqrt", Expr::Op::Sqrt, 1},
    {"sat", Expr::Op::Sat, 1},   {"min", Expr::Op::Min, 2},   {"max", Expr::Op::Max, 2},
};

const FunctionInfo* find_function(std::string_view name) {
  for (const auto& f : kFunctions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const FunctionInfo* find_function(Expr::Op op) {
  for (const auto& f : kFunctions) {
    if (f.op == op) return &f;
  }
  return nullptr;
}

bool is_reserved(std::string_view name) {
  return name == "t" || name == "u" || name == "ud" || find_function(name) != nullptr;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

class ExprParser {
 public:
  ExprParser(std::string_view src, Expr& out) : src_(src), out_(out) {}

  std::int32_t parse_all() {
    std::int32_t root = parse_expr();
    skip_ws();
    if (pos_ < src_.size()) {
      if (src_[pos_] == ')') fail("unbalanced ')'", {"operator", "end of input"});
      fail("unexpected character '" + std::string(1, src_[pos_]) + "'", {"operator", "end of input"});
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::vector<std::string> expected) const {
    std::string msg = "parse error at offset " + std::to_string(pos_) + ": " + what;
    if (!expected.empty()) {
      msg += "; expected ";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i) msg += i + 1 == expected.size() ? " or " : ", ";
        msg += expected[i];
      }
    }
    throw ParseError(msg, pos_, std::move(expected));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::int32_t add(Expr::Node node) {
    if (out_.nodes_.size() >= kMaxNodes) fail("expression too large", {});
    out_.nodes_.push_back(node);
    return static_cast<std::int32_t>(out_.nodes_.size() - 1);
  }

  std::int32_t binary(Expr::Op op, std::int32_t lhs, std::int32_t rhs) {
    Expr::Node n{op};
    n.lhs = lhs;
    n.rhs = rhs;
    return add(n);
  }

  std::int32_t parse_expr() {
    std::int32_t lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = binary(Expr::Op::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = binary(Expr::Op::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  std::int32_t parse_term() {
    std::int32_t lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary(Expr::Op::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = binary(Expr::Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  struct DepthGuard {
    explicit DepthGuard(ExprParser& p) : p(p) {
      if (++p.depth_ > kMaxDepth) p.fail("expression nested too deeply", {});
    }
    ~DepthGuard() { --p.depth_; }
    ExprParser& p;
  };

  std::int32_t parse_unary() {
    DepthGuard guard(*this);
    if (accept('-')) return binary(Expr::Op::Neg, parse_unary(), -1);
    return parse_power();
  }

  std::int32_t parse_power() {
    std::int32_t base = parse_primary();
    if (accept('^')) return binary(Expr::Op::Pow, base, parse_exponent());
    return base;
  }

  std::int32_t parse_exponent() {
    DepthGuard guard(*this);
    if (accept('-')) return binary(Expr::Op::Neg, parse_exponent(), -1);
    return parse_power();
  }

  std::int32_t parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input", {"expression"});
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      std::int32_t inner = parse_expr();
      if (!accept(')')) fail("unbalanced '('", {"')'"});
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (ident_start(c)) return parse_name();
    fail("unexpected character '" + std::string(1, c) + "'", {"expression"});
  }

  std::int32_t parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail("malformed number", {"digit"});
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = save;
      }
    }
    double value = 0.0;
    const char* first = src_.data() + start;
    const char* last = src_.data() + pos_;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) {
      pos_ = start;
      fail("number out of range", {"finite number"});
    }
    Expr::Node node{Expr::Op::Number};
    node.value = value;
    return add(node);
  }

  std::int32_t parse_name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
    const std::string_view name = src_.substr(start, pos_ - start);
    if (const FunctionInfo* fn = find_function(name)) {
      if (!accept('(')) fail("function '" + std::string(name) + "' needs an argument list", {"'('"});
      std::vector<std::int32_t> args;
      args.push_back(parse_expr());
      while (accept(',')) args.push_back(parse_expr());
      skip_ws();
      if (static_cast<int>(args.size()) != fn->arity) {
        fail("function '" + std::string(name) + "' takes " + std::to_string(fn->arity) + " argument(s), got " +
                 std::to_string(args.size()),
             {fn->arity > static_cast<int>(args.size()) ? "','" : "')'"});
      }
      if (!accept(')')) fail("unbalanced '('", {"','", "')'"});
      return binary(fn->op, args[0], args.size() > 1 ? args[1] : -1);
    }
    if (name == "t") return add(Expr::Node{Expr::Op::T});
    if (name == "u") return add(Expr::Node{Expr::Op::U});
    if (name == "ud") return add(Expr::Node{Expr::Op::Ud});
    const auto& params = out_.params_;
    auto it = std::find(params.begin(), params.end(), name);
    if (it == params.end()) {
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'", {"t", "u", "ud", "declared parameter", "function"});
    }
    Expr::Node node{Expr::Op::Param};
    node.index = static_cast<std::uint32_t>(it - params.begin());
    return add(node);
  }

  static constexpr int kMaxDepth = 256;
  static constexpr std::size_t kMaxNodes = 10000;

  std::string_view src_;
  Expr& out_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

Expr Expr::parse(std::string_view source, std::vector<std::string> parameters) {
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    const auto& p = parameters[i];
    if (p.empty() || !ident_start(p[0]) || !std::all_of(p.begin(), p.end(), ident_char)) {
      throw DomainError("invalid parameter name '" + p + "'");
    }
    if (is_reserved(p)) throw DomainError("parameter name '" + p + "' is reserved");
    if (std::find(parameters.begin(), parameters.begin() + static_cast<std::ptrdiff_t>(i), p) !=
        parameters.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw DomainError("parameter '" + p + "' declared twice");
    }
  }
  Expr e;
  e.params_ = std::move(parameters);
  e.source_ = std::string(source);
  ExprParser parser(source, e);
  e.root_ = parser.parse_all();
  return e;
}

Expr Expr::constant(double value) {
  if (!std::isfinite(value)) throw DomainError("constant expression must be finite");
  Expr e;
  Node n{Op::Number};
  n.value = value;
  e.nodes_.push_back(n);
  e.root_ = 0;
  e.source_ = e.to_string();
  return e;
}

bool Expr::uses(Op op) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; });
}

double Expr::eval(const Env& env) const {
  if (root_ < 0) throw EvalError("empty expression");
  if (env.params.size() < params_.size()) throw EvalError("missing parameter values");
  return eval_node(root_, env);
}

double Expr::eval_node(std::int32_t i, const Env& env) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  auto arg = [&](std::int32_t j) { return eval_node(j, env); };
  auto finite = [](double v, const char* what) {
    if (!std::isfinite(v)) throw NonFiniteResult(std::string("non-finite result in ") + what);
    return v;
  };
  switch (n.op) {
    case Op::Number:
      return n.value;
    case Op::T:
      return finite(env.t, "variable t");
    case Op::U:
      return finite(env.u, "variable u");
    case Op::Ud:
      if (!env.ud) throw EvalError("variable ud is not bound (no delay configured)");
      return finite(*env.ud, "variable ud");
    case Op::Param:
      return finite(env.params[n.index], "parameter");
    case Op::Neg:
      return -arg(n.lhs);
    case Op::Add:
      return finite(arg(n.lhs) + arg(n.rhs), "addition");
    case Op::Sub:
      return finite(arg(n.lhs) - arg(n.rhs), "subtraction");
    case Op::Mul:
      return finite(arg(n.lhs) * arg(n.rhs), "multiplication");
    case Op::Div: {
      const double num = arg(n.lhs);
      const double den = arg(n.rhs);
      if (den == 0.0) throw EvalError("division by zero");
      return finite(num / den, "division");
    }
    case Op::Pow: {
      const double base = arg(n.lhs);
      const double ex = arg(n.rhs);
      if (base < 0.0 && ex != std::floor(ex)) {
        throw EvalError("negative base with non-integer exponent");
      }
      if (base == 0.0 && ex < 0.0) throw EvalError("zero raised to a negative power");
      return finite(std::pow(base, ex), "power");
    }
    case Op::Sin:
      return std::sin(arg(n.lhs));
    case Op::Cos:
      return std::cos(arg(n.lhs));
    case Op::Exp:
      return finite(std::exp(arg(n.lhs)), "exp");
    case Op::Abs:
      return std::fabs(arg(n.lhs));
    case Op::Tanh:
      return std::tanh(arg(n.lhs));
    case Op::Sqrt: {
      const double x = arg(n.lhs);
      if (x < 0.0) throw EvalError("sqrt of a negative number");
      return std::sqrt(x);
    }
    case Op::Sat:
      return std::clamp(arg(n.lhs), -1.0, 1.0);
    case Op::Min:
      return std::min(arg(n.lhs), arg(n.rhs));
    case Op::Max:
      return std::max(arg(n.lhs), arg(n.rhs));
  }
  throw EvalError("corrupt expression node");
}

std::string Expr::to_string() const {
  std::string out;
  if (root_ >= 0) print_node(root_, out);
  return out;
}

void Expr::print_node(std::int32_t i, std::string& out) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  auto bin = [&](const char* sym) {
    out += '(';
    print_node(n.lhs, out);
    out += sym;
    print_node(n.rhs, out);
    out += ')';
  };
  switch (n.op) {
    case Op::Number: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, n.value);
      out.append(buf, res.ptr);
      return;
    }
    case Op::T:
      out += 't';
      return;
    case Op::U:
      out += 'u';
      return;
    case Op::Ud:
      out += "ud";
      return;
    case Op::Param:
      out += params_[n.index];
      return;
    case Op::Neg:
      out += "(-";
      print_node(n.lhs, out);
      out += ')';
      return;
    case Op::Add:
      return bin(" + ");
    case Op::Sub:
      return bin(" - ");
    case Op::Mul:
      return bin(" * ");
    case Op::Div:
      return bin(" / ");
    case Op::Pow:
      return bin(" ^ ");
    default: {
      const FunctionInfo* fn = find_function(n.op);
      out += fn->name;
      out += '(';
      print_node(n.lhs, out);
      if (fn->arity == 2) {
        out += ", ";
        print_node(n.rhs, out);
      }
      out += ')';
      return;
    }
  }
}

namespace {

bool same_subtree(const Expr& a, std::int32_t i, const Expr& b, std::int32_t j,
                  const std::vector<Expr::Node>& na, const std::vector<Expr::Node>& nb) {
  if (i < 0 || j < 0) return i == j;
  const auto& x = na[static_cast<std::size_t>(i)];
  const auto& y = nb[static_cast<std::size_t>(j)];
  if (x.op != y.op) return false;
  if (x.op == Expr::Op::Number && x.value != y.value) return false;
  if (x.op == Expr::Op::Param && a.parameters()[x.index] != b.parameters()[y.index]) return false;
  return same_subtree(a, x.lhs, b, y.lhs, na, nb) && same_subtree(a, x.rhs, b, y.rhs, na, nb);
}

}  // namespace

bool structurally_equal(const Expr& a, const Expr& b) {
  return same_subtree(a, a.root_, b, b.root_, a.nodes_, b.nodes_);
}

}  // namespace mlfuzz
