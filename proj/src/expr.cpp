#include "skewalg/expr.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace skewalg {

struct Node {
  NodeKind kind = NodeKind::Number;
  double value = 0.0;
  std::string name{};
  Function fn = Function::Sin;
  std::shared_ptr<const Node> lhs{};
  std::shared_ptr<const Node> rhs{};
};

namespace {

std::shared_ptr<const Node> make_node(Node n) { return std::make_shared<const Node>(std::move(n)); }

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool lookup_function(std::string_view name, Function& out) {
  static constexpr std::array<std::pair<std::string_view, Function>, 7> table{{
      {"sin", Function::Sin},
      {"cos", Function::Cos},
      {"tan", Function::Tan},
      {"sqrt", Function::Sqrt},
      {"exp", Function::Exp},
      {"log", Function::Log},
      {"abs", Function::Abs},
  }};
  for (const auto& [n, f] : table) {
    if (n == name) {
      out = f;
      return true;
    }
  }
  return false;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expression run() {
    skip_ws();
    if (pos_ == src_.size()) throw ParseError("empty input", 0);
    Expression e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError("unexpected '" + std::string(1, src_[pos_]) + "'", pos_);
    return e;
  }

 private:
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

  Expression parse_expr() {
    Expression lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = Expression::binary(NodeKind::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = Expression::binary(NodeKind::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_term() {
    Expression lhs = parse_factor();
    for (;;) {
      if (accept('*')) {
        lhs = Expression::binary(NodeKind::Mul, lhs, parse_factor());
      } else if (accept('/')) {
        lhs = Expression::binary(NodeKind::Div, lhs, parse_factor());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_factor() {
    Expression base = parse_unary();
    if (accept('^')) return Expression::binary(NodeKind::Pow, base, parse_factor());
    return base;
  }

  Expression parse_unary() {
    if (accept('-')) return Expression::unary(NodeKind::Neg, parse_unary());
    return parse_primary();
  }

  Expression parse_primary() {
    skip_ws();
    if (pos_ == src_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expression inner = parse_expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (is_ident_start(c)) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
      const std::string_view ident = src_.substr(start, pos_ - start);
      skip_ws();
      const bool is_call = pos_ < src_.size() && src_[pos_] == '(';
      Function fn{};
      if (is_call) {
        if (!lookup_function(ident, fn)) throw ParseError("unknown function '" + std::string(ident) + "'", start);
        ++pos_;
        Expression arg = parse_expr();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return Expression::call(fn, arg);
      }
      if (lookup_function(ident, fn)) throw ParseError("function '" + std::string(ident) + "' used without arguments", start);
      if (ident == "pi") return Expression::pi();
      return Expression::variable(std::string(ident));
    }
    throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  Expression parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) throw ParseError("malformed number", start);
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;  // "2e" is 2 followed by identifier e
    }
    double v = 0.0;
    const auto* first = src_.data() + start;
    const auto res = std::from_chars(first, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) throw ParseError("malformed number", start);
    return Expression::number(v);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

int precedence(const Expression& e) {
  switch (e.kind()) {
    case NodeKind::Add:
    case NodeKind::Sub:
      return 1;
    case NodeKind::Mul:
    case NodeKind::Div:
      return 2;
    case NodeKind::Pow:
      return 3;
    case NodeKind::Neg:
      return 4;
    case NodeKind::Number:
      return e.value() < 0 ? 4 : 5;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void print(const Expression& e, std::string& out) {
  auto wrapped = [&out](const Expression& sub, bool parens) {
    if (parens) out += '(';
    print(sub, out);
    if (parens) out += ')';
  };
  switch (e.kind()) {
    case NodeKind::Number:
      out += format_number(e.value());
      return;
    case NodeKind::Variable:
      out += e.name();
      return;
    case NodeKind::Pi:
      out += "pi";
      return;
    case NodeKind::Neg:
      out += '-';
      wrapped(e.lhs(), precedence(e.lhs()) < 4);
      return;
    case NodeKind::Call:
      out += function_name(e.function());
      wrapped(e.lhs(), true);
      return;
    case NodeKind::Pow:
      wrapped(e.lhs(), precedence(e.lhs()) <= 3);
      out += '^';
      wrapped(e.rhs(), precedence(e.rhs()) < 3);
      return;
    default: {
      const int p = precedence(e);
      wrapped(e.lhs(), precedence(e.lhs()) < p);
      switch (e.kind()) {
        case NodeKind::Add: out += '+'; break;
        case NodeKind::Sub: out += '-'; break;
        case NodeKind::Mul: out += '*'; break;
        default: out += '/'; break;
      }
      wrapped(e.rhs(), precedence(e.rhs()) <= p);
    }
  }
}

void collect_vars(const Expression& e, std::vector<std::string>& out) {
  switch (e.kind()) {
    case NodeKind::Variable:
      if (std::find(out.begin(), out.end(), e.name()) == out.end()) out.push_back(e.name());
      return;
    case NodeKind::Number:
    case NodeKind::Pi:
      return;
    case NodeKind::Neg:
    case NodeKind::Call:
      collect_vars(e.lhs(), out);
      return;
    default:
      collect_vars(e.lhs(), out);
      collect_vars(e.rhs(), out);
  }
}

bool depends_on(const Expression& e, const std::string& var) {
  switch (e.kind()) {
    case NodeKind::Variable:
      return e.name() == var;
    case NodeKind::Number:
    case NodeKind::Pi:
      return false;
    case NodeKind::Neg:
    case NodeKind::Call:
      return depends_on(e.lhs(), var);
    default:
      return depends_on(e.lhs(), var) || depends_on(e.rhs(), var);
  }
}

Expression power(const Expression& a, const Expression& b) {
  if (b.is_constant(0.0)) return Expression::number(1.0);
  if (b.is_constant(1.0)) return a;
  if (a.kind() == NodeKind::Number && b.kind() == NodeKind::Number) {
    const double v = std::pow(a.value(), b.value());
    if (std::isfinite(v)) return Expression::number(v);
  }
  return Expression::binary(NodeKind::Pow, a, b);
}

[[noreturn]] void domain_error(const char* what) { throw EvalError(std::string("domain error: ") + what); }

double apply(Function fn, double x) {
  switch (fn) {
    case Function::Sin: return std::sin(x);
    case Function::Cos: return std::cos(x);
    case Function::Tan: return std::tan(x);
    case Function::Sqrt:
      if (x < 0.0) domain_error("sqrt of negative value");
      return std::sqrt(x);
    case Function::Exp: return std::exp(x);
    case Function::Log:
      if (!(x > 0.0)) domain_error("log of non-positive value");
      return std::log(x);
    case Function::Abs: return std::abs(x);
  }
  return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Expression

Expression::Expression() {
  static const auto zero = make_node(Node{.kind = NodeKind::Number});
  node_ = zero;
}

Expression Expression::number(double value) {
  Node n{.kind = NodeKind::Number};
  n.value = value;
  return Expression(make_node(std::move(n)));
}

Expression Expression::variable(std::string name) {
  Node n{.kind = NodeKind::Variable};
  n.name = std::move(name);
  return Expression(make_node(std::move(n)));
}

Expression Expression::pi() { return Expression(make_node(Node{.kind = NodeKind::Pi})); }

Expression Expression::unary(NodeKind kind, Expression operand) {
  Node n{.kind = kind};
  n.lhs = std::move(operand.node_);
  return Expression(make_node(std::move(n)));
}

Expression Expression::binary(NodeKind kind, Expression lhs, Expression rhs) {
  Node n{.kind = kind};
  n.lhs = std::move(lhs.node_);
  n.rhs = std::move(rhs.node_);
  return Expression(make_node(std::move(n)));
}

Expression Expression::call(Function fn, Expression arg) {
  Node n{.kind = NodeKind::Call};
  n.fn = fn;
  n.lhs = std::move(arg.node_);
  return Expression(make_node(std::move(n)));
}

NodeKind Expression::kind() const { return node_->kind; }
double Expression::value() const { return node_->value; }
const std::string& Expression::name() const { return node_->name; }
Function Expression::function() const { return node_->fn; }
Expression Expression::lhs() const { return Expression(node_->lhs); }
Expression Expression::rhs() const { return Expression(node_->rhs); }

bool Expression::is_constant(double v) const { return kind() == NodeKind::Number && value() == v; }

bool Expression::structurally_equal(const Expression& other) const {
  if (node_ == other.node_) return true;
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case NodeKind::Number:
      return std::bit_cast<std::uint64_t>(value()) == std::bit_cast<std::uint64_t>(other.value());
    case NodeKind::Variable:
      return name() == other.name();
    case NodeKind::Pi:
      return true;
    case NodeKind::Neg:
      return lhs().structurally_equal(other.lhs());
    case NodeKind::Call:
      return function() == other.function() && lhs().structurally_equal(other.lhs());
    default:
      return lhs().structurally_equal(other.lhs()) && rhs().structurally_equal(other.rhs());
  }
}

std::vector<std::string> Expression::free_variables() const {
  std::vector<std::string> out;
  collect_vars(*this, out);
  return out;
}

// ---------------------------------------------------------------------------
// VarBinding

VarBinding::VarBinding(std::initializer_list<std::pair<std::string, double>> init) {
  for (const auto& [k, v] : init) {
    if (contains(k)) throw EvalError("duplicate binding '" + k + "'");
    entries_.emplace_back(k, v);
  }
}

void VarBinding::set(const std::string& name, double value) {
  for (auto& [k, v] : entries_) {
    if (k == name) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(name, value);
}

const double* VarBinding::find(std::string_view name) const {
  for (const auto& [k, v] : entries_) {
    if (k == name) return &v;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Free functions

Expression parse(std::string_view source) { return Parser(source).run(); }

double eval(const Expression& e, const VarBinding& b) {
  std::vector<std::string> layout;
  std::vector<double> slots;
  layout.reserve(b.size());
  for (const auto& [k, v] : b.entries()) {
    layout.push_back(k);
    slots.push_back(v);
  }
  return Program(e, layout)(slots);
}

double partial(const Expression& e, const std::string& var, const VarBinding& b) {
  const double* x = b.find(var);
  if (x == nullptr) throw EvalError("unbound variable '" + var + "'");
  const double h = 1e-6 * std::max(1.0, std::abs(*x));
  VarBinding plus = b;
  VarBinding minus = b;
  plus.set(var, *x + h);
  minus.set(var, *x - h);
  return (eval(e, plus) - eval(e, minus)) / (2.0 * h);
}

std::string to_string(const Expression& e) {
  std::string out;
  print(e, out);
  return out;
}

std::string function_name(Function fn) {
  switch (fn) {
    case Function::Sin: return "sin";
    case Function::Cos: return "cos";
    case Function::Tan: return "tan";
    case Function::Sqrt: return "sqrt";
    case Function::Exp: return "exp";
    case Function::Log: return "log";
    case Function::Abs: return "abs";
  }
  return "?";
}

Expression operator+(const Expression& a, const Expression& b) {
  if (a.kind() == NodeKind::Number && b.kind() == NodeKind::Number) return Expression::number(a.value() + b.value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  if (b.kind() == NodeKind::Neg) return Expression::binary(NodeKind::Sub, a, b.lhs());
  return Expression::binary(NodeKind::Add, a, b);
}

Expression operator-(const Expression& a, const Expression& b) {
  if (a.kind() == NodeKind::Number && b.kind() == NodeKind::Number) return Expression::number(a.value() - b.value());
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  if (b.kind() == NodeKind::Neg) return Expression::binary(NodeKind::Add, a, b.lhs());
  return Expression::binary(NodeKind::Sub, a, b);
}

Expression operator*(const Expression& a, const Expression& b) {
  if (a.kind() == NodeKind::Number && b.kind() == NodeKind::Number) return Expression::number(a.value() * b.value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expression::number(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  return Expression::binary(NodeKind::Mul, a, b);
}

Expression operator/(const Expression& a, const Expression& b) {
  if (a.kind() == NodeKind::Number && b.kind() == NodeKind::Number && b.value() != 0.0)
    return Expression::number(a.value() / b.value());
  if (a.is_constant(0.0)) return Expression::number(0.0);
  if (b.is_constant(1.0)) return a;
  return Expression::binary(NodeKind::Div, a, b);
}

Expression operator-(const Expression& a) {
  if (a.kind() == NodeKind::Number) return Expression::number(-a.value());
  if (a.kind() == NodeKind::Neg) return a.lhs();
  return Expression::unary(NodeKind::Neg, a);
}

Expression derivative(const Expression& e, const std::string& var) {
  using E = Expression;
  switch (e.kind()) {
    case NodeKind::Number:
    case NodeKind::Pi:
      return E::number(0.0);
    case NodeKind::Variable:
      return E::number(e.name() == var ? 1.0 : 0.0);
    case NodeKind::Add:
      return derivative(e.lhs(), var) + derivative(e.rhs(), var);
    case NodeKind::Sub:
      return derivative(e.lhs(), var) - derivative(e.rhs(), var);
    case NodeKind::Mul:
      return derivative(e.lhs(), var) * e.rhs() + e.lhs() * derivative(e.rhs(), var);
    case NodeKind::Div: {
      const E da = derivative(e.lhs(), var);
      const E db = derivative(e.rhs(), var);
      return da / e.rhs() - e.lhs() * db / power(e.rhs(), E::number(2.0));
    }
    case NodeKind::Neg:
      return -derivative(e.lhs(), var);
    case NodeKind::Pow: {
      const E a = e.lhs();
      const E b = e.rhs();
      const E da = derivative(a, var);
      if (!depends_on(b, var)) return b * power(a, b - E::number(1.0)) * da;
      const E db = derivative(b, var);
      return power(a, b) * (db * E::call(Function::Log, a) + b * da / a);
    }
    case NodeKind::Call: {
      const E a = e.lhs();
      const E da = derivative(a, var);
      if (da.is_constant(0.0)) return E::number(0.0);
      switch (e.function()) {
        case Function::Sin: return E::call(Function::Cos, a) * da;
        case Function::Cos: return -(E::call(Function::Sin, a) * da);
        case Function::Tan: return da / power(E::call(Function::Cos, a), E::number(2.0));
        case Function::Sqrt: return da / (E::number(2.0) * e);
        case Function::Exp: return e * da;
        case Function::Log: return da / a;
        case Function::Abs: return da * a / e;
      }
    }
  }
  return E::number(0.0);
}

Expression substitute(const Expression& e, const std::vector<std::pair<std::string, Expression>>& defs) {
  switch (e.kind()) {
    case NodeKind::Variable:
      for (const auto& [k, v] : defs) {
        if (k == e.name()) return v;
      }
      return e;
    case NodeKind::Number:
    case NodeKind::Pi:
      return e;
    case NodeKind::Neg:
      return Expression::unary(NodeKind::Neg, substitute(e.lhs(), defs));
    case NodeKind::Call:
      return Expression::call(e.function(), substitute(e.lhs(), defs));
    default:
      return Expression::binary(e.kind(), substitute(e.lhs(), defs), substitute(e.rhs(), defs));
  }
}

// ---------------------------------------------------------------------------
// Program

Program::Program(const Expression& e, const std::vector<std::string>& layout) {
  zero_ = e.is_constant(0.0);
  std::size_t depth = 0;
  auto emit = [&](auto&& self, const Expression& n) -> void {
    switch (n.kind()) {
      case NodeKind::Number:
        ops_.push_back({NodeKind::Number, Function::Sin, n.value(), -1});
        max_stack_ = std::max(max_stack_, ++depth);
        return;
      case NodeKind::Pi:
        ops_.push_back({NodeKind::Number, Function::Sin, std::numbers::pi, -1});
        max_stack_ = std::max(max_stack_, ++depth);
        return;
      case NodeKind::Variable: {
        const auto it = std::find(layout.begin(), layout.end(), n.name());
        if (it == layout.end()) throw EvalError("unbound variable '" + n.name() + "'");
        ops_.push_back({NodeKind::Variable, Function::Sin, 0.0, static_cast<int>(it - layout.begin())});
        max_stack_ = std::max(max_stack_, ++depth);
        return;
      }
      case NodeKind::Neg:
      case NodeKind::Call:
        self(self, n.lhs());
        ops_.push_back({n.kind(), n.function(), 0.0, -1});
        return;
      default:
        self(self, n.lhs());
        self(self, n.rhs());
        ops_.push_back({n.kind(), Function::Sin, 0.0, -1});
        --depth;
    }
  };
  emit(emit, e);
}

double Program::operator()(std::span<const double> slots) const {
  std::array<double, 64> small{};
  std::vector<double> large;
  double* stack = small.data();
  if (max_stack_ > small.size()) {
    large.resize(max_stack_);
    stack = large.data();
  }
  std::size_t top = 0;
  for (const Op& op : ops_) {
    switch (op.kind) {
      case NodeKind::Number:
        stack[top++] = op.value;
        break;
      case NodeKind::Variable:
        stack[top++] = slots[static_cast<std::size_t>(op.slot)];
        break;
      case NodeKind::Neg:
        stack[top - 1] = -stack[top - 1];
        break;
      case NodeKind::Call:
        stack[top - 1] = apply(op.fn, stack[top - 1]);
        break;
      default: {
        const double b = stack[--top];
        double& a = stack[top - 1];
        switch (op.kind) {
          case NodeKind::Add: a = a + b; break;
          case NodeKind::Sub: a = a - b; break;
          case NodeKind::Mul: a = a * b; break;
          case NodeKind::Div:
            if (b == 0.0) domain_error("division by zero");
            a = a / b;
            break;
          default: {
            const double r = std::pow(a, b);
            if (std::isnan(r)) domain_error("power of negative base with non-integer exponent");
            a = r;
          }
        }
      }
    }
  }
  const double result = stack[0];
  if (std::isnan(result)) domain_error("non-finite result");
  return result;
}

}  // namespace skewalg
