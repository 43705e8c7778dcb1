#pragma once

// Scalar expression language used for every model coefficient.
//
//   expr    := term   { ('+' | '-') term }
//   term    := factor { ('*' | '/') factor }
//   factor  := unary  [ '^' factor ]            (right-associative)
//   unary   := '-' unary | primary
//   primary := number | 'pi' | ident | func '(' expr ')' | '(' expr ')'
//   func    := sin | cos | tan | sqrt | exp | log | abs
//
// Unary minus binds tighter than '^', so "-x^2" reads as (-x)^2.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skewalg/error.hpp"

namespace skewalg {

enum class NodeKind { Number, Variable, Pi, Add, Sub, Mul, Div, Pow, Neg, Call };
enum class Function { Sin, Cos, Tan, Sqrt, Exp, Log, Abs };

struct Node;

/// Immutable expression tree. Copies share structure.
class Expression {
 public:
  Expression();  // the literal 0

  static Expression number(double value);
  static Expression variable(std::string name);
  static Expression pi();
  static Expression unary(NodeKind kind, Expression operand);
  static Expression binary(NodeKind kind, Expression lhs, Expression rhs);
  static Expression call(Function fn, Expression arg);

  NodeKind kind() const;
  double value() const;              // Number only
  const std::string& name() const;   // Variable only
  Function function() const;         // Call only
  Expression lhs() const;  // binary: left, unary/call: operand
  Expression rhs() const;

  bool is_constant(double v) const;
  bool structurally_equal(const Expression& other) const;

  /// Free variable names in first-occurrence order.
  std::vector<std::string> free_variables() const;

 private:
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  friend class Program;
  std::shared_ptr<const Node> node_;
};

/// Ordered (name, value) pairs; names are unique.
class VarBinding {
 public:
  VarBinding() = default;
  VarBinding(std::initializer_list<std::pair<std::string, double>> init);

  void set(const std::string& name, double value);
  const double* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

Expression parse(std::string_view source);
double eval(const Expression& e, const VarBinding& b);

/// Central difference (e(x+h) - e(x-h)) / 2h with h = 1e-6 * max(1, |x|).
double partial(const Expression& e, const std::string& var, const VarBinding& b);

std::string to_string(const Expression& e);
std::string function_name(Function fn);

// Arithmetic builders with constant folding and identity elimination
// (0 + x, 1 * x, x ^ 1, ...). Used when synthesizing expressions from others.
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);

/// Exact symbolic derivative, lightly simplified.
Expression derivative(const Expression& e, const std::string& var);

/// Replace variables by expressions (name lookup in `defs`).
Expression substitute(const Expression& e,
                      const std::vector<std::pair<std::string, Expression>>& defs);

/// Flattened postfix form bound to a fixed variable layout; evaluation takes
/// one value per layout slot. Cheap to copy and safe to share across threads.
class Program {
 public:
  Program() = default;
  Program(const Expression& e, const std::vector<std::string>& layout);

  double operator()(std::span<const double> slots) const;
  bool constant_zero() const { return zero_; }

 private:
  struct Op {
    NodeKind kind;
    Function fn;
    double value;
    int slot;
  };
  std::vector<Op> ops_;
  std::size_t max_stack_ = 0;
  bool zero_ = true;
};

}  // namespace skewalg
