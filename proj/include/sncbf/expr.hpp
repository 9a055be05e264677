#pragma once

// Expression trees for dynamics and safe-set functions: text parsing, printing,
// pointwise evaluation, inclusion-isotone interval evaluation, and a compiled
// tape that supports HC4-style constraint contraction.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sncbf/error.hpp"
#include "sncbf/interval.hpp"

namespace sncbf {

enum class Op {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Sin,
  Cos,
  Exp,
  Softplus,  // log(1 + exp(z)), evaluated without overflow
  Sigmoid,
  DSigmoid,  // sigmoid * (1 - sigmoid)
  Tanh,
  DTanh,     // 1 - tanh^2
  D2Tanh,    // -2 tanh (1 - tanh^2)
  Abs,
  Min,
  Max,
};

namespace scalar {

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
inline double dsigmoid(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}
inline double d2sigmoid(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}
inline double dtanh(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}
inline double d2tanh(double z) {
  const double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}
inline double d3tanh(double z) {
  const double t = std::tanh(z);
  return -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t);
}

}  // namespace scalar

class Expr {
 public:
  struct Node {
    Op op = Op::Const;
    double value = 0.0;  // Const
    int index = 0;       // Var: state index; Pow: exponent
    std::vector<Expr> children;
  };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double v) { return Expr(Node{Op::Const, v, 0, {}}); }
  static Expr variable(int index) { return Expr(Node{Op::Var, 0.0, index, {}}); }
  // Raw node construction, no folding.
  static Expr make(Op op, std::vector<Expr> children, int index = 0) {
    return Expr(Node{op, 0.0, index, std::move(children)});
  }

  Op op() const { return node_->op; }
  double value() const { return node_->value; }
  int index() const { return node_->index; }
  const std::vector<Expr>& children() const { return node_->children; }
  const Expr& child(std::size_t i) const { return node_->children[i]; }
  const Node* id() const { return node_.get(); }

  bool is_constant() const { return op() == Op::Const; }
  bool is_constant(double v) const { return op() == Op::Const && value() == v; }

  // Largest variable index referenced, or -1.
  int max_variable() const {
    if (op() == Op::Var) return index();
    int m = -1;
    for (const auto& c : children()) m = std::max(m, c.max_variable());
    return m;
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& c : children()) n += c.size();
    return n;
  }

 private:
  explicit Expr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}
  std::shared_ptr<const Node> node_;
};

// Folding builders. Constant children fold; additive and multiplicative
// identities collapse.
inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Add, {a, b});
}
inline Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Sub, {a, b});
}
inline Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  return Expr::make(Op::Neg, {a});
}
inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Mul, {a, b});
}
inline Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Div, {a, b});
}
inline Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
inline Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
inline Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
inline Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
inline Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
inline Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }

inline Expr pow(const Expr& a, int n) {
  if (n < 0) throw Error("negative exponent " + std::to_string(n));
  if (n == 0) return Expr::constant(1.0);
  if (n == 1) return a;
  if (a.is_constant()) return Expr::constant(std::pow(a.value(), n));
  return Expr::make(Op::Pow, {a}, n);
}
inline Expr sin(const Expr& a) { return a.is_constant() ? Expr::constant(std::sin(a.value())) : Expr::make(Op::Sin, {a}); }
inline Expr cos(const Expr& a) { return a.is_constant() ? Expr::constant(std::cos(a.value())) : Expr::make(Op::Cos, {a}); }
inline Expr exp(const Expr& a) { return a.is_constant() ? Expr::constant(std::exp(a.value())) : Expr::make(Op::Exp, {a}); }
inline Expr softplus(const Expr& a) { return Expr::make(Op::Softplus, {a}); }
inline Expr sigmoid(const Expr& a) { return Expr::make(Op::Sigmoid, {a}); }
inline Expr dsigmoid(const Expr& a) { return Expr::make(Op::DSigmoid, {a}); }
inline Expr tanh(const Expr& a) { return Expr::make(Op::Tanh, {a}); }
inline Expr dtanh(const Expr& a) { return Expr::make(Op::DTanh, {a}); }
inline Expr d2tanh(const Expr& a) { return Expr::make(Op::D2Tanh, {a}); }
inline Expr abs(const Expr& a) { return Expr::make(Op::Abs, {a}); }
inline Expr min(const Expr& a, const Expr& b) { return Expr::make(Op::Min, {a, b}); }
inline Expr max(const Expr& a, const Expr& b) { return Expr::make(Op::Max, {a, b}); }

// Sum of terms; empty sum is zero.
inline Expr sum(std::span<const Expr> terms) {
  Expr acc = Expr::constant(0.0);
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation

inline double apply_unary(Op op, double a, int index) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Pow: return std::pow(a, index);  // pow(0, 0) == 1
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Exp: return std::exp(a);
    case Op::Softplus: return scalar::softplus(a);
    case Op::Sigmoid: return scalar::sigmoid(a);
    case Op::DSigmoid: return scalar::dsigmoid(a);
    case Op::Tanh: return std::tanh(a);
    case Op::DTanh: return scalar::dtanh(a);
    case Op::D2Tanh: return scalar::d2tanh(a);
    case Op::Abs: return std::fabs(a);
    default: throw Error("not a unary operator");
  }
}

inline double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0.0) throw DomainError("division by zero");
      return a / b;
    case Op::Min: return std::min(a, b);
    case Op::Max: return std::max(a, b);
    default: throw Error("not a binary operator");
  }
}

inline double eval_point(const Expr& e, std::span<const double> x) {
  switch (e.op()) {
    case Op::Const: return e.value();
    case Op::Var:
      if (static_cast<std::size_t>(e.index()) >= x.size()) throw Error("variable index out of range");
      return x[e.index()];
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Min:
    case Op::Max:
      return apply_binary(e.op(), eval_point(e.child(0), x), eval_point(e.child(1), x));
    default:
      return apply_unary(e.op(), eval_point(e.child(0), x), e.index());
  }
}

// ---------------------------------------------------------------------------
// Interval evaluation

namespace detail {

inline constexpr double kD2TanhCrit = 0.65847894846240835;  // atanh(1/sqrt(3))

inline Interval sanitize(Interval v) {
  if (std::isnan(v.lo)) v.lo = -std::numeric_limits<double>::infinity();
  if (std::isnan(v.hi)) v.hi = std::numeric_limits<double>::infinity();
  return v;
}

inline Interval unary_interval(Op op, const Interval& a, int index) {
  static constexpr double kZero[] = {0.0};
  static constexpr double kTanh2[] = {-kD2TanhCrit, kD2TanhCrit};
  switch (op) {
    case Op::Neg: return -a;
    case Op::Pow: return ipow(a, index);
    case Op::Sin: return isin(a);
    case Op::Cos: return icos(a);
    case Op::Exp: return widen({std::exp(a.lo), std::exp(a.hi)});
    case Op::Softplus: return widen({scalar::softplus(a.lo), scalar::softplus(a.hi)});
    case Op::Sigmoid: return widen({scalar::sigmoid(a.lo), scalar::sigmoid(a.hi)});
    case Op::DSigmoid: return monotone_pieces(a, scalar::dsigmoid, kZero);
    case Op::Tanh: return widen({std::tanh(a.lo), std::tanh(a.hi)});
    case Op::DTanh: return monotone_pieces(a, scalar::dtanh, kZero);
    case Op::D2Tanh: return monotone_pieces(a, scalar::d2tanh, kTanh2);
    case Op::Abs:
      if (a.lo >= 0.0) return a;
      if (a.hi <= 0.0) return -a;
      return {0.0, std::max(-a.lo, a.hi)};
    default: throw Error("not a unary operator");
  }
}

inline Interval binary_interval(Op op, const Interval& a, const Interval& b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b.lo <= 0.0 && b.hi >= 0.0) throw SplitRequired("division by an interval containing zero");
      return divide_nonzero(a, b);
    case Op::Min: return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
    case Op::Max: return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
    default: throw Error("not a binary operator");
  }
}

}  // namespace detail

inline Interval eval_interval(const Expr& e, std::span<const Interval> box) {
  switch (e.op()) {
    case Op::Const: return Interval::point(e.value());
    case Op::Var:
      if (static_cast<std::size_t>(e.index()) >= box.size()) throw Error("variable index out of range");
      return box[e.index()];
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Min:
    case Op::Max:
      return detail::sanitize(
          detail::binary_interval(e.op(), eval_interval(e.child(0), box), eval_interval(e.child(1), box)));
    default:
      return detail::sanitize(detail::unary_interval(e.op(), eval_interval(e.child(0), box), e.index()));
  }
}

// ---------------------------------------------------------------------------
// Printing and parsing

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::DSigmoid: return "dsigmoid";
    case Op::Tanh: return "tanh";
    case Op::DTanh: return "dtanh";
    case Op::D2Tanh: return "d2tanh";
    case Op::Abs: return "abs";
    case Op::Min: return "min";
    case Op::Max: return "max";
    default: return nullptr;
  }
}

// Fully parenthesized text that parse_expr reads back to the same tree.
inline std::string print(const Expr& e) {
  switch (e.op()) {
    case Op::Const: {
      const std::string s = format_number(e.value());
      return e.value() < 0.0 ? "(" + s + ")" : s;
    }
    case Op::Var: return "x" + std::to_string(e.index() + 1);
    case Op::Neg: return "(-(" + print(e.child(0)) + "))";
    case Op::Add: return "(" + print(e.child(0)) + " + " + print(e.child(1)) + ")";
    case Op::Sub: return "(" + print(e.child(0)) + " - " + print(e.child(1)) + ")";
    case Op::Mul: return "(" + print(e.child(0)) + " * " + print(e.child(1)) + ")";
    case Op::Div: return "(" + print(e.child(0)) + " / " + print(e.child(1)) + ")";
    case Op::Pow: return "(" + print(e.child(0)) + ")^" + std::to_string(e.index());
    case Op::Min:
    case Op::Max:
      return std::string(function_name(e.op())) + "(" + print(e.child(0)) + ", " + print(e.child(1)) + ")";
    default: return std::string(function_name(e.op())) + "(" + print(e.child(0)) + ")";
  }
}

namespace detail {

// Recursive-descent parser for
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' uint)?
//   base   := number | 'x' uint | 'pi' | '(' expr ')' | fn '(' args ')' | '-' base
class Parser {
 public:
  Parser(std::string_view text, int dim) : text_(text), dim_(dim) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::make(Op::Add, {lhs, term()});
      } else if (accept('-')) {
        lhs = Expr::make(Op::Sub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::make(Op::Mul, {lhs, factor()});
      } else if (accept('/')) {
        lhs = Expr::make(Op::Div, {lhs, factor()});
      } else {
        return lhs;
      }
    }
  }

  Expr factor() {
    Expr b = base();
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      const unsigned long long n = read_uint();
      if (n > 64) {
        pos_ = start;
        fail("exponent too large");
      }
      return Expr::make(Op::Pow, {b}, static_cast<int>(n));
    }
    return b;
  }

  unsigned long long read_uint() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected unsigned integer");
    unsigned long long v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc()) {
      pos_ = start;
      fail("integer out of range");
    }
    return v;
  }

  Expr number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) ++p;
        pos_ = p;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(v);
  }

  Expr base() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (accept('(')) {
      Expr e = expr();
      expect(')');
      return e;
    }
    if (accept('-')) return Expr::make(Op::Neg, {base()});
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      if (c == 'x' && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) ++pos_;
      else
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      const std::string_view name = text_.substr(start, pos_ - start);
      if (name == "x") {
        const std::size_t idx_pos = pos_;
        const unsigned long long idx = read_uint();
        if (idx < 1 || idx > static_cast<unsigned long long>(dim_)) {
          pos_ = idx_pos;
          fail("variable index x" + std::to_string(idx) + " out of range for dimension " + std::to_string(dim_));
        }
        return Expr::variable(static_cast<int>(idx - 1));
      }
      if (name == "pi") return Expr::constant(detail::kPi);
      static const std::pair<std::string_view, Op> kFns[] = {
          {"sin", Op::Sin},         {"cos", Op::Cos},         {"exp", Op::Exp},   {"abs", Op::Abs},
          {"softplus", Op::Softplus}, {"sigmoid", Op::Sigmoid}, {"dsigmoid", Op::DSigmoid},
          {"tanh", Op::Tanh},       {"dtanh", Op::DTanh},     {"d2tanh", Op::D2Tanh},
          {"min", Op::Min},         {"max", Op::Max}};
      for (const auto& [fname, op] : kFns) {
        if (name != fname) continue;
        expect('(');
        Expr a = expr();
        if (op == Op::Min || op == Op::Max) {
          expect(',');
          Expr b = expr();
          expect(')');
          return Expr::make(op, {a, b});
        }
        expect(')');
        return Expr::make(op, {a});
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'");
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  int dim_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Variables are written x1..xn in text and stored 0-based.
inline Expr parse_expr(std::string_view text, int dim) { return detail::Parser(text, dim).parse(); }

// ---------------------------------------------------------------------------
// Compiled tape

class Tape {
 public:
  struct Instr {
    Op op;
    int a = -1;
    int b = -1;
    double value = 0.0;
    int index = 0;
  };

  Tape() = default;
  explicit Tape(const Expr& e) {
    std::unordered_map<const Expr::Node*, int> seen;
    root_ = emit(e, seen);
  }

  std::size_t size() const { return code_.size(); }
  int root() const { return root_; }

  double eval_point(std::span<const double> x) const {
    std::vector<double> v(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      switch (in.op) {
        case Op::Const: v[i] = in.value; break;
        case Op::Var: v[i] = x[in.index]; break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Min:
        case Op::Max: v[i] = apply_binary(in.op, v[in.a], v[in.b]); break;
        default: v[i] = apply_unary(in.op, v[in.a], in.index); break;
      }
    }
    return v[root_];
  }

  // Forward interval sweep; vals receives the enclosure of every node.
  Interval eval_interval(std::span<const Interval> box, std::vector<Interval>& vals) const {
    vals.resize(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      switch (in.op) {
        case Op::Const: vals[i] = Interval::point(in.value); break;
        case Op::Var: vals[i] = box[in.index]; break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Min:
        case Op::Max: vals[i] = detail::sanitize(detail::binary_interval(in.op, vals[in.a], vals[in.b])); break;
        default: vals[i] = detail::sanitize(detail::unary_interval(in.op, vals[in.a], in.index)); break;
      }
    }
    return vals[root_];
  }

  Interval eval_interval(std::span<const Interval> box) const {
    std::vector<Interval> vals;
    return eval_interval(box, vals);
  }

  // HC4-revise: narrows box to a hull of the points where the expression can
  // take a value in target. Returns false when that set is provably empty.
  bool contract(std::vector<Interval>& box, Interval target) const {
    std::vector<Interval> vals;
    try {
      eval_interval(box, vals);
    } catch (const SplitRequired&) {
      return true;
    }
    vals[root_] = intersect(vals[root_], target);
    if (vals[root_].empty()) return false;
    for (int i = static_cast<int>(code_.size()) - 1; i >= 0; --i) {
      const Instr& in = code_[i];
      const Interval z = vals[i];
      if (z.empty()) return false;
      auto narrow = [&](int k, Interval r) {
        vals[k] = intersect(vals[k], r);
        return !vals[k].empty();
      };
      switch (in.op) {
        case Op::Const:
          if (!widen(z).contains(in.value)) return false;
          break;
        case Op::Var:
          box[in.index] = intersect(box[in.index], z);
          if (box[in.index].empty()) return false;
          break;
        case Op::Neg:
          if (!narrow(in.a, -z)) return false;
          break;
        case Op::Add:
          if (!narrow(in.a, z - vals[in.b]) || !narrow(in.b, z - vals[in.a])) return false;
          break;
        case Op::Sub:
          if (!narrow(in.a, z + vals[in.b]) || !narrow(in.b, vals[in.a] - z)) return false;
          break;
        case Op::Mul: {
          const Interval x = vals[in.a], y = vals[in.b];
          if (!(y.lo <= 0.0 && y.hi >= 0.0) && !narrow(in.a, divide_nonzero(z, y))) return false;
          if (!(x.lo <= 0.0 && x.hi >= 0.0) && !narrow(in.b, divide_nonzero(z, vals[in.a]))) return false;
          break;
        }
        case Op::Div: {
          const Interval y = vals[in.b];
          if (!narrow(in.a, z * y)) return false;
          if (!(z.lo <= 0.0 && z.hi >= 0.0) && !narrow(in.b, divide_nonzero(vals[in.a], z))) return false;
          break;
        }
        case Op::Pow: {
          const int n = in.index;
          if (n == 0) break;
          if (n % 2 == 1) {
            auto root = [n](double v) { return std::copysign(std::pow(std::fabs(v), 1.0 / n), v); };
            if (!narrow(in.a, widen({root(z.lo), root(z.hi)}))) return false;
          } else {
            const Interval zp = intersect(z, {0.0, std::numeric_limits<double>::infinity()});
            if (zp.empty()) return false;
            const Interval r = widen({std::pow(zp.lo, 1.0 / n), std::pow(zp.hi, 1.0 / n)});
            const Interval x = vals[in.a];
            const Interval pos = intersect(x, r);
            const Interval neg = intersect(x, -r);
            if (pos.empty() && neg.empty()) return false;
            vals[in.a] = pos.empty() ? neg : (neg.empty() ? pos : hull(pos, neg));
          }
          break;
        }
        case Op::Exp: {
          if (z.hi <= 0.0) return false;
          const double lo = z.lo > 0.0 ? std::log(z.lo) : -std::numeric_limits<double>::infinity();
          if (!narrow(in.a, widen({lo, std::log(z.hi)}))) return false;
          break;
        }
        case Op::Abs: {
          if (z.hi < 0.0) return false;
          if (!narrow(in.a, {-z.hi - kIntervalSlack, z.hi + kIntervalSlack})) return false;
          break;
        }
        default:
          break;  // no projection for the remaining functions
      }
    }
    return true;
  }

 private:
  int emit(const Expr& e, std::unordered_map<const Expr::Node*, int>& seen) {
    if (auto it = seen.find(e.id()); it != seen.end()) return it->second;
    Instr in{e.op()};
    in.value = e.value();
    in.index = e.index();
    if (!e.children().empty()) in.a = emit(e.child(0), seen);
    if (e.children().size() > 1) in.b = emit(e.child(1), seen);
    code_.push_back(in);
    const int id = static_cast<int>(code_.size()) - 1;
    seen.emplace(e.id(), id);
    return id;
  }

  std::vector<Instr> code_;
  int root_ = -1;
};

}  // namespace sncbf
