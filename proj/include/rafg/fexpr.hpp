#pragma once

#include "rafg/error.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rafg::fexpr {

// Formula grammar (the contract shared with the oracle prompts):
//
//   expr        := conditional | or_expr
//   conditional := "if" expr "then" expr "else" expr
//   or_expr     := and_expr { "or" and_expr }
//   and_expr    := cmp { "and" cmp }
//   cmp         := sum [ ("<"|"<="|">"|">="|"=="|"!=") sum ]
//   sum         := term { ("+"|"-") term }
//   term        := factor { ("*"|"/") factor }
//   factor      := number | column | "(" expr ")"
//                | func "(" expr { "," expr } ")" | "-" factor
//   func        := "log" | "exp" | "sqrt" | "abs" | "min" | "max"
//   column      := identifier | "`" any-chars-except-backtick "`"
//
// log is the natural logarithm. All functions are row-wise; "and"/"or"
// short-circuit and conditionals evaluate only the taken branch, so
// comparisons can guard partial operations ("if b != 0 then a / b else 0").

enum class NodeKind { Number, Column, Unary, Binary, Compare, Logic, Call, Conditional };
enum class BinOp { Add, Sub, Mul, Div };
enum class CmpOp { Lt, Le, Gt, Ge, Eq, Ne };
enum class LogicOp { And, Or };
enum class Func { Log, Exp, Sqrt, Abs, Min, Max };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  NodeKind kind;
  double number = 0.0;          // Number
  std::string name;             // Column
  int op = 0;                   // BinOp / CmpOp / LogicOp / Func
  std::vector<ExprPtr> kids;    // operands; Conditional holds {cond, then, else}
};

struct FeatureExpr {
  ExprPtr ast;
  std::string source_text;
};

enum class OperationKind { Scaling, Transformation, Judgment };

inline constexpr std::size_t kMaxAstDepth = 64;

inline bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return a == b;
  if (a->kind != b->kind || a->op != b->op || a->name != b->name ||
      a->number != b->number || a->kids.size() != b->kids.size())
    return false;
  for (std::size_t i = 0; i < a->kids.size(); ++i)
    if (!structurally_equal(a->kids[i], b->kids[i])) return false;
  return true;
}

inline std::size_t ast_depth(const ExprPtr& e) {
  std::size_t deepest = 0;
  for (const auto& k : e->kids) deepest = std::max(deepest, ast_depth(k));
  return deepest + 1;
}

inline void collect_columns(const ExprPtr& e, std::set<std::string>& out) {
  if (e->kind == NodeKind::Column) out.insert(e->name);
  for (const auto& k : e->kids) collect_columns(k, out);
}

/// Distinct column names referenced by the expression.
inline std::set<std::string> free_columns(const FeatureExpr& e) {
  std::set<std::string> out;
  collect_columns(e.ast, out);
  return out;
}

namespace detail {

enum class TokKind { Number, Ident, Backquoted, Sym, End };

struct Token {
  TokKind kind;
  std::string text;
  double number = 0.0;
  std::size_t pos = 0;
};

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> toks;
  std::size_t i = 0;
  const std::size_t n = src.size();
  while (i < n) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_digit(c)) {
      ++i;
      while (i < n && is_digit(src[i])) ++i;
      if (i < n && src[i] == '.') {
        ++i;
        if (i >= n || !is_digit(src[i]))
          fail(Errc::SyntaxError, "expected digits after decimal point", i);
        while (i < n && is_digit(src[i])) ++i;
      }
      if (i < n && (src[i] == 'e' || src[i] == 'E')) {
        ++i;
        if (i < n && (src[i] == '+' || src[i] == '-')) ++i;
        if (i >= n || !is_digit(src[i]))
          fail(Errc::SyntaxError, "expected digits in exponent", i);
        while (i < n && is_digit(src[i])) ++i;
      }
      std::string text(src.substr(start, i - start));
      double v = 0.0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc{})
        fail(Errc::SyntaxError, "bad numeric literal: " + text, start);
      toks.push_back({TokKind::Number, std::move(text), v, start});
    } else if (is_ident_start(c)) {
      ++i;
      while (i < n && is_ident_char(src[i])) ++i;
      toks.push_back({TokKind::Ident, std::string(src.substr(start, i - start)), 0.0, start});
    } else if (c == '`') {
      ++i;
      while (i < n && src[i] != '`') ++i;
      if (i >= n) fail(Errc::SyntaxError, "unterminated backquoted name", start);
      std::string name(src.substr(start + 1, i - start - 1));
      ++i;
      if (name.empty()) fail(Errc::SyntaxError, "empty column name", start);
      toks.push_back({TokKind::Backquoted, std::move(name), 0.0, start});
    } else if (c == '<' || c == '>' || c == '=' || c == '!') {
      std::string sym(1, c);
      ++i;
      if (i < n && src[i] == '=') {
        sym += '=';
        ++i;
      }
      if (sym == "=" || sym == "!")
        fail(Errc::SyntaxError, "unknown operator '" + sym + "'", start);
      toks.push_back({TokKind::Sym, std::move(sym), 0.0, start});
    } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '(' ||
               c == ')' || c == ',') {
      toks.push_back({TokKind::Sym, std::string(1, c), 0.0, start});
      ++i;
    } else {
      fail(Errc::SyntaxError, "unexpected character '" + std::string(1, c) + "'", start);
    }
  }
  toks.push_back({TokKind::End, "", 0.0, n});
  return toks;
}

inline bool is_keyword(std::string_view s) {
  return s == "if" || s == "then" || s == "else" || s == "and" || s == "or";
}

inline bool lookup_func(std::string_view s, Func& out) {
  if (s == "log") out = Func::Log;
  else if (s == "exp") out = Func::Exp;
  else if (s == "sqrt") out = Func::Sqrt;
  else if (s == "abs") out = Func::Abs;
  else if (s == "min") out = Func::Min;
  else if (s == "max") out = Func::Max;
  else return false;
  return true;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  ExprPtr parse() {
    ExprPtr e = expr();
    if (peek().kind != TokKind::End)
      fail(Errc::SyntaxError, "unexpected trailing input", peek().pos);
    return e;
  }

 private:
  // Concrete nesting bound; the AST depth contract is checked after parsing.
  static constexpr int kMaxNesting = 256;

  const Token& peek() const { return toks_[i_]; }
  const Token& advance() { return toks_[i_++]; }

  bool at_sym(std::string_view s) const {
    return peek().kind == TokKind::Sym && peek().text == s;
  }
  bool at_ident(std::string_view s) const {
    return peek().kind == TokKind::Ident && peek().text == s;
  }
  void expect_sym(std::string_view s) {
    if (!at_sym(s))
      fail(Errc::SyntaxError, "expected '" + std::string(s) + "'", peek().pos);
    advance();
  }
  void expect_ident(std::string_view s) {
    if (!at_ident(s))
      fail(Errc::SyntaxError, "expected '" + std::string(s) + "'", peek().pos);
    advance();
  }

  static ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

  void enter() {
    if (++nesting_ > kMaxNesting)
      fail(Errc::DepthExceeded, "formula nesting exceeds parser limit", peek().pos);
  }
  void leave() { --nesting_; }

  ExprPtr expr() {
    enter();
    ExprPtr e;
    if (at_ident("if")) {
      advance();
      ExprPtr cond = expr();
      expect_ident("then");
      ExprPtr then_branch = expr();
      expect_ident("else");
      ExprPtr else_branch = expr();
      e = make({NodeKind::Conditional, 0.0, "", 0, {cond, then_branch, else_branch}});
    } else {
      e = or_expr();
    }
    leave();
    return e;
  }

  ExprPtr or_expr() {
    ExprPtr l = and_expr();
    while (at_ident("or")) {
      advance();
      ExprPtr r = and_expr();
      l = make({NodeKind::Logic, 0.0, "", static_cast<int>(LogicOp::Or), {l, r}});
    }
    return l;
  }

  ExprPtr and_expr() {
    ExprPtr l = cmp();
    while (at_ident("and")) {
      advance();
      ExprPtr r = cmp();
      l = make({NodeKind::Logic, 0.0, "", static_cast<int>(LogicOp::And), {l, r}});
    }
    return l;
  }

  ExprPtr cmp() {
    ExprPtr l = sum();
    if (peek().kind == TokKind::Sym) {
      CmpOp op;
      const std::string& s = peek().text;
      if (s == "<") op = CmpOp::Lt;
      else if (s == "<=") op = CmpOp::Le;
      else if (s == ">") op = CmpOp::Gt;
      else if (s == ">=") op = CmpOp::Ge;
      else if (s == "==") op = CmpOp::Eq;
      else if (s == "!=") op = CmpOp::Ne;
      else return l;
      advance();
      ExprPtr r = sum();
      return make({NodeKind::Compare, 0.0, "", static_cast<int>(op), {l, r}});
    }
    return l;
  }

  ExprPtr sum() {
    ExprPtr l = term();
    while (at_sym("+") || at_sym("-")) {
      BinOp op = peek().text == "+" ? BinOp::Add : BinOp::Sub;
      advance();
      ExprPtr r = term();
      l = make({NodeKind::Binary, 0.0, "", static_cast<int>(op), {l, r}});
    }
    return l;
  }

  ExprPtr term() {
    ExprPtr l = factor();
    while (at_sym("*") || at_sym("/")) {
      BinOp op = peek().text == "*" ? BinOp::Mul : BinOp::Div;
      advance();
      ExprPtr r = factor();
      l = make({NodeKind::Binary, 0.0, "", static_cast<int>(op), {l, r}});
    }
    return l;
  }

  ExprPtr factor() {
    const Token& t = peek();
    if (t.kind == TokKind::Number) {
      advance();
      return make({NodeKind::Number, t.number, "", 0, {}});
    }
    if (t.kind == TokKind::Backquoted) {
      advance();
      return make({NodeKind::Column, 0.0, t.text, 0, {}});
    }
    if (at_sym("-")) {
      advance();
      enter();
      ExprPtr k = factor();
      leave();
      return make({NodeKind::Unary, 0.0, "", 0, {k}});
    }
    if (at_sym("(")) {
      advance();
      enter();
      ExprPtr e = expr();
      leave();
      expect_sym(")");
      return e;
    }
    if (t.kind == TokKind::Ident) {
      if (is_keyword(t.text))
        fail(Errc::SyntaxError, "unexpected keyword '" + t.text + "'", t.pos);
      advance();
      if (at_sym("(")) {
        Func f;
        if (!lookup_func(t.text, f))
          fail(Errc::UnknownFunction, "unknown function '" + t.text + "'", t.pos);
        advance();
        enter();
        std::vector<ExprPtr> args;
        args.push_back(expr());
        while (at_sym(",")) {
          advance();
          args.push_back(expr());
        }
        leave();
        expect_sym(")");
        std::size_t arity = args.size();
        bool variadic = (f == Func::Min || f == Func::Max);
        if (variadic ? arity < 2 : arity != 1)
          fail(Errc::SyntaxError, "wrong argument count for '" + t.text + "'", t.pos);
        return make({NodeKind::Call, 0.0, t.text, static_cast<int>(f), std::move(args)});
      }
      return make({NodeKind::Column, 0.0, t.text, 0, {}});
    }
    fail(Errc::SyntaxError, "expected expression", t.pos);
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  int nesting_ = 0;
};

enum class ValueType { Num, Bool };

// Static typing: comparisons and and/or produce Bool and may appear only
// above arithmetic; everything else is Num.
inline ValueType type_check(const ExprPtr& e,
                            const std::set<std::string>* schema_names) {
  switch (e->kind) {
    case NodeKind::Number:
      return ValueType::Num;
    case NodeKind::Column:
      if (schema_names && !schema_names->count(e->name))
        fail(Errc::UnknownColumn, "unknown column: " + e->name);
      return ValueType::Num;
    case NodeKind::Unary:
      if (type_check(e->kids[0], schema_names) != ValueType::Num)
        fail(Errc::TypeError, "negation of a boolean expression");
      return ValueType::Num;
    case NodeKind::Binary:
      for (const auto& k : e->kids)
        if (type_check(k, schema_names) != ValueType::Num)
          fail(Errc::TypeError, "arithmetic on a boolean expression");
      return ValueType::Num;
    case NodeKind::Compare:
      for (const auto& k : e->kids)
        if (type_check(k, schema_names) != ValueType::Num)
          fail(Errc::TypeError, "comparison of a boolean expression");
      return ValueType::Bool;
    case NodeKind::Logic:
      for (const auto& k : e->kids)
        if (type_check(k, schema_names) != ValueType::Bool)
          fail(Errc::TypeError, "'and'/'or' on a numeric expression");
      return ValueType::Bool;
    case NodeKind::Call:
      for (const auto& k : e->kids)
        if (type_check(k, schema_names) != ValueType::Num)
          fail(Errc::TypeError, "function argument is boolean");
      return ValueType::Num;
    case NodeKind::Conditional:
      if (type_check(e->kids[0], schema_names) != ValueType::Bool)
        fail(Errc::TypeError, "conditional test must be boolean");
      if (type_check(e->kids[1], schema_names) != ValueType::Num ||
          type_check(e->kids[2], schema_names) != ValueType::Num)
        fail(Errc::TypeError, "conditional branches must be numeric");
      return ValueType::Num;
  }
  fail(Errc::TypeError, "unreachable node kind");
}

}  // namespace detail

/// Parses a formula string into an AST. Throws SyntaxError with a byte
/// offset, or DepthExceeded when the tree is deeper than 64.
inline FeatureExpr parse(const std::string& text) {
  if (trim(text).empty()) fail(Errc::SyntaxError, "empty formula", 0);
  detail::Parser p(text);
  FeatureExpr fx{p.parse(), text};
  if (ast_depth(fx.ast) > kMaxAstDepth)
    fail(Errc::DepthExceeded, "formula tree deeper than 64 levels");
  return fx;
}

/// Checks an expression against a schema: every referenced column must
/// exist, the tree must type-check, and at least one column must be read
/// (a feature that reads no data cannot describe the rows).
inline void validate(const FeatureExpr& e,
                     const std::vector<tabular::FeatureMeta>& schema) {
  std::set<std::string> names;
  for (const auto& m : schema) names.insert(m.name);
  detail::type_check(e.ast, &names);
  if (free_columns(e).empty())
    fail(Errc::NoColumnReference, "formula references no columns");
}

/// Classifies a validated expression: boolean root -> Judgment; otherwise
/// one distinct column -> Scaling, two or more -> Transformation.
inline OperationKind classify(const FeatureExpr& e,
                              const std::vector<tabular::FeatureMeta>& schema) {
  std::set<std::string> names;
  for (const auto& m : schema) names.insert(m.name);
  detail::ValueType root = detail::type_check(e.ast, &names);
  std::set<std::string> used = free_columns(e);
  if (used.empty())
    fail(Errc::NoColumnReference, "formula references no columns");
  if (root == detail::ValueType::Bool) return OperationKind::Judgment;
  return used.size() == 1 ? OperationKind::Scaling
                          : OperationKind::Transformation;
}

namespace detail {

inline double eval_row(const ExprPtr& e,
                       const std::vector<std::pair<const Expr*, const std::vector<double>*>>& bindings,
                       std::size_t row) {
  auto check_finite = [&](double v) {
    if (!std::isfinite(v))
      fail(Errc::NonFiniteResult,
           "formula produced a non-finite value at row " + std::to_string(row),
           row);
    return v;
  };
  switch (e->kind) {
    case NodeKind::Number:
      return e->number;
    case NodeKind::Column: {
      for (const auto& [node, values] : bindings)
        if (node == e.get()) return (*values)[row];
      fail(Errc::UnknownColumn, "unbound column: " + e->name);
    }
    case NodeKind::Unary:
      return check_finite(-eval_row(e->kids[0], bindings, row));
    case NodeKind::Binary: {
      double l = eval_row(e->kids[0], bindings, row);
      double r = eval_row(e->kids[1], bindings, row);
      double v = 0.0;
      switch (static_cast<BinOp>(e->op)) {
        case BinOp::Add: v = l + r; break;
        case BinOp::Sub: v = l - r; break;
        case BinOp::Mul: v = l * r; break;
        case BinOp::Div: v = l / r; break;
      }
      return check_finite(v);
    }
    case NodeKind::Compare: {
      double l = eval_row(e->kids[0], bindings, row);
      double r = eval_row(e->kids[1], bindings, row);
      bool v = false;
      switch (static_cast<CmpOp>(e->op)) {
        case CmpOp::Lt: v = l < r; break;
        case CmpOp::Le: v = l <= r; break;
        case CmpOp::Gt: v = l > r; break;
        case CmpOp::Ge: v = l >= r; break;
        case CmpOp::Eq: v = l == r; break;
        case CmpOp::Ne: v = l != r; break;
      }
      return v ? 1.0 : 0.0;
    }
    case NodeKind::Logic: {
      bool l = eval_row(e->kids[0], bindings, row) != 0.0;
      if (static_cast<LogicOp>(e->op) == LogicOp::And)
        return (l && eval_row(e->kids[1], bindings, row) != 0.0) ? 1.0 : 0.0;
      return (l || eval_row(e->kids[1], bindings, row) != 0.0) ? 1.0 : 0.0;
    }
    case NodeKind::Call: {
      std::vector<double> args;
      args.reserve(e->kids.size());
      for (const auto& k : e->kids) args.push_back(eval_row(k, bindings, row));
      double v = 0.0;
      switch (static_cast<Func>(e->op)) {
        case Func::Log: v = std::log(args[0]); break;
        case Func::Exp: v = std::exp(args[0]); break;
        case Func::Sqrt: v = std::sqrt(args[0]); break;
        case Func::Abs: v = std::fabs(args[0]); break;
        case Func::Min: v = *std::min_element(args.begin(), args.end()); break;
        case Func::Max: v = *std::max_element(args.begin(), args.end()); break;
      }
      return check_finite(v);
    }
    case NodeKind::Conditional:
      return eval_row(e->kids[0], bindings, row) != 0.0
                 ? eval_row(e->kids[1], bindings, row)
                 : eval_row(e->kids[2], bindings, row);
  }
  fail(Errc::TypeError, "unreachable node kind");
}

inline void bind_columns(
    const ExprPtr& e, const tabular::Dataset& d,
    std::vector<std::pair<const Expr*, const std::vector<double>*>>& bindings) {
  if (e->kind == NodeKind::Column)
    bindings.emplace_back(e.get(), &d.column(e->name).values);
  for (const auto& k : e->kids) bind_columns(k, d, bindings);
}

}  // namespace detail

/// Evaluates the formula for every row. Judgment expressions yield exactly
/// 0 or 1. Any non-finite arithmetic result aborts with the first offending
/// row index; evaluation is pure.
inline std::vector<double> evaluate(const FeatureExpr& e,
                                    const tabular::Dataset& d) {
  validate(e, d.schema());
  std::vector<std::pair<const Expr*, const std::vector<double>*>> bindings;
  detail::bind_columns(e.ast, d, bindings);
  std::vector<double> out(d.n_rows());
  for (std::size_t r = 0; r < d.n_rows(); ++r)
    out[r] = detail::eval_row(e.ast, bindings, r);
  return out;
}

namespace detail {

inline bool bare_renderable(const std::string& name) {
  if (name.empty() || !is_ident_start(name[0])) return false;
  for (char c : name)
    if (!is_ident_char(c)) return false;
  return !is_keyword(name);
}

inline bool needs_parens(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Number:
    case NodeKind::Column:
    case NodeKind::Call:
      return false;
    default:
      return true;
  }
}

inline std::string render_node(const ExprPtr& e);

inline std::string render_child(const ExprPtr& e) {
  std::string s = render_node(e);
  return needs_parens(e) ? "(" + s + ")" : s;
}

inline std::string render_node(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Number:
      return format_double(e->number);
    case NodeKind::Column:
      return bare_renderable(e->name) ? e->name : "`" + e->name + "`";
    case NodeKind::Unary:
      return "-" + render_child(e->kids[0]);
    case NodeKind::Binary: {
      const char* ops[] = {"+", "-", "*", "/"};
      return render_child(e->kids[0]) + " " + ops[e->op] + " " +
             render_child(e->kids[1]);
    }
    case NodeKind::Compare: {
      const char* ops[] = {"<", "<=", ">", ">=", "==", "!="};
      return render_child(e->kids[0]) + " " + ops[e->op] + " " +
             render_child(e->kids[1]);
    }
    case NodeKind::Logic: {
      const char* ops[] = {"and", "or"};
      return render_child(e->kids[0]) + " " + ops[e->op] + " " +
             render_child(e->kids[1]);
    }
    case NodeKind::Call: {
      std::string s = e->name + "(";
      for (std::size_t i = 0; i < e->kids.size(); ++i) {
        if (i) s += ", ";
        s += render_node(e->kids[i]);
      }
      return s + ")";
    }
    case NodeKind::Conditional:
      return "if " + render_node(e->kids[0]) + " then " +
             render_node(e->kids[1]) + " else " + render_node(e->kids[2]);
  }
  fail(Errc::TypeError, "unreachable node kind");
}

}  // namespace detail

/// Canonical text form: every composite operand is parenthesized, names that
/// are not plain identifiers are backquoted. parse(render(e)) reproduces the
/// tree structurally.
inline std::string render(const FeatureExpr& e) {
  return detail::render_node(e.ast);
}

}  // namespace rafg::fexpr
