#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ncomp/error.hpp"
#include "ncomp/primitives.hpp"

namespace ncomp {

enum class TokenKind { lparen, rparen, lbracket, rbracket, symbol, number };

struct Token {
  TokenKind kind;
  std::string text;
  SourcePos pos;
  double number = 0.0;  // set for TokenKind::number
};

std::vector<Token> tokenize(std::string_view source);

struct Ast;
using AstPtr = std::shared_ptr<const Ast>;

struct Binding {
  std::string name;
  AstPtr expr;
};

namespace ast {
struct Const {
  double value;
};
struct Var {
  std::string name;
};
/// Parallel bindings: every right-hand side sees only the enclosing scope.
struct Let {
  std::vector<Binding> bindings;
  AstPtr body;
};
struct If {
  AstPtr cond, then_branch, else_branch;
};
struct Prim {
  PrimOp op;
  std::vector<AstPtr> args;
};
struct Loop {
  std::vector<Binding> vars;
  AstPtr body;
};
struct Recur {
  std::vector<AstPtr> args;
};
struct Letrec {
  std::string name;
  std::vector<std::string> params;
  AstPtr fn_body;
  AstPtr body;
};
struct Call {
  std::string name;
  std::vector<AstPtr> args;
};
}  // namespace ast

using AstNode = std::variant<ast::Const, ast::Var, ast::Let, ast::If, ast::Prim, ast::Loop, ast::Recur,
                             ast::Letrec, ast::Call>;

struct Ast {
  AstNode node;
  SourcePos pos;
};

AstPtr make_ast(AstNode node, SourcePos pos = {});

/// Surface forms:
///   (let ((a e) ...) body)   (let* ((a e) ...) body)   (begin e ... last)
///   (loop ((i init) ...) body) with (recur e ...) in tail position
///   (letrec ((f (p ...) fbody)) body) with calls written (f e ...) or (call f e ...)
///   [a b c] is (vec a b c); (- x) is (- 0 x)
AstPtr parse(const std::vector<Token>& tokens);
AstPtr parse_source(std::string_view source);

/// Re-parseable source text.
std::string pretty_print(const Ast& ast);

/// Ignores source positions.
bool structurally_equal(const Ast& a, const Ast& b);

/// Number of Prim nodes (the binding count ANF will produce for them).
std::size_t count_prims(const Ast& ast);
std::size_t count_nodes(const Ast& ast);

/// Every Var and Call must be bound by an enclosing form or be a declared input/param.
/// Function bodies see only their own parameters, the function itself and the declarations.
void scope_check(const Ast& ast, const std::vector<std::string>& inputs, const std::vector<std::string>& params);

}  // namespace ncomp
