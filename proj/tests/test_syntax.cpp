#include <doctest.h>

#include "ncomp/syntax.hpp"

using namespace ncomp;

namespace {

std::vector<TokenKind> kinds(const std::string& src) {
  std::vector<TokenKind> out;
  for (const auto& t : tokenize(src)) out.push_back(t.kind);
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  using K = TokenKind;
  CHECK(kinds("(+ x 1)") == std::vector<K>{K::lparen, K::symbol, K::symbol, K::number, K::rparen});
  CHECK(kinds("[1 2 3]") == std::vector<K>{K::lbracket, K::number, K::number, K::number, K::rbracket});
  const auto toks = tokenize("(* (+ x 1) (- y 2))");
  CHECK(toks.size() == 13);
  CHECK(toks.back().kind == K::rparen);
  CHECK(tokenize("2.5e-3")[0].number == 2.5e-3);
  CHECK(tokenize("; comment only\nx").size() == 1);
}

TEST_CASE("brackets desugar to vec") {
  const auto ast = parse_source("[1 2 3]");
  const auto* p = std::get_if<ast::Prim>(&ast->node);
  REQUIRE(p);
  CHECK(p->op == PrimOp::vec);
  REQUIRE(p->args.size() == 3);
  CHECK(std::get<ast::Const>(p->args[2]->node).value == 3.0);
}

TEST_CASE("parse let and nested prims") {
  const auto let = parse_source("(let ((a 2)) a)");
  const auto& l = std::get<ast::Let>(let->node);
  REQUIRE(l.bindings.size() == 1);
  CHECK(l.bindings[0].name == "a");
  CHECK(std::get<ast::Var>(l.body->node).name == "a");

  const auto fig = parse_source("(* (+ x 1) (- y 2))");
  const auto& mul = std::get<ast::Prim>(fig->node);
  CHECK(mul.op == PrimOp::mul);
  CHECK(std::get<ast::Prim>(mul.args[0]->node).op == PrimOp::add);
  CHECK(std::get<ast::Prim>(mul.args[1]->node).op == PrimOp::sub);
  CHECK(count_prims(*fig) == 3);
}

TEST_CASE("pretty print round trips") {
  for (const char* src : {"(* (+ x 1) (- y 2))", "(let ((a 2) (b x)) (+ a b))", "(if (> x 0) x (- 0 x))",
                          "(loop ((i 0) (acc 0)) (if (< i 3) (recur (+ i 1) (+ acc i)) acc))"}) {
    const auto ast = parse_source(src);
    CHECK(structurally_equal(*ast, *parse_source(pretty_print(*ast))));
  }
}

TEST_CASE("syntax errors carry positions") {
  CHECK_THROWS_AS(parse_source("(+ x"), ParseError);
  CHECK_THROWS_AS(parse_source(")"), ParseError);
  CHECK_THROWS_AS(tokenize("(+ x #)"), LexError);
  CHECK_THROWS_AS(parse_source("(frobnicate x)"), Error);
  try {
    parse_source("(+ 1\n  )) ");
    FAIL("expected a parse error");
  } catch (const PositionedError& e) {
    CHECK(e.position().line == 2);
  }
}

TEST_CASE("scope check") {
  CHECK_NOTHROW(scope_check(*parse_source("(* h f)"), {"f"}, {"h"}));
  CHECK_THROWS_AS(scope_check(*parse_source("(* h f)"), {"f"}, {}), ScopeError);
  CHECK_NOTHROW(scope_check(*parse_source("(let ((a x)) (* a a))"), {"x"}, {}));
}
