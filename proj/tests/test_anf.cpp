#include <doctest.h>

#include "ncomp/anf.hpp"
#include "ncomp/interpreter.hpp"
#include "ncomp/loop_lowering.hpp"

using namespace ncomp;

namespace {

const anf::PrimApp& prim(const AnfBinding& b) { return std::get<anf::PrimApp>(b.rhs); }

}  // namespace

TEST_CASE("two-operation program flattens to three temps") {
  const AnfProgram p = to_anf(*parse_source("(* (+ x 1) (- y 2))"));
  REQUIRE(p.main.bindings.size() == 3);
  CHECK(p.main.bindings[0].temp == "__t0");
  CHECK(prim(p.main.bindings[0]).op == PrimOp::add);
  CHECK(prim(p.main.bindings[0]).args == std::vector<Trivial>{Trivial::var("x"), Trivial::constant(1)});
  CHECK(p.main.bindings[1].temp == "__t1");
  CHECK(prim(p.main.bindings[1]).op == PrimOp::sub);
  CHECK(prim(p.main.bindings[2]).args == std::vector<Trivial>{Trivial::var("__t0"), Trivial::var("__t1")});
  CHECK(p.main.result == Trivial::var(p.main.bindings[2].temp));
}

TEST_CASE("trivial programs need no bindings") {
  const AnfProgram p = to_anf(*parse_source("x"));
  CHECK(p.main.bindings.empty());
  CHECK(p.main.result == Trivial::var("x"));
}

TEST_CASE("anf preserves meaning") {
  const auto src = "(sin (cos z))";
  const AnfProgram p = to_anf(*parse_source(src));
  REQUIRE(p.main.bindings.size() == 2);
  CHECK(prim(p.main.bindings[0]).op == PrimOp::cos);
  CHECK(prim(p.main.bindings[1]).op == PrimOp::sin);
  for (double z : {0.0, 1.0, -2.0}) {
    const Bindings env{{"z", Value::scalar(z)}};
    CHECK(interpret_ast(*anf_to_ast(p), env).item() == interpret_source(src, env).item());
  }
}

TEST_CASE("let names alias the bound temp") {
  const AnfProgram p = to_anf(*parse_source("(let ((a (+ x 1))) (* a a))"));
  CHECK(p.main.bindings.size() == 2);
  CHECK(count_prim_apps(p) == 2);
}

TEST_CASE("fresh temps") {
  TempCounter c;
  CHECK(c.fresh() == "__t0");
  CHECK(c.fresh() == "__t1");
  CHECK(c.fresh() != c.fresh());
}

TEST_CASE("tail calls lower to loops") {
  const Bindings none;
  const auto countdown = "(letrec ((f (n) (if (> n 0) (f (- n 1)) n))) (f 5))";
  const AnfProgram lowered = lower_tail_calls(to_anf(*parse_source(countdown)));
  REQUIRE(lowered.functions.size() == 1);
  CHECK(lowered.functions[0].lowered);
  CHECK(recursive_functions(lowered, kDefaultMaxRecursionDepth).empty());
  CHECK(interpret_source(countdown, none).item() == 0.0);

  CHECK(interpret_source("(loop ((i 0) (acc 0)) (if (< i 10) (recur (+ i 1) (+ acc i)) acc))", none).item() == 45.0);

  const auto fib = "(letrec ((fib (n) (if (< n 2) n (+ (fib (- n 1)) (fib (- n 2)))))) (fib 10))";
  const AnfProgram kept = lower_tail_calls(to_anf(*parse_source(fib)));
  CHECK_FALSE(kept.functions[0].lowered);
  CHECK(recursive_functions(kept, kDefaultMaxRecursionDepth).size() == 1);
  CHECK(interpret_source(fib, none).item() == 55.0);
}

TEST_CASE("recur outside a loop tail is rejected") {
  CHECK_THROWS_AS(lower_tail_calls(to_anf(*parse_source("(loop ((i 0)) (+ 1 (recur i)))"))), Error);
}

TEST_CASE("depth limit") {
  RecursiveFn fn{"f", {}, {}, 1000};
  CHECK_NOTHROW(check_depth(fn, 0));
  CHECK_THROWS_AS(check_depth(fn, 1000), DepthLimitExceeded);
  CHECK(RecursiveFn{}.max_depth == 10000);
}
