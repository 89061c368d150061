#include <doctest.h>

#include "ncomp/compiler.hpp"
#include "ncomp/executor.hpp"
#include "ncomp/interpreter.hpp"

using namespace ncomp;

namespace {

ComputeGraph graph_of(const std::string& src, const std::vector<std::string>& in, const std::vector<std::string>& pa) {
  return build_graph(lower_tail_calls(to_anf(*parse_source(src))), in, pa);
}

}  // namespace

TEST_CASE("node counts") {
  CHECK(graph_of("(* (+ x 1) (- y 2))", {"x", "y"}, {}).node_count() == 7);
  CHECK(graph_of("(* h f)", {"f"}, {"h"}).node_count() == 3);
  CHECK(graph_of("(/ (* G (* m1 m2)) (pow r 2))", {"m1", "m2", "r"}, {"G"}).node_count() == 8);
}

TEST_CASE("toposort follows creation order on ties") {
  const ComputeGraph g = graph_of("(* (+ x 1) (- y 2))", {"x", "y"}, {});
  std::vector<std::string> order;
  for (auto id : toposort(g)) {
    const auto& n = g.nodes[id];
    order.push_back(n.kind == NodeKind::prim ? std::string(prim_name(n.op)) : n.kind == NodeKind::constant ? "const" : n.name);
  }
  CHECK(order == std::vector<std::string>{"const", "x", "+", "y", "const", "-", "*"});
  CHECK(toposort(graph_of("3", {}, {})).size() == 1);
}

TEST_CASE("toposort rejects cycles") {
  ComputeGraph g = graph_of("(+ x x)", {"x"}, {});
  g.nodes[0].operands.push_back(g.nodes.size() - 1);
  CHECK_THROWS_AS(toposort(g), CycleDetected);
}

TEST_CASE("two-operation program disassembles to seven slots") {
  const auto prog = compile("(* (+ x 1) (- y 2))", {"x", "y"});
  CHECK(prog.program.slot_count == 7);
  const std::string listing = disassemble(prog);
  CHECK(listing.find("slot[2] = slot[1] + slot[0]") != std::string::npos);
  CHECK(listing.find("slot[6] = slot[2] * slot[5]") != std::string::npos);
  CHECK(eval_program(prog, {{"x", Value::scalar(2)}, {"y", Value::scalar(5)}}).item() == 9.0);
}

TEST_CASE("compile") {
  const auto planck = compile("(* h f)", {"f"}, {"h"});
  CHECK(planck.program.param_slots.size() == 1);
  CHECK(trainable_count(planck) == 1);

  const auto id = compile("x", {"x"});
  CHECK(eval_program(id, {{"x", Value::scalar(4.25)}}).item() == 4.25);

  const auto heat = compile("(+ u (scale (* dt alpha) (matvec L u)))", {"u", "L", "dt"}, {"alpha"});
  ParameterStore p;
  p.set("alpha", Value::scalar(0.01));
  std::vector<double> eye(100, 0.0);
  for (int i = 0; i < 10; ++i) eye[i * 10 + i] = 1.0;
  const Value out = eval_program(
      heat, {{"u", Value::vector(std::vector<double>(10, 0.0))}, {"L", Value::matrix(10, 10, eye)}, {"dt", Value::scalar(0.1)}},
      p);
  CHECK(out.elem_shape() == Shape{10});
  for (double v : out.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(compile("(+ x z)", {"x"}), ScopeError);
}

TEST_CASE("conditionals") {
  const auto abs_prog = compile("(if (> x 0) x (- 0 x))", {"x"});
  CHECK(eval_program(abs_prog, {{"x", Value::scalar(-3)}}).item() == 3.0);

  const auto sel = compile("(if c a b)", {"c", "a", "b"});
  const Value out = eval_program(sel, {{"c", Value::batch_of(2, {}, {1, 0})},
                                       {"a", Value::batch_of(2, {}, {10, 10})},
                                       {"b", Value::batch_of(2, {}, {20, 20})}});
  CHECK(out.data()[0] == 10.0);
  CHECK(out.data()[1] == 20.0);

  const auto countdown = compile("(loop ((n k)) (if (> n 0) (recur (- n 1)) n))", {"k"});
  CHECK(eval_program(countdown, {{"k", Value::scalar(0)}}).item() == 0.0);
  CHECK(eval_program(countdown, {{"k", Value::scalar(7)}}).item() == 0.0);
}

TEST_CASE("loops and recursion compile") {
  const Bindings none;
  CHECK(eval_program(compile("(loop ((i 0) (acc 0)) (if (< i 10) (recur (+ i 1) (+ acc i)) acc))", {}), none).item() ==
        45.0);
  const auto fib = "(letrec ((fib (n) (if (< n 2) n (+ (fib (- n 1)) (fib (- n 2)))))) (fib 10))";
  CHECK(eval_program(compile(fib, {}), none).item() == 55.0);

  const auto deep = "(letrec ((d (n) (if (<= n 0) 0 (+ 1 (d (- n 1)))))) (d k))";
  CompileConfig small;
  small.max_recursion_depth = 100;
  const auto prog = compile(deep, {"k"}, {}, small);
  CHECK(eval_program(prog, {{"k", Value::scalar(50)}}).item() == 50.0);
  CHECK_THROWS_AS(eval_program(prog, {{"k", Value::scalar(500)}}), DepthLimitExceeded);

  const auto def = compile(deep, {"k"});
  CHECK(eval_program(def, {{"k", Value::scalar(9998)}}).item() == 9998.0);
  CHECK_THROWS_AS(eval_program(def, {{"k", Value::scalar(10001)}}), DepthLimitExceeded);
}

TEST_CASE("compiled matches the interpreter") {
  const Bindings env{{"x", Value::scalar(0.7)}, {"y", Value::scalar(-1.3)}};
  for (const char* src : {"(+ (* x x) (sin y))", "(pow (abs y) 1.5)", "(max x (min y 0))", "(exp (/ x (+ 2 y)))",
                          "(let* ((a (+ x 1)) (b (* a a))) (- b a))", "(begin (+ x 1) (* x y))"}) {
    CHECK(eval_program(compile(src, {"x", "y"}), env).item() == interpret_source(src, env).item());
  }
}
