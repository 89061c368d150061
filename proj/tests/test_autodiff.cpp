#include <doctest.h>

#include <cmath>

#include "ncomp/executor.hpp"
#include "ncomp/gradcheck.hpp"
#include "ncomp/training.hpp"

using namespace ncomp;

namespace {

GradResult grad_of(const std::string& src, const Bindings& in, ParameterStore& p, const std::vector<std::string>& params = {}) {
  std::vector<std::string> names;
  for (const auto& [k, v] : in) names.push_back(k);
  const auto prog = compile(src, names, params);
  TapedEval run = eval_with_tape(prog, in, p);
  return backward(run, Value::filled(run.value.elem_shape(), run.value.batch(), 1.0));
}

}  // namespace

TEST_CASE("hand-checkable gradients") {
  ParameterStore none;
  CHECK(grad_of("(* x x)", {{"x", Value::scalar(3)}}, none).input_grads.at("x").item() == 6.0);

  ParameterStore g;
  g.set("G", Value::scalar(6.674));
  const auto r = grad_of("(/ (* G (* m1 m2)) (pow r 2))",
                         {{"m1", Value::scalar(1)}, {"m2", Value::scalar(1)}, {"r", Value::scalar(2)}}, g, {"G"});
  CHECK(r.param_grads.at("G").item() == 0.25);
  CHECK(g.grad("G").item() == 0.25);

  const auto n = grad_of("(norm v)", {{"v", Value::vector({3, 4})}}, none).input_grads.at("v");
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
}

TEST_CASE("pendulum gravity term against central differences") {
  ParameterStore p;
  p.set("g_L", Value::scalar(9.81));
  const auto prog = compile("(* (- 0 g_L) (sin theta))", {"theta"}, {"g_L"});
  TapedEval run = eval_with_tape(prog, {{"theta", Value::scalar(0)}}, p);
  const double g = backward(run, Value::scalar(1)).input_grads.at("theta").item();
  const double h = 1e-6;
  const double fd = (eval_program(prog, {{"theta", Value::scalar(h)}}, p).item() -
                     eval_program(prog, {{"theta", Value::scalar(-h)}}, p).item()) /
                    (2 * h);
  CHECK(g == doctest::Approx(-9.81));
  CHECK(std::abs(g - fd) <= 1e-6 * std::abs(fd));
}

TEST_CASE("finite difference checks") {
  const auto quad = compile("(+ (* a (* x x)) (+ (* b x) c))", {"a", "b", "c", "x"});
  const auto rep = finite_diff_check(
      quad, {{"a", Value::scalar(1.3)}, {"b", Value::scalar(-0.4)}, {"c", Value::scalar(2)}, {"x", Value::scalar(0.9)}});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-9);
  CHECK(rep.coordinates == 4);

  const auto comp = compile("(sin (exp (* 0.5 x)))", {"x"});
  for (double x = -2.0; x <= 2.0; x += 0.5) CHECK(finite_diff_check(comp, {{"x", Value::scalar(x)}}).max_rel_error < 1e-6);

  for (const char* src : {"(det M)", "(vsum (inv M))", "(vsum (matvec M v))", "(norm (matvec M v))"}) {
    const auto prog = compile(src, {"M", "v"});
    const Bindings in{{"M", Value::matrix(3, 3, {3, 0.2, -0.5, 0.1, 2.5, 0.3, -0.2, 0.4, 2.8})},
                      {"v", Value::vector({0.3, -1.1, 0.7})}};
    CHECK_MESSAGE(finite_diff_check(prog, in).passed, src);
  }
}

TEST_CASE("batched gradients sum over the batch for parameters") {
  ParameterStore p;
  p.set("k", Value::scalar(2));
  const auto r = grad_of("(* k x)", {{"x", Value::batch_of(3, {}, {1, 2, 3})}}, p, {"k"});
  CHECK(r.param_grads.at("k").item() == 6.0);
  CHECK(r.input_grads.at("x").data()[2] == 2.0);
}

TEST_CASE("gradients through loops and recursion") {
  ParameterStore none;
  const auto loop = grad_of("(loop ((i 0) (acc 1)) (if (< i 3) (recur (+ i 1) (* acc x)) acc))", {{"x", Value::scalar(2)}}, none);
  CHECK(loop.input_grads.at("x").item() == 12.0);
  const auto rec = grad_of("(letrec ((h (n) (if (<= n 0) x (+ (* x (h (- n 1))) 1)))) (h 2))", {{"x", Value::scalar(2)}}, none);
  // x^3 + x + 1
  CHECK(rec.input_grads.at("x").item() == 13.0);
}

TEST_CASE("frozen parameters receive no update") {
  ParameterStore p;
  p.set("a", Value::scalar(1), false);
  p.set("b", Value::scalar(1));
  const auto prog = compile("(* a b x)", {"x"}, {"a", "b"});
  TapedEval run = eval_with_tape(prog, {{"x", Value::scalar(3)}}, p);
  CHECK(backward(run, Value::scalar(1)).param_grads.at("b").item() == 3.0);
  AdamState st;
  adam_step(p, st, 0.1);
  CHECK(p.scalar("a") == 1.0);
  CHECK(p.scalar("b") != 1.0);
}
