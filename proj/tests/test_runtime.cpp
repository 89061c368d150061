#include <doctest.h>

#include <cmath>

#include "ncomp/executor.hpp"
#include "ncomp/interpreter.hpp"
#include "ncomp/runtime.hpp"

using namespace ncomp;

namespace {

Value apply(PrimOp op, std::vector<Value> args, SafeDomainPolicy policy = {}) {
  return apply_primitive(op, args, policy);
}

std::vector<double> flat(const Value& v) { return {v.data().begin(), v.data().end()}; }

}  // namespace

TEST_CASE("vector and matrix primitives") {
  const Value a = Value::vector({1, 2, 3}), b = Value::vector({4, 5, 6});
  CHECK(apply(PrimOp::dot, {a, b}).item() == 32.0);
  CHECK(flat(apply(PrimOp::cross, {Value::vector({1, 0, 0}), Value::vector({0, 1, 0})})) == std::vector<double>{0, 0, 1});
  CHECK(flat(apply(PrimOp::matvec, {apply(PrimOp::eye, {Value::scalar(3)}), a})) == flat(a));
  CHECK(apply(PrimOp::norm, {Value::vector({3, 4})}).item() == 5.0);

  const Value o = apply(PrimOp::outer, {Value::vector({1, 2}), Value::vector({3, 4, 5})});
  CHECK(o.elem_shape() == Shape{2, 3});
  CHECK(flat(o) == std::vector<double>{3, 4, 5, 6, 8, 10});

  const Value m = Value::matrix(2, 2, {4, 7, 2, 6});
  CHECK(apply(PrimOp::det, {m}).item() == doctest::Approx(10.0));
  const Value prod = apply(PrimOp::matmul, {m, apply(PrimOp::inv, {m})});
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod[i] == doctest::Approx(i % 3 == 0 ? 1.0 : 0.0));
  CHECK(apply(PrimOp::trace, {m}).item() == 10.0);
  CHECK(apply(PrimOp::vlen, {a}).item() == 3.0);
  CHECK(apply(PrimOp::ref, {a, Value::scalar(1)}).item() == 2.0);
}

TEST_CASE("batched dot matches per-element evaluation") {
  const Value x = Value::batch_of(2, {2}, {1, 0, 0, 1});
  const Value y = Value::batch_of(2, {2}, {1, 0, 1, 0});
  const Value d = apply(PrimOp::dot, {x, y});
  REQUIRE(d.batch() == std::optional<std::size_t>{2});
  for (std::size_t k = 0; k < 2; ++k) CHECK(d[k] == apply(PrimOp::dot, {x.element(k), y.element(k)}).item());
  CHECK(flat(d) == std::vector<double>{1, 0});
}

TEST_CASE("broadcasting an unbatched argument") {
  const Value xs = Value::batch_of(3, {}, {1, 2, 3});
  CHECK(flat(apply(PrimOp::mul, {xs, Value::scalar(2)})) == std::vector<double>{2, 4, 6});
  CHECK_THROWS_AS(apply(PrimOp::add, {xs, Value::batch_of(2, {}, {1, 2})}), ShapeMismatch);
  CHECK_THROWS_AS(apply(PrimOp::dot, {Value::vector({1, 2}), Value::vector({1, 2, 3})}), ShapeMismatch);
}

TEST_CASE("safe domain policies") {
  CHECK_THROWS_AS(apply(PrimOp::sqrt, {Value::scalar(-1)}), DomainViolation);
  CHECK_THROWS_AS(apply(PrimOp::log, {Value::scalar(0)}), DomainViolation);
  CHECK(std::isnan(apply(PrimOp::sqrt, {Value::scalar(-1)}, SafeDomainPolicy::propagate_nan()).item()));
  CHECK_THROWS_AS(apply(PrimOp::inv, {Value::matrix(2, 2, {1, 2, 2, 4})}), SingularMatrix);
}

TEST_CASE("select") {
  const Value c = Value::batch_of(2, {}, {1, 0});
  const Value out = apply_select(c, Value::batch_of(2, {}, {10, 10}), Value::batch_of(2, {}, {20, 20}));
  CHECK(flat(out) == std::vector<double>{10, 20});
  CHECK(cond_state(c) == CondState::mixed);
  CHECK(cond_state(Value::scalar(1)) == CondState::all_true);
}

TEST_CASE("program evaluation") {
  const auto grav = compile("(/ (* G (* m1 m2)) (pow r 2))", {"m1", "m2", "r"}, {"G"});
  ParameterStore p;
  p.set("G", Value::scalar(6.674));
  CHECK(eval_program(grav, {{"m1", Value::scalar(1)}, {"m2", Value::scalar(1)}, {"r", Value::scalar(1)}}, p).item() ==
        6.674);
  CHECK_THROWS_AS(eval_program(grav, {{"m1", Value::scalar(1)}}, p), MissingInput);
}

TEST_CASE("interpreter") {
  const Bindings none;
  CHECK(interpret_source("(+ 1 2)", none).item() == 3.0);
  CHECK(interpret_source("(pow 2 10)", none).item() == 1024.0);
  CHECK(interpret_source("(vsum [1 2 3])", none).item() == 6.0);
  CHECK_THROWS_AS(interpret_source("(+ q 1)", none), UnboundVariable);
}
