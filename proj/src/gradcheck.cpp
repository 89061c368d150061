#include "ncomp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ncomp {
namespace {

double summed(const Value& v) {
  double s = 0.0;
  for (double d : v.data()) s += d;
  return s;
}

Value nudged(const Value& v, std::size_t i, double delta) {
  std::vector<double> d(v.data().begin(), v.data().end());
  d[i] += delta;
  return Value(v.elem_shape(), v.batch(), std::move(d));
}

void compare(GradCheckReport& rep, const std::string& name, std::size_t i, double ad, double fd, double tol) {
  double err = std::abs(fd - ad) / std::max({std::abs(ad), std::abs(fd), 1.0});
  if (std::isnan(err)) err = INFINITY;
  if (rep.coordinates++ == 0 || err > rep.max_rel_error) {
    rep.max_rel_error = err;
    rep.worst = name + "[" + std::to_string(i) + "]";
  }
  if (!(err <= tol)) rep.passed = false;
}

}  // namespace

GradCheckReport finite_diff_check(const CompiledProgram& prog, const Bindings& inputs, ParameterStore& params,
                                  double h, double tol) {
  const auto policy = SafeDomainPolicy::propagate_nan();
  TapedEval run = eval_with_tape(prog, inputs, params, policy);
  params.zero_grads();
  GradResult g = backward(run, Value::filled(run.value.elem_shape(), run.value.batch(), 1.0));

  GradCheckReport rep;
  for (const auto& [name, v] : inputs) {
    if (!g.input_grads.count(name)) continue;
    const Value& ad = g.input_grads.at(name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      Bindings plus = inputs, minus = inputs;
      plus[name] = nudged(v, i, h);
      minus[name] = nudged(v, i, -h);
      double fd = (summed(eval_program(prog, plus, params, policy)) - summed(eval_program(prog, minus, params, policy))) /
                  (2.0 * h);
      compare(rep, name, i, ad[i], fd, tol);
    }
  }
  for (const auto& [name, ad] : g.param_grads) {
    if (!params.at(name).trainable) continue;
    const Value original = params.value(name);
    for (std::size_t i = 0; i < original.size(); ++i) {
      params.set_value(name, nudged(original, i, h));
      double up = summed(eval_program(prog, inputs, params, policy));
      params.set_value(name, nudged(original, i, -h));
      double down = summed(eval_program(prog, inputs, params, policy));
      params.set_value(name, original);
      compare(rep, name, i, ad[i], (up - down) / (2.0 * h), tol);
    }
  }
  return rep;
}

GradCheckReport finite_diff_check(const CompiledProgram& prog, const Bindings& inputs, double h, double tol) {
  ParameterStore none;
  return finite_diff_check(prog, inputs, none, h, tol);
}

}  // namespace ncomp
