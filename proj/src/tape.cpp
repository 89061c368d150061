#include "ncomp/tape.hpp"

#include <cmath>

#include "ncomp/error.hpp"

namespace ncomp {

VarId Tape::push(Value v, TapeRecord rec) {
  VarId id = values_.size();
  values_.push_back(std::move(v));
  if (rec.kind != TapeOp::leaf) {
    rec.output = id;
    records_.push_back(std::move(rec));
  }
  return id;
}

VarId Tape::constant(Value v) { return push(std::move(v), {}); }

VarId Tape::input(const std::string& name, Value v) {
  auto it = inputs_.find(name);
  if (it != inputs_.end()) return it->second;
  VarId id = push(std::move(v), {});
  inputs_[name] = id;
  return id;
}

VarId Tape::param(ParameterStore& store, const std::string& name) {
  auto it = params_.find(name);
  if (it != params_.end()) return it->second.id;
  VarId id = push(store.value(name), {});
  params_[name] = {&store, id};
  return id;
}

VarId Tape::apply(PrimOp op, std::span<const VarId> args, const SafeDomainPolicy& policy, DomainSink* sink) {
  std::vector<Value> vals;
  vals.reserve(args.size());
  for (auto a : args) vals.push_back(values_.at(a));
  Value out = apply_primitive(op, vals, policy, sink);
  TapeRecord rec;
  rec.kind = TapeOp::prim;
  rec.op = op;
  rec.inputs.assign(args.begin(), args.end());
  return push(std::move(out), std::move(rec));
}

VarId Tape::pow_imm(VarId base, double exponent, const SafeDomainPolicy& policy, DomainSink* sink) {
  Value out = apply_pow_immediate(values_.at(base), exponent, policy, sink);
  TapeRecord rec;
  rec.kind = TapeOp::pow_imm;
  rec.op = PrimOp::pow;
  rec.inputs = {base};
  rec.immediate = exponent;
  return push(std::move(out), std::move(rec));
}

VarId Tape::select(VarId cond, VarId then_value, VarId else_value) {
  Value out = apply_select(values_.at(cond), values_.at(then_value), values_.at(else_value));
  TapeRecord rec;
  rec.kind = TapeOp::select;
  rec.op = PrimOp::if_;
  rec.inputs = {cond, then_value, else_value};
  return push(std::move(out), std::move(rec));
}

VarId Tape::relu(VarId x) {
  const Value& v = values_.at(x);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  TapeRecord rec;
  rec.kind = TapeOp::relu;
  rec.inputs = {x};
  return push(Value(v.elem_shape(), v.batch(), std::move(out)), std::move(rec));
}

VarId Tape::tanh(VarId x) {
  const Value& v = values_.at(x);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(v[i]);
  TapeRecord rec;
  rec.kind = TapeOp::tanh;
  rec.inputs = {x};
  return push(Value(v.elem_shape(), v.batch(), std::move(out)), std::move(rec));
}

VarId Tape::mean_all(VarId x) {
  const Value& v = values_.at(x);
  double s = 0.0;
  for (double d : v.data()) s += d;
  TapeRecord rec;
  rec.kind = TapeOp::mean_all;
  rec.inputs = {x};
  return push(Value::scalar(s / static_cast<double>(v.size())), std::move(rec));
}

VarId Tape::mse(VarId pred, const Value& target) {
  if (!values_.at(pred).same_shape(target)) {
    throw ShapeMismatch("mse: prediction shape " + shape_to_string(values_.at(pred).shape()) +
                        " differs from target shape " + shape_to_string(target.shape()));
  }
  VarId t = constant(target);
  VarId d = apply(PrimOp::sub, {pred, t}, SafeDomainPolicy::propagate_nan());
  VarId sq = apply(PrimOp::mul, {d, d}, SafeDomainPolicy::propagate_nan());
  return mean_all(sq);
}

void Tape::mark_loop_iteration() {
  TapeRecord rec;
  rec.kind = TapeOp::loop_iteration;
  records_.push_back(rec);
}

std::size_t Tape::loop_iterations() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.kind == TapeOp::loop_iteration;
  return n;
}

GradResult Tape::backward(VarId out) {
  const Value& v = values_.at(out);
  return backward(out, Value::filled(v.elem_shape(), v.batch(), 1.0));
}

GradResult Tape::backward(VarId out, const Value& seed, const GradRequest* request) {
  const Value& ov = values_.at(out);
  if (!ov.same_shape(seed)) {
    throw ShapeMismatch("seed shape " + shape_to_string(seed.shape()) + " differs from output shape " +
                        shape_to_string(ov.shape()));
  }
  grads_.assign(values_.size(), {});
  grads_[out].assign(seed.data().begin(), seed.data().end());
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->kind == TapeOp::loop_iteration) continue;
    if (grads_[it->output].empty()) continue;
    accumulate_vjp(*it, values_, grads_[it->output], grads_);
  }

  GradResult result;
  result.output = ov;
  for (const auto& [name, id] : inputs_) {
    if (request && !request->inputs.count(name)) continue;
    result.input_grads[name] = grad(id);
  }
  for (const auto& [name, leaf] : params_) {
    if (request && !request->params.count(name)) continue;
    Value g = grad(leaf.id);
    leaf.store->accumulate_grad(name, g);
    result.param_grads[name] = std::move(g);
  }
  return result;
}

Value Tape::grad(VarId id) const {
  const Value& v = values_.at(id);
  if (id >= grads_.size() || grads_[id].empty()) return Value::filled(v.elem_shape(), v.batch(), 0.0);
  return Value(v.elem_shape(), v.batch(), grads_[id]);
}

}  // namespace ncomp
