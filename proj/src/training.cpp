#include "ncomp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ncomp/error.hpp"

namespace ncomp {
namespace {

const SafeDomainPolicy kNan = SafeDomainPolicy::propagate_nan();

VarId scaled(Tape& tape, double c, VarId x) { return tape.apply(PrimOp::mul, {tape.constant(Value::scalar(c)), x}, kNan); }

VarId component(Tape& tape, VarId state, std::size_t i) {
  return tape.apply(PrimOp::ref, {state, tape.constant(Value::scalar(static_cast<double>(i)))}, kNan);
}

}  // namespace

void adam_step(ParameterStore& store, AdamState& state, double lr) {
  const AdamConfig& c = state.config;
  if (lr < 0.0) lr = c.lr;
  for (const auto& name : store.names()) {
    const ParamEntry& e = store.at(name);
    if (e.trainable && !e.has_grad) throw MissingGradient("no gradient for parameter '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& name : store.names()) {
    const ParamEntry& e = store.at(name);
    if (!e.trainable) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    const std::size_t n = e.value.size();
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    std::vector<double> p(e.value.data().begin(), e.value.data().end());
    for (std::size_t i = 0; i < n; ++i) {
      const double g = e.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
    store.set_value(name, Value(e.value.elem_shape(), e.value.batch(), std::move(p)));
  }
}

double cosine_lr(double lr_start, double lr_end, std::size_t epoch, std::size_t epochs) {
  if (epochs <= 1) return lr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * frac));
}

MseResult mse_loss(const Value& pred, const Value& target) {
  if (!pred.same_shape(target)) {
    throw ShapeMismatch("mse: prediction shape " + shape_to_string(pred.shape()) + " differs from target shape " +
                        shape_to_string(target.shape()));
  }
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  std::vector<double> seed(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
    seed[i] = 2.0 * d / n;
  }
  return {Value::scalar(s / n), Value(pred.elem_shape(), pred.batch(), std::move(seed))};
}

Value add_noise(const Value& v, double level, Rng& rng) {
  if (level == 0.0) return v;
  std::normal_distribution<double> noise(0.0, level);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * (1.0 + noise(rng));
  return Value(v.elem_shape(), v.batch(), std::move(out));
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

MlpModel make_mlp(ParameterStore& store, std::vector<std::size_t> sizes, Activation act, const std::string& prefix,
                  Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  MlpModel model{std::move(sizes), act, prefix};
  for (std::size_t l = 0; l < model.layers(); ++l) {
    const std::size_t in = model.sizes[l], out = model.sizes[l + 1];
    const double bound = act == Activation::relu ? std::sqrt(6.0 / static_cast<double>(in))
                                                 : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (double& x : w) x = u(rng);
    store.set(model.weight(l), Value::matrix(out, in, std::move(w)));
    store.set(model.bias(l), Value::vector(std::vector<double>(out, 0.0)));
  }
  return model;
}

VarId mlp_forward(Tape& tape, const MlpModel& model, ParameterStore& store, VarId x) {
  const Value& xv = tape.value(x);
  if (xv.elem_shape().size() != 1 || xv.elem_shape()[0] != model.sizes.front()) {
    throw ShapeMismatch("mlp input has element shape " + shape_to_string(xv.elem_shape()) + ", expected [" +
                        std::to_string(model.sizes.front()) + "]");
  }
  VarId h = x;
  for (std::size_t l = 0; l < model.layers(); ++l) {
    VarId w = tape.param(store, model.weight(l));
    VarId b = tape.param(store, model.bias(l));
    h = tape.apply(PrimOp::add, {tape.apply(PrimOp::matvec, {w, h}, kNan), b}, kNan);
    if (l + 1 < model.layers()) h = model.activation == Activation::relu ? tape.relu(h) : tape.tanh(h);
  }
  return h;
}

Value mlp_predict(const MlpModel& model, ParameterStore& store, const Value& x) {
  Tape tape;
  return tape.value(mlp_forward(tape, model, store, tape.constant(x)));
}

OdeSystem compiled_system(std::vector<const CompiledProgram*> components, std::vector<std::string> state_names,
                          ParameterStore& store) {
  if (components.size() != state_names.size()) throw ConfigError("one compiled program per state component");
  OdeSystem sys;
  sys.state_dim = components.size();
  sys.rhs = [components = std::move(components), names = std::move(state_names), &store](Tape& tape, VarId s) {
    std::map<std::string, VarId> ids;
    for (std::size_t i = 0; i < names.size(); ++i) ids[names[i]] = component(tape, s, i);
    std::vector<VarId> outs;
    for (const auto* prog : components) outs.push_back(eval_on_tape(tape, *prog, ids, store, kNan));
    return tape.apply(PrimOp::vec, outs, kNan);
  };
  return sys;
}

OdeSystem mlp_system(const MlpModel& model, ParameterStore& store) {
  OdeSystem sys;
  sys.state_dim = model.sizes.back();
  sys.rhs = [model, &store](Tape& tape, VarId s) { return mlp_forward(tape, model, store, s); };
  return sys;
}

OdeSystem hybrid_system(OdeSystem a, OdeSystem b) {
  if (a.state_dim != b.state_dim) throw ShapeMismatch("hybrid right-hand sides disagree on state size");
  OdeSystem sys;
  sys.state_dim = a.state_dim;
  sys.rhs = [a = std::move(a), b = std::move(b)](Tape& tape, VarId s) {
    return tape.apply(PrimOp::add, {a.rhs(tape, s), b.rhs(tape, s)}, kNan);
  };
  return sys;
}

VarId rk4_step(Tape& tape, const OdeSystem& sys, VarId state, double dt) {
  auto along = [&](double c, VarId k) { return tape.apply(PrimOp::add, {state, scaled(tape, c, k)}, kNan); };
  VarId k1 = sys.rhs(tape, state);
  VarId k2 = sys.rhs(tape, along(dt / 2.0, k1));
  VarId k3 = sys.rhs(tape, along(dt / 2.0, k2));
  VarId k4 = sys.rhs(tape, along(dt, k3));
  VarId sum = tape.apply(PrimOp::add, {k1, scaled(tape, 2.0, k2), scaled(tape, 2.0, k3), k4}, kNan);
  return along(dt / 6.0, sum);
}

Value rk4_step(const OdeSystem& sys, const Value& state, double dt) {
  Tape tape;
  return tape.value(rk4_step(tape, sys, tape.constant(state), dt));
}

std::vector<Value> integrate(const OdeSystem& sys, const Value& initial, double dt, std::size_t steps,
                             std::size_t substeps) {
  std::vector<Value> out{initial};
  Value s = initial;
  const double h = dt / static_cast<double>(substeps);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < substeps; ++j) s = rk4_step(sys, s, h);
    out.push_back(s);
  }
  return out;
}

VarId multiple_shooting_loss(Tape& tape, const OdeSystem& sys, const ShootingConfig& cfg) {
  if (cfg.segment_length == 0 || cfg.substeps == 0) throw ConfigError("segment length and substeps must be positive");
  struct Segment {
    const std::vector<Value>* obs;
    std::size_t start;
  };
  // Segments of equal length are integrated together as one batch.
  std::map<std::size_t, std::vector<Segment>> by_length;
  std::size_t compared = 0;
  for (const auto& obs : cfg.trajectories) {
    for (std::size_t i = 0; i + 1 < obs.size(); i += cfg.segment_length) {
      const std::size_t len = std::min(cfg.segment_length, obs.size() - 1 - i);
      by_length[len].push_back({&obs, i});
      compared += len * obs[i].size();
    }
  }
  if (compared == 0) throw EmptyObservations("multiple shooting needs a trajectory with two or more observations");
  const double h = cfg.dt / static_cast<double>(cfg.substeps);

  std::vector<VarId> terms;
  for (const auto& [len, segs] : by_length) {
    std::vector<Value> first;
    for (const auto& sg : segs) first.push_back((*sg.obs)[sg.start]);
    const double weight = static_cast<double>(segs.size() * first[0].size()) / static_cast<double>(compared);
    VarId s = tape.constant(Value::stack(first));
    for (std::size_t k = 1; k <= len; ++k) {
      for (std::size_t j = 0; j < cfg.substeps; ++j) s = rk4_step(tape, sys, s, h);
      std::vector<Value> target;
      for (const auto& sg : segs) target.push_back((*sg.obs)[sg.start + k]);
      terms.push_back(scaled(tape, weight, tape.mse(s, Value::stack(target))));
    }
  }
  return terms.size() == 1 ? terms[0] : tape.apply(PrimOp::add, terms, kNan);
}

std::vector<double> train_loop(ParameterStore& store, const TrainConfig& cfg,
                               const std::function<VarId(Tape&)>& loss_fn) {
  AdamState adam;
  adam.config.lr = cfg.lr_start;
  std::vector<double> curve;
  curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    store.zero_grads();
    Tape tape;
    VarId loss = loss_fn(tape);
    const double value = tape.value(loss).item();
    if (!std::isfinite(value)) throw NonFiniteLoss(epoch);
    curve.push_back(value);
    tape.backward(loss);
    adam_step(store, adam, cosine_lr(cfg.lr_start, cfg.lr_end, epoch, cfg.epochs));
  }
  return curve;
}

std::vector<double> train_minibatch(ParameterStore& store, const TrainConfig& cfg, std::size_t samples,
                                    const std::function<VarId(Tape&, std::span<const std::size_t>)>& loss_fn) {
  if (samples == 0) throw EmptyObservations("no training samples");
  const std::size_t bs = cfg.batch_size == 0 ? samples : std::min(cfg.batch_size, samples);
  AdamState adam;
  adam.config.lr = cfg.lr_start;
  Rng rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cosine_lr(cfg.lr_start, cfg.lr_end, epoch, cfg.epochs);
    double sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < samples; start += bs, ++steps) {
      std::span<const std::size_t> idx(order.data() + start, std::min(bs, samples - start));
      store.zero_grads();
      Tape tape;
      VarId loss = loss_fn(tape, idx);
      const double value = tape.value(loss).item();
      if (!std::isfinite(value)) throw NonFiniteLoss(epoch);
      sum += value;
      tape.backward(loss);
      adam_step(store, adam, lr);
    }
    curve.push_back(sum / static_cast<double>(steps));
  }
  return curve;
}

Value gather_batch(const Value& v, std::span<const std::size_t> idx) {
  if (!v.is_batched()) return v;
  const std::size_t n = v.elem_size();
  std::vector<double> out(idx.size() * n);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(v.ptr() + idx[k] * n, n, out.data() + k * n);
  }
  return Value(v.elem_shape(), idx.size(), std::move(out));
}

double relative_error(double estimate, double truth) { return std::abs(estimate - truth) / std::abs(truth); }

TrainingReport train_coefficients(const CompiledProgram& prog, ParameterStore& store, const Bindings& inputs,
                                  const Value& target, const TrainConfig& cfg,
                                  const std::map<std::string, double>& truth) {
  TrainingReport report;
  if (cfg.batch_size == 0 || !target.is_batched() || cfg.batch_size >= *target.batch()) {
    report.loss_curve = train_loop(store, cfg, [&](Tape& tape) {
      std::map<std::string, VarId> ids;
      for (const auto& [name, v] : inputs) ids[name] = tape.constant(v);
      return tape.mse(eval_on_tape(tape, prog, ids, store, kNan), target);
    });
  } else {
    report.loss_curve = train_minibatch(store, cfg, *target.batch(), [&](Tape& tape, std::span<const std::size_t> idx) {
      std::map<std::string, VarId> ids;
      for (const auto& [name, v] : inputs) ids[name] = tape.constant(gather_batch(v, idx));
      return tape.mse(eval_on_tape(tape, prog, ids, store, kNan), gather_batch(target, idx));
    });
  }
  for (const auto& name : store.names()) {
    const Value& v = store.value(name);
    if (v.size() == 1 && !v.is_batched()) report.final_params[name] = v[0];
  }
  for (const auto& [name, t] : truth) report.recovery_errors[name] = relative_error(store.scalar(name), t);
  return report;
}

VarId hybrid_forward(Tape& tape, const CompiledProgram& prog, const std::map<std::string, VarId>& inputs,
                     const MlpModel& mlp, VarId mlp_input, ParameterStore& store) {
  VarId a = eval_on_tape(tape, prog, inputs, store, kNan);
  VarId b = mlp_forward(tape, mlp, store, mlp_input);
  if (!tape.value(a).same_shape(tape.value(b))) {
    throw ShapeMismatch("hybrid: compiled output " + shape_to_string(tape.value(a).shape()) + " vs network output " +
                        shape_to_string(tape.value(b).shape()));
  }
  return tape.apply(PrimOp::add, {a, b}, kNan);
}

VarId compose_chain(Tape& tape, const std::vector<ChainStage>& stages, ParameterStore& store, VarId x) {
  VarId cur = x;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    try {
      if (const auto* prog = std::get_if<const CompiledProgram*>(&stages[i])) {
        if ((*prog)->input_names.size() != 1) throw ConfigError("chain stages take exactly one input");
        cur = eval_on_tape(tape, **prog, {{(*prog)->input_names[0], cur}}, store, kNan);
      } else {
        const MlpModel& mlp = *std::get<const MlpModel*>(stages[i]);
        const bool wrap = tape.value(cur).elem_shape().empty();
        if (wrap) cur = tape.apply(PrimOp::vec, {cur}, kNan);
        cur = mlp_forward(tape, mlp, store, cur);
        if (wrap && mlp.sizes.back() == 1) cur = component(tape, cur, 0);
      }
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("chain stage " + std::to_string(i) + ": " + e.what());
    }
  }
  return cur;
}

}  // namespace ncomp
