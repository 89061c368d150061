#include <doctest.h>

#include <cmath>

#include "ncomp/training.hpp"

using namespace ncomp;

namespace {

OdeSystem linear(double k) {
  OdeSystem sys;
  sys.state_dim = 1;
  sys.rhs = [k](Tape& t, VarId s) { return t.apply(PrimOp::mul, {s, t.constant(Value::scalar(k))}); };
  return sys;
}

double euler_free_error(double dt) {
  const std::size_t steps = static_cast<std::size_t>(std::lround(1.0 / dt));
  const auto traj = integrate(linear(-1.0), Value::vector({1.0}), dt, steps);
  return std::abs(traj.back()[0] - std::exp(-1.0));
}

struct Lv {
  CompiledProgram prey = compile("(- (* alpha x) (* beta (* x y)))", {"x", "y"}, {"alpha", "beta"});
  CompiledProgram pred = compile("(- (* delta (* x y)) (* gamma y))", {"x", "y"}, {"delta", "gamma"});
  ParameterStore store;
  Lv() {
    for (auto [k, v] : {std::pair{"alpha", 1.5}, {"beta", 1.0}, {"delta", 1.0}, {"gamma", 3.0}}) store.set(k, Value::scalar(v));
  }
  OdeSystem sys() { return compiled_system({&prey, &pred}, {"x", "y"}, store); }
  double loss(const ShootingConfig& sc) {
    Tape t;
    const auto s = sys();
    return t.value(multiple_shooting_loss(t, s, sc)).item();
  }
};

}  // namespace

TEST_CASE("adam") {
  ParameterStore p;
  p.set("w", Value::scalar(1.0));
  AdamState st;
  p.accumulate_grad("w", Value::scalar(0.0));
  adam_step(p, st, 0.1);
  CHECK(p.scalar("w") == 1.0);
  p.zero_grads();
  CHECK_THROWS_AS(adam_step(p, st, 0.1), MissingGradient);

  p.accumulate_grad("w", Value::scalar(1.0));
  AdamState fresh;
  adam_step(p, fresh, 0.1);
  // Bias-corrected first step: m_hat = 1, v_hat = 1.
  CHECK(p.scalar("w") == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(1e-2, 1e-4, 0, 100) == doctest::Approx(1e-2));
  CHECK(cosine_lr(1e-2, 1e-4, 99, 100) == doctest::Approx(1e-4));
}

TEST_CASE("mse") {
  CHECK(mse_loss(Value::vector({1, 2}), Value::vector({1, 2})).loss.item() == 0.0);
  CHECK(mse_loss(Value::vector({2}), Value::vector({0})).loss.item() == 4.0);
}

TEST_CASE("rk4") {
  CHECK(rk4_step(linear(0.0), Value::vector({3.0}), 0.1)[0] == 3.0);
  CHECK(std::abs(rk4_step(linear(1.0), Value::vector({1.0}), 0.1)[0] - std::exp(0.1)) < 1e-7);
  const double ratio = euler_free_error(0.1) / euler_free_error(0.05);
  CHECK(ratio == doctest::Approx(16.0).epsilon(0.05));
}

TEST_CASE("multiple shooting") {
  Lv lv;
  ShootingConfig sc;
  sc.dt = 0.1;
  sc.segment_length = 10;
  sc.trajectories.push_back(integrate(lv.sys(), Value::vector({10, 5}), sc.dt, 60));
  CHECK(lv.loss(sc) < 1e-20);

  lv.store.set_value("alpha", Value::scalar(1.65));
  const double perturbed = lv.loss(sc);
  CHECK(perturbed > 1e-6);

  ShootingConfig single = sc;
  single.segment_length = sc.trajectories[0].size() - 1;
  CHECK(lv.loss(single) > perturbed);
  CHECK_THROWS_AS(lv.loss(ShootingConfig{}), EmptyObservations);
}

TEST_CASE("Planck constant recovery") {
  Rng rng(7);
  const auto prog = compile("(* h f)", {"f"}, {"h"});
  std::uniform_real_distribution<double> u(1, 10);
  std::vector<double> f(10000), e(10000);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = u(rng);
    e[i] = 6.626 * f[i];
  }
  const Value y = add_noise(Value::batch_of(e.size(), {}, e), 0.02, rng);
  ParameterStore p;
  p.set("h", Value::scalar(3.0));
  TrainConfig cfg;
  cfg.epochs = 3000;
  const auto rep = train_coefficients(prog, p, {{"f", Value::batch_of(f.size(), {}, f)}}, y, cfg, {{"h", 6.626}});
  CHECK(rep.recovery_errors.at("h") <= 1e-3);
  CHECK(rep.loss_curve.size() == 3000);
  CHECK(rep.loss_curve.back() < rep.loss_curve.front());
}

TEST_CASE("minibatches are deterministic for a shuffle seed") {
  const auto prog = compile("(* k x)", {"x"}, {"k"});
  std::vector<double> xs(100), ys(100);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = 0.01 * static_cast<double>(i);
    ys[i] = 2.5 * xs[i];
  }
  auto run = [&](std::uint64_t seed) {
    ParameterStore p;
    p.set("k", Value::scalar(1.0));
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.shuffle_seed = seed;
    return train_coefficients(prog, p, {{"x", Value::batch_of(100, {}, xs)}}, Value::batch_of(100, {}, ys), cfg).loss_curve;
  };
  CHECK(run(3) == run(3));
  CHECK(run(3) != run(4));
  const std::vector<std::size_t> idx{4, 1};
  const Value g = gather_batch(Value::batch_of(100, {}, xs), idx);
  CHECK(g[0] == xs[4]);
  CHECK(g[1] == xs[1]);
}

TEST_CASE("mlp") {
  Rng rng(1);
  ParameterStore p;
  const MlpModel zero = make_mlp(p, {2, 8, 1}, Activation::tanh, "z", rng);
  for (std::size_t l = 0; l < zero.layers(); ++l) {
    p.set(zero.weight(l), Value::filled(p.value(zero.weight(l)).elem_shape(), std::nullopt, 0.0));
  }
  CHECK(mlp_predict(zero, p, Value::vector({0.3, -2}))[0] == 0.0);
  CHECK(zero.param_count() == 2 * 8 + 8 + 8 + 1);

  const MlpModel lin = make_mlp(p, {1, 1}, Activation::relu, "lin", rng);
  p.set(lin.weight(0), Value::matrix(1, 1, {2}));
  p.set(lin.bias(0), Value::vector({1}));
  CHECK(mlp_predict(lin, p, Value::vector({3}))[0] == 7.0);

  // Zero weights leave the hybrid equal to the compiled part.
  const auto prog = compile("(* 3 (sin x))", {"x"});
  const MlpModel corr = make_mlp(p, {1, 4, 1}, Activation::tanh, "c", rng);
  for (std::size_t l = 0; l < corr.layers(); ++l) {
    p.set(corr.weight(l), Value::filled(p.value(corr.weight(l)).elem_shape(), std::nullopt, 0.0));
  }
  Tape t;
  const Value x = Value::batch_of(3, {1}, {-1, 0.5, 2});
  const VarId h = hybrid_forward(t, prog, {{"x", t.constant(x)}}, corr, t.constant(x), p);
  const Value plain = eval_program(prog, {{"x", x}});
  for (std::size_t i = 0; i < 3; ++i) CHECK(t.value(h)[i] == plain[i]);
}

TEST_CASE("composition chains") {
  const auto square = compile("(* x x)", {"x"});
  const auto add_one = compile("(+ x 1)", {"x"});
  const auto cube = compile("(* x (* x x))", {"x"});
  ParameterStore p;
  Tape t;
  const VarId x = t.constant(Value::scalar(2));
  CHECK(t.value(compose_chain(t, {&square, &add_one, &cube}, p, x)).item() == 125.0);
  CHECK(t.value(compose_chain(t, {}, p, x)).item() == 2.0);

  Rng rng(2);
  const MlpModel zero = make_mlp(p, {1, 4, 1}, Activation::tanh, "z", rng);
  for (std::size_t l = 0; l < zero.layers(); ++l) {
    p.set(zero.weight(l), Value::filled(p.value(zero.weight(l)).elem_shape(), std::nullopt, 0.0));
  }
  CHECK(t.value(compose_chain(t, {&square, &zero, &cube}, p, x)).item() == 0.0);
}
