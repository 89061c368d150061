#include <chrono>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "lotka_volterra";

struct Setup {
  Config cfg;
  CompiledProgram prey, predator;
  ParamSpec spec;
  std::vector<std::string> state;
};

Setup load_setup(const RunOptions& opts) {
  Setup s{load_config(kExp, opts), {}, {}, {}, {}};
  const Json& j = s.cfg.json;
  s.spec = param_spec(get<Json>(j, "params"));
  s.state = get<std::vector<std::string>>(j, "state");
  s.prey = load_program(s.cfg.path(get<std::string>(j, "prey")), s.state, {"alpha", "beta"});
  s.predator = load_program(s.cfg.path(get<std::string>(j, "predator")), s.state, {"delta", "gamma"});
  return s;
}

struct Fit {
  std::map<std::string, double> errors;
  double max_error = INFINITY;
  std::vector<double> curve;
  std::size_t trainable = 0;
};

Fit fit(const Setup& s, double noise, std::uint64_t seed, const RunOptions& opts) {
  const Json& j = s.cfg.json;
  Rng rng(seed);
  ParameterStore truth = store_with(s.spec.truth);
  OdeSystem true_sys = compiled_system({&s.prey, &s.predator}, s.state, truth);

  ShootingConfig sc;
  sc.dt = get<double>(j, "dt");
  sc.segment_length = get<std::size_t>(j, "segment_length");
  const auto steps = static_cast<std::size_t>(std::lround(get<double>(j, "t_end") / sc.dt));
  const auto x0 = get<std::vector<double>>(j, "initial_state");
  const auto [lo, hi] = range_pair(get<Json>(j, "initial_scale"));
  const auto n_traj = get<std::size_t>(j, "trajectories");
  for (std::size_t k = 0; k < n_traj; ++k) {
    std::vector<double> start = x0;
    if (k > 0) {
      for (double& v : start) v *= uniform(rng, lo, hi);
    }
    auto obs = integrate(true_sys, Value::vector(start), sc.dt, steps);
    for (auto& o : obs) o = add_noise(o, noise, rng);
    sc.trajectories.push_back(std::move(obs));
  }

  ParameterStore store = store_with(init_params(rng, s.spec.prior));
  OdeSystem sys = compiled_system({&s.prey, &s.predator}, s.state, store);
  const TrainConfig tc = train_config(get<Json>(j, "optimizer"), get<std::size_t>(j, "epochs"), opts);

  Fit f;
  f.trainable = store.trainable_count();
  try {
    f.curve = train_loop(store, tc, [&](Tape& tape) { return multiple_shooting_loss(tape, sys, sc); });
    f.max_error = 0.0;
    for (const auto& [k, t] : s.spec.truth) {
      double e = relative_error(store.scalar(k), t);
      if (std::isnan(e)) e = INFINITY;
      f.errors[k] = e;
      f.max_error = std::max(f.max_error, e);
    }
  } catch (const NonFiniteLoss& e) {
    log(opts, std::string("[lotka_volterra] training diverged: ") + e.what());
  }
  return f;
}

std::string noise_label(double noise) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "noise=%g%%", noise * 100.0);
  return buf;
}

std::vector<ResultRow> sweep(const Setup& s, std::uint64_t seed, const RunOptions& opts) {
  std::vector<ResultRow> rows;
  const Json levels = get<Json>(s.cfg.json, "noise_sweep");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double noise = get<double>(levels[i], "noise");
    const double bound = get<double>(levels[i], "bound");
    const std::string item = "sweep_" + noise_label(noise);
    Fit f = fit(s, noise, seed + 1000 + i, opts);
    for (const auto& [k, e] : f.errors) rows.push_back(make_row(kExp, "compiled", item, "rel_error[" + k + "]", e));
    rows.push_back(make_row(kExp, "compiled", item, "max_rel_error", f.max_error, noise == 0.0 ? "<" : "<=", bound, 5));
    write_curve(opts, "lotka_volterra_sweep_" + std::to_string(i), f.curve);
    log(opts, "[lotka_volterra] " + item + ": max rel error " + std::to_string(f.max_error));
  }
  return rows;
}

}  // namespace

std::vector<ResultRow> run_noise_sweep(const RunOptions& opts) {
  const Setup s = load_setup(opts);
  return sweep(s, seed_for(s.cfg, opts), opts);
}

std::vector<ResultRow> run_lotka_volterra(const RunOptions& opts) {
  const Setup s = load_setup(opts);
  const Json& j = s.cfg.json;
  const std::uint64_t seed = seed_for(s.cfg, opts);
  std::vector<ResultRow> rows;

  {
    Rng rng(seed + 7);
    const std::size_t n = get<std::size_t>(j, "oracle_points");
    const Json& ranges = get<Json>(j, "oracle_range");
    Bindings pts;
    for (const auto& name : s.state) {
      const auto [lo, hi] = range_pair(ranges.at(name));
      pts[name] = uniform_batch(rng, lo, hi, n);
    }
    ParameterStore truth = store_with(s.spec.truth);
    const auto kNan = SafeDomainPolicy::propagate_nan();
    for (const auto& [name, prog] : {std::pair{"lv_prey", &s.prey}, std::pair{"lv_predator", &s.predator}}) {
      rows.push_back(make_row(kExp, "handcoded_oracle", name, "max_abs_diff",
                              max_abs_diff_exact(eval_program(*prog, pts, truth, kNan),
                                                 eval_native(handcoded_oracle(name), pts, s.spec.truth, {})),
                              "==", 0.0, 3));
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  Fit f = fit(s, get<double>(j, "noise"), seed, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string item = "rates@" + noise_label(get<double>(j, "noise"));
  for (const auto& [k, e] : f.errors) rows.push_back(make_row(kExp, "compiled", k, "rel_error", e));
  rows.push_back(make_row(kExp, "compiled", item, "max_rel_error", f.max_error, "<=", get<double>(j, "tolerance"), 5));
  rows.push_back(make_row(kExp, "compiled", item, "trainable_params", static_cast<double>(f.trainable), "==",
                          static_cast<double>(s.spec.truth.size()), 5));
  rows.push_back(make_row(kExp, "compiled", item, "train_seconds", secs));
  write_curve(opts, "lotka_volterra", f.curve);
  log(opts, "[lotka_volterra] max rel error " + std::to_string(f.max_error) + " in " + std::to_string(secs) + " s");

  auto sw = sweep(s, seed, opts);
  rows.insert(rows.end(), sw.begin(), sw.end());
  return rows;
}

}  // namespace ncomp
