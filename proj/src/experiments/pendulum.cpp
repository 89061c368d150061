#include <chrono>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "pendulum";

using Trajectories = std::vector<std::vector<Value>>;

Trajectories simulate(const OdeSystem& sys, const std::vector<Value>& starts, double dt, std::size_t steps) {
  Trajectories out;
  for (const auto& s : starts) out.push_back(integrate(sys, s, dt, steps));
  return out;
}

/// Shooting loss of `sys` against clean trajectories, without training.
double shooting_mse(const OdeSystem& sys, const Trajectories& trajs, double dt, std::size_t segment) {
  ShootingConfig sc;
  sc.dt = dt;
  sc.segment_length = segment;
  sc.trajectories = trajs;
  Tape tape;
  const double v = tape.value(multiple_shooting_loss(tape, sys, sc)).item();
  return std::isnan(v) ? INFINITY : v;
}

}  // namespace

std::vector<ResultRow> run_pendulum(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  const std::uint64_t seed = seed_for(cfg, opts);
  const auto state = get<std::vector<std::string>>(j, "state");
  const ParamSpec spec = param_spec(get<Json>(j, "params"));
  const CompiledProgram theta = load_program(cfg.path(get<std::string>(j, "theta")), state, {});
  const CompiledProgram omega = load_program(cfg.path(get<std::string>(j, "omega")), state, {"g_L", "b"});
  const CompiledProgram gravity = load_program(cfg.path(get<std::string>(j, "gravity")), state, {"g_L"});
  const auto kNan = SafeDomainPolicy::propagate_nan();
  std::vector<ResultRow> rows;
  Rng rng(seed);

  {
    const Json& ranges = get<Json>(j, "oracle_range");
    Bindings pts;
    for (const auto& name : state) {
      const auto [lo, hi] = range_pair(ranges.at(name));
      pts[name] = uniform_batch(rng, lo, hi, get<std::size_t>(j, "oracle_points"));
    }
    const ParameterStore truth = store_with(spec.truth);
    for (const auto& [name, prog] : {std::pair{"pendulum_theta", &theta}, std::pair{"pendulum_omega", &omega},
                                     std::pair{"pendulum_gravity", &gravity}}) {
      rows.push_back(make_row(kExp, "handcoded_oracle", name, "max_abs_diff",
                              max_abs_diff_exact(eval_program(*prog, pts, truth, kNan),
                                                 eval_native(handcoded_oracle(name), pts, spec.truth, {})),
                              "==", 0.0, 3));
    }
  }

  const double dt = get<double>(j, "dt");
  const auto steps = static_cast<std::size_t>(std::lround(get<double>(j, "t_end") / dt));
  const auto segment = get<std::size_t>(j, "segment_length");
  const auto [t_lo, t_hi] = range_pair(get<Json>(j, "theta0"));
  const auto [w_lo, w_hi] = range_pair(get<Json>(j, "omega0"));
  auto starts = [&](std::size_t n) {
    std::vector<Value> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Value::vector({uniform(rng, t_lo, t_hi), uniform(rng, w_lo, w_hi)}));
    return out;
  };

  ParameterStore truth = store_with(spec.truth);
  const OdeSystem true_sys = compiled_system({&theta, &omega}, state, truth);
  const auto train_starts = starts(get<std::size_t>(j, "train_trajectories"));
  const auto test_starts = starts(get<std::size_t>(j, "test_trajectories"));

  ShootingConfig sc;
  sc.dt = dt;
  sc.segment_length = segment;
  sc.trajectories = simulate(true_sys, train_starts, dt, steps);
  const double noise = get<double>(j, "noise");
  for (auto& traj : sc.trajectories) {
    for (auto& o : traj) o = add_noise(o, noise, rng);
  }
  const auto horizons = get<std::vector<std::size_t>>(j, "horizons");
  std::vector<Trajectories> test;
  for (auto h : horizons) test.push_back(simulate(true_sys, test_starts, dt, steps * h));
  auto horizon_label = [&](std::size_t i) { return horizons[i] == 1 ? std::string("in_dist") : std::to_string(horizons[i]) + "x"; };

  // Scenario 1: full structure, two constants.
  double compiled_in_dist = INFINITY;
  {
    ParameterStore store = store_with(init_params(rng, spec.prior));
    const OdeSystem sys = compiled_system({&theta, &omega}, state, store);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> curve;
    bool ok = true;
    try {
      curve = train_loop(store, train_config(get<Json>(j, "optimizer"), get<std::size_t>(j, "epochs"), opts),
                         [&](Tape& tape) { return multiple_shooting_loss(tape, sys, sc); });
    } catch (const NonFiniteLoss& e) {
      ok = false;
      log(opts, std::string("[pendulum] compiled training diverged: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const Json& tol = get<Json>(j, "tolerance");
    for (const auto& [k, t] : spec.truth) {
      double e = ok ? relative_error(store.scalar(k), t) : INFINITY;
      rows.push_back(make_row(kExp, "compiled", k, "rel_error", std::isnan(e) ? INFINITY : e, "<=", get<double>(tol, k), 6));
    }
    rows.push_back(make_row(kExp, "compiled", "s1", "trainable_params", static_cast<double>(store.trainable_count()),
                            "==", static_cast<double>(spec.truth.size()), 6));
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      const double m = ok ? shooting_mse(sys, test[i], dt, segment) : INFINITY;
      if (horizons[i] == 1) compiled_in_dist = m;
      rows.push_back(make_row(kExp, "compiled", "s1", "trajectory_mse_" + horizon_label(i), m));
    }
    rows.push_back(make_row(kExp, "compiled", "s1", "train_seconds", secs));
    write_curve(opts, "pendulum_compiled", curve);
    log(opts, "[pendulum] compiled g_L=" + std::to_string(store.scalar("g_L")) + " b=" + std::to_string(store.scalar("b")) +
                  " in " + std::to_string(secs) + " s");
  }

  // Neural ODE baseline under the same shooting protocol.
  double mlp_in_dist = INFINITY;
  {
    const Json& mj = get<Json>(j, "mlp");
    ParameterStore store;
    const MlpModel mlp = make_mlp(store, mlp_sizes(state.size(), mj, state.size()),
                                  activation_from(get<std::string>(mj, "activation")), "mlp", rng);
    const OdeSystem sys = mlp_system(mlp, store);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> curve;
    bool ok = true;
    try {
      curve = train_loop(store, train_config(mj, get<std::size_t>(mj, "epochs"), opts),
                         [&](Tape& tape) { return multiple_shooting_loss(tape, sys, sc); });
    } catch (const NonFiniteLoss&) {
      ok = false;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      const double m = ok ? shooting_mse(sys, test[i], dt, segment) : INFINITY;
      if (horizons[i] == 1) mlp_in_dist = m;
      rows.push_back(make_row(kExp, "mlp_ode_rhs", "baseline", "trajectory_mse_" + horizon_label(i), m));
    }
    rows.push_back(make_row(kExp, "mlp_ode_rhs", "baseline", "trainable_params", static_cast<double>(mlp.param_count())));
    rows.push_back(make_row(kExp, "mlp_ode_rhs", "baseline", "train_seconds", secs));
    write_curve(opts, "pendulum_mlp", curve);
    log(opts, "[pendulum] neural ODE in-dist mse " + std::to_string(mlp_in_dist) + " in " + std::to_string(secs) + " s");
  }
  rows.push_back(make_row(kExp, "compiled", "s1_vs_mlp", "in_dist_mse_ratio", mlp_in_dist / compiled_in_dist, ">=",
                          get<double>(j, "mse_ratio"), 6));

  // Scenario 2: compiled gravity plus a learned remainder.
  if (opts.baselines) {
    const Json& hj = get<Json>(j, "hybrid");
    ParameterStore store;
    store.set("g_L", Value::scalar(init_from_prior(rng, spec.prior.at("g_L"))));
    const MlpModel mlp = make_mlp(store, mlp_sizes(state.size(), hj, state.size()),
                                  activation_from(get<std::string>(hj, "activation")), "hybrid", rng);
    const OdeSystem sys = hybrid_system(compiled_system({&theta, &gravity}, state, store), mlp_system(mlp, store));
    std::vector<double> curve;
    bool ok = true;
    try {
      curve = train_loop(store, train_config(hj, get<std::size_t>(hj, "epochs"), opts),
                         [&](Tape& tape) { return multiple_shooting_loss(tape, sys, sc); });
    } catch (const NonFiniteLoss&) {
      ok = false;
    }
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      const double m = ok ? shooting_mse(sys, test[i], dt, segment) : INFINITY;
      rows.push_back(make_row(kExp, "hybrid", "s2", "trajectory_mse_" + horizon_label(i), m));
    }
    rows.push_back(make_row(kExp, "hybrid", "s2", "target_in_dist_mse", get<double>(hj, "target")));
    rows.push_back(make_row(kExp, "hybrid", "s2", "rel_error[g_L]", relative_error(store.scalar("g_L"), spec.truth.at("g_L"))));
    rows.push_back(make_row(kExp, "hybrid", "s2", "trainable_params", static_cast<double>(1 + mlp.param_count())));
    write_curve(opts, "pendulum_hybrid", curve);
  }
  return rows;
}

}  // namespace ncomp
