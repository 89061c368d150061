#include <chrono>
#include <numbers>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "heat";

Value laplacian(std::size_t n, double scale) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = -2.0 * scale;
    if (i > 0) m[i * n + i - 1] = scale;
    if (i + 1 < n) m[i * n + i + 1] = scale;
  }
  return Value::matrix(n, n, std::move(m));
}

Value random_states(Rng& rng, std::size_t count, std::size_t n, double lo, double hi) {
  std::vector<double> xs(count * n);
  for (double& x : xs) x = uniform(rng, lo, hi);
  return Value::batch_of(count, {n}, std::move(xs));
}

Value concat(const std::vector<Value>& parts) {
  std::vector<double> xs;
  std::size_t b = 0;
  for (const auto& p : parts) {
    xs.insert(xs.end(), p.data().begin(), p.data().end());
    b += *p.batch();
  }
  return Value::batch_of(b, parts.at(0).elem_shape(), std::move(xs));
}

Value plus_row(const Value& batch, const std::vector<double>& row) {
  std::vector<double> xs(batch.data().begin(), batch.data().end());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += row[i % row.size()];
  return Value(batch.elem_shape(), batch.batch(), std::move(xs));
}

struct Stepper {
  const CompiledProgram& prog;
  Value L, dt;
  std::vector<double> source;  // added after the diffusion step, already scaled by dt

  Value operator()(const Value& u, const ParameterStore& p) const {
    Value next = eval_program(prog, {{"u", u}, {"L", L}, {"dt", dt}}, p, SafeDomainPolicy::propagate_nan());
    return source.empty() ? next : plus_row(next, source);
  }

  /// States 0..steps.
  std::vector<Value> rollout(const Value& u0, const ParameterStore& p, std::size_t steps) const {
    std::vector<Value> out{u0};
    for (std::size_t k = 0; k < steps; ++k) out.push_back((*this)(out.back(), p));
    return out;
  }
};

/// Mean squared error over states 1..k of two rollouts.
double rollout_mse(const std::vector<Value>& a, const std::vector<Value>& b) {
  std::vector<Value> x(a.begin() + 1, a.end()), y(b.begin() + 1, b.end());
  return mse(concat(x), concat(y));
}

}  // namespace

std::vector<ResultRow> run_heat(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  const std::uint64_t seed = seed_for(cfg, opts);
  const ParamSpec spec = param_spec(get<Json>(j, "params"));
  const CompiledProgram prog = load_program(cfg.path(get<std::string>(j, "step")), {"u", "L", "dt"}, {"alpha"});
  const auto n = get<std::size_t>(j, "grid_points");
  const auto [lo, hi] = range_pair(get<Json>(j, "initial_range"));
  Rng rng(seed);
  std::vector<ResultRow> rows;

  Stepper step{prog, laplacian(n, get<double>(j, "laplacian_scale")), Value::scalar(get<double>(j, "dt")), {}};
  const ParameterStore truth = store_with(spec.truth);

  {
    Bindings pts{{"u", random_states(rng, get<std::size_t>(j, "oracle_points"), n, lo, hi)}, {"L", step.L}, {"dt", step.dt}};
    rows.push_back(make_row(kExp, "handcoded_oracle", "heat_step", "max_abs_diff",
                            max_abs_diff_exact(eval_program(prog, pts, truth, SafeDomainPolicy::propagate_nan()),
                                               eval_native(handcoded_oracle("heat_step"), pts, spec.truth, {n})),
                            "==", 0.0, 3));
  }

  // Experiment 1: recover alpha from noise-free one-step pairs.
  const auto train_steps = get<std::size_t>(j, "train_steps");
  auto pairs = [&](const Stepper& s, std::size_t conditions) {
    auto states = s.rollout(random_states(rng, conditions, n, lo, hi), truth, train_steps);
    return std::pair{concat({states.begin(), states.end() - 1}), concat({states.begin() + 1, states.end()})};
  };
  const auto [x1, y1] = pairs(step, get<std::size_t>(j, "train_conditions"));
  const Value test_u0 = random_states(rng, get<std::size_t>(j, "test_conditions"), n, lo, hi);
  {
    ParameterStore store = store_with(init_params(rng, spec.prior));
    auto t0 = std::chrono::steady_clock::now();
    TrainingReport rep;
    double err = INFINITY;
    try {
      rep = train_coefficients(prog, store, {{"u", x1}, {"L", step.L}, {"dt", step.dt}}, y1,
                               train_config(get<Json>(j, "optimizer"), get<std::size_t>(j, "epochs"), opts), spec.truth);
      err = rep.recovery_errors.at("alpha");
    } catch (const NonFiniteLoss& e) {
      log(opts, std::string("[heat] training diverged: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(make_row(kExp, "compiled", "alpha", "rel_error", std::isnan(err) ? INFINITY : err, "<=",
                            get<double>(j, "tolerance"), 7));
    rows.push_back(make_row(kExp, "compiled", "alpha", "trainable_params", static_cast<double>(store.trainable_count()),
                            "==", 1.0, 7));
    for (auto k : get<std::vector<std::size_t>>(j, "rollouts")) {
      const double m = rollout_mse(step.rollout(test_u0, store, k), step.rollout(test_u0, truth, k));
      rows.push_back(make_row(kExp, "compiled", "rollout_" + std::to_string(k), "mse", m, "<=",
                              get<double>(j, "rollout_mse"), 7));
    }
    rows.push_back(make_row(kExp, "compiled", "alpha", "train_seconds", secs));
    write_curve(opts, "heat_alpha", rep.loss_curve);
    log(opts, "[heat] alpha rel error " + std::to_string(err) + " in " + std::to_string(secs) + " s");
  }

  // Experiment 2: an unmodelled source term; compiled diffusion plus a network against a network alone.
  {
    const Json& sj = get<Json>(j, "source");
    Stepper forced = step;
    const double amp = get<double>(sj, "amplitude");
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i + 1) / static_cast<double>(n + 1);
      forced.source.push_back(step.dt.item() * amp * std::sin(std::numbers::pi * x));
    }
    const auto [x2, y2] = pairs(forced, get<std::size_t>(j, "train_conditions"));
    const auto epochs = get<std::size_t>(sj, "epochs");

    const Json& hj = get<Json>(sj, "hybrid");
    ParameterStore hs;
    hs.set("alpha", Value::scalar(init_from_prior(rng, spec.prior.at("alpha"))));
    const MlpModel hm = make_mlp(hs, mlp_sizes(n, hj, n), activation_from(get<std::string>(hj, "activation")), "hybrid", rng);
    // The network sees only the grid positions, so it can represent s(x) but not the diffusion.
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    const Value positions = Value::vector(grid);
    const auto hybrid_curve = train_loop(hs, train_config(hj, epochs, opts), [&](Tape& tape) {
      std::map<std::string, VarId> ids{{"u", tape.constant(x2)}, {"L", tape.constant(step.L)}, {"dt", tape.constant(step.dt)}};
      VarId diffusion = eval_on_tape(tape, prog, ids, hs, SafeDomainPolicy::propagate_nan());
      VarId src = mlp_forward(tape, hm, hs, tape.constant(positions));
      return tape.mse(tape.apply(PrimOp::add, std::vector<VarId>{diffusion, src}, SafeDomainPolicy::propagate_nan()), y2);
    });

    const Json& mj = get<Json>(sj, "mlp");
    ParameterStore ms;
    const MlpModel mm = make_mlp(ms, mlp_sizes(n, mj, n), activation_from(get<std::string>(mj, "activation")), "mlp", rng);
    const auto mlp_curve = train_loop(
        ms, train_config(mj, epochs, opts), [&](Tape& tape) { return tape.mse(mlp_forward(tape, mm, ms, tape.constant(x2)), y2); });

    const double h_loss = hybrid_curve.back(), m_loss = mlp_curve.back();
    rows.push_back(make_row(kExp, "hybrid", "source", "final_train_loss", h_loss));
    rows.push_back(make_row(kExp, "mlp", "source", "final_train_loss", m_loss));
    rows.push_back(make_row(kExp, "hybrid", "source", "trainable_params", static_cast<double>(1 + hm.param_count())));
    rows.push_back(make_row(kExp, "mlp", "source", "trainable_params", static_cast<double>(mm.param_count())));
    rows.push_back(make_row(kExp, "hybrid", "source_vs_mlp", "final_loss_ratio", m_loss / h_loss, ">=",
                            get<double>(sj, "loss_ratio"), 7));
    write_curve(opts, "heat_source_hybrid", hybrid_curve);
    write_curve(opts, "heat_source_mlp", mlp_curve);
    log(opts, "[heat] source: hybrid loss " + std::to_string(h_loss) + ", mlp loss " + std::to_string(m_loss));
  }
  return rows;
}

}  // namespace ncomp
