#include <chrono>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "vector3d";

struct Samples {
  Bindings inputs;  // m1, m2 scalars and r a 3-vector per element
  Value features;   // [B, 5]: m1, m2, r
};

Samples draw(Rng& rng, std::size_t n, std::pair<double, double> mass, std::pair<double, double> radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> m1(n), m2(n), r(3 * n), feats(5 * n);
  for (std::size_t b = 0; b < n; ++b) {
    m1[b] = uniform(rng, mass.first, mass.second);
    m2[b] = uniform(rng, mass.first, mass.second);
    double d[3], len = 0.0;
    for (double& c : d) {
      c = gauss(rng);
      len += c * c;
    }
    const double scale = uniform(rng, radius.first, radius.second) / std::sqrt(len);
    feats[5 * b] = m1[b];
    feats[5 * b + 1] = m2[b];
    for (int k = 0; k < 3; ++k) {
      r[3 * b + k] = d[k] * scale;
      feats[5 * b + 2 + k] = r[3 * b + k];
    }
  }
  Samples s;
  s.inputs["m1"] = Value::batch_of(n, {}, std::move(m1));
  s.inputs["m2"] = Value::batch_of(n, {}, std::move(m2));
  s.inputs["r"] = Value::batch_of(n, {3}, std::move(r));
  s.features = Value::batch_of(n, {5}, std::move(feats));
  return s;
}

Value head(const Value& v, std::size_t n) {
  const std::size_t e = v.elem_size();
  return Value::batch_of(n, v.elem_shape(), {v.data().begin(), v.data().begin() + static_cast<long>(n * e)});
}

}  // namespace

std::vector<ResultRow> run_vector3d(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  const std::uint64_t seed = seed_for(cfg, opts);
  const ParamSpec spec = param_spec(get<Json>(j, "params"));
  const CompiledProgram prog = load_program(cfg.path(get<std::string>(j, "source")), {"m1", "m2", "r"}, {"G"});
  const auto mass = range_pair(get<Json>(j, "mass_range"));
  const auto radius = range_pair(get<Json>(j, "radius_range"));
  const auto kNan = SafeDomainPolicy::propagate_nan();
  const ParameterStore truth = store_with(spec.truth);
  Rng rng(seed);
  std::vector<ResultRow> rows;

  {
    Samples pts = draw(rng, get<std::size_t>(j, "oracle_points"), mass, radius);
    rows.push_back(make_row(kExp, "handcoded_oracle", "gravity3d", "max_abs_diff",
                            max_abs_diff_exact(eval_program(prog, pts.inputs, truth, kNan),
                                               eval_native(handcoded_oracle("gravity3d"), pts.inputs, spec.truth, {3})),
                            "==", 0.0, 3));
  }

  const Samples train = draw(rng, get<std::size_t>(j, "train_samples"), mass, radius);
  const Value train_y = add_noise(eval_program(prog, train.inputs, truth, kNan), get<double>(j, "noise"), rng);
  const Samples test = draw(rng, get<std::size_t>(j, "test_samples"), mass, radius);
  const Value test_y = eval_program(prog, test.inputs, truth, kNan);

  double compiled_mse = INFINITY;
  {
    ParameterStore store = store_with(init_params(rng, spec.prior));
    auto t0 = std::chrono::steady_clock::now();
    TrainingReport rep;
    double err = INFINITY;
    try {
      rep = train_coefficients(prog, store, train.inputs, train_y,
                               train_config(get<Json>(j, "optimizer"), get<std::size_t>(j, "epochs"), opts), spec.truth);
      err = rep.recovery_errors.at("G");
      compiled_mse = mse(eval_program(prog, test.inputs, store, kNan), test_y);
    } catch (const NonFiniteLoss& e) {
      log(opts, std::string("[vector3d] training diverged: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(make_row(kExp, "compiled", "G", "rel_error", std::isnan(err) ? INFINITY : err, "<=",
                            get<double>(j, "tolerance"), 9));
    rows.push_back(make_row(kExp, "compiled", "G", "test_mse", compiled_mse));
    rows.push_back(make_row(kExp, "compiled", "G", "trainable_params", static_cast<double>(store.trainable_count())));
    rows.push_back(make_row(kExp, "compiled", "G", "train_seconds", secs));
    write_curve(opts, "vector3d_compiled", rep.loss_curve);
    log(opts, "[vector3d] G rel error " + std::to_string(err) + " in " + std::to_string(secs) + " s");
  }

  double mlp_mse = INFINITY;
  {
    const Json& mj = get<Json>(j, "mlp");
    const std::size_t n = std::min(get<std::size_t>(mj, "train_samples"), *train.features.batch());
    ParameterStore store;
    const MlpModel mlp = make_mlp(store, mlp_sizes(5, mj, 3), activation_from(get<std::string>(mj, "activation")), "mlp", rng);
    const Value x = head(train.features, n), y = head(train_y, n);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> curve;
    try {
      curve = train_loop(store, train_config(mj, get<std::size_t>(mj, "epochs"), opts),
                         [&](Tape& tape) { return tape.mse(mlp_forward(tape, mlp, store, tape.constant(x)), y); });
      mlp_mse = mse(mlp_predict(mlp, store, test.features), test_y);
    } catch (const NonFiniteLoss&) {
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(make_row(kExp, "mlp", "force", "test_mse", mlp_mse));
    rows.push_back(make_row(kExp, "mlp", "force", "trainable_params", static_cast<double>(mlp.param_count())));
    rows.push_back(make_row(kExp, "mlp", "force", "train_seconds", secs));
    write_curve(opts, "vector3d_mlp", curve);
    log(opts, "[vector3d] mlp test mse " + std::to_string(mlp_mse) + " in " + std::to_string(secs) + " s");
  }
  rows.push_back(make_row(kExp, "compiled", "compiled_vs_mlp", "test_mse_ratio", mlp_mse / compiled_mse, ">=",
                          get<double>(j, "mse_ratio"), 9));
  return rows;
}

}  // namespace ncomp
