#include <chrono>
#include <future>
#include <mutex>

#include "ncomp/interpreter.hpp"
#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "feynman";

struct Range {
  double lo, hi;
};

Range range_of(const Json& j) {
  auto r = j.get<std::vector<double>>();
  if (r.size() != 2 || !(r[0] <= r[1])) throw ConfigError("ranges are [lo, hi] pairs");
  return {r[0], r[1]};
}

Bindings sample_inputs(const std::map<std::string, Range>& ranges, std::size_t n, Rng& rng) {
  Bindings out;
  for (const auto& [name, r] : ranges) out[name] = uniform_batch(rng, r.lo, r.hi, n);
  return out;
}

struct Recovered {
  std::string label, num, den;
};

double recovered_value(const Recovered& r, const std::map<std::string, double>& p) {
  return r.den.empty() ? p.at(r.num) : p.at(r.num) / p.at(r.den);
}

std::vector<ResultRow> run_equation(const Config& cfg, const Json& eq, std::uint64_t seed, const RunOptions& opts,
                                    const std::function<void(const std::string&)>& say) {
  const Json& root = cfg.json;
  const auto name = get<std::string>(eq, "name");
  const bool expected_failure = get_or<bool>(eq, "expected_failure", false);
  const double factor = get<double>(root, "extrapolation_factor");

  std::map<std::string, Range> train_range, extra_range;
  for (const auto& [k, v] : eq.at("inputs").items()) {
    train_range[k] = range_of(v);
    extra_range[k] = {train_range[k].lo * factor, train_range[k].hi * factor};
  }
  if (eq.contains("extrapolation")) {
    for (const auto& [k, v] : eq["extrapolation"].items()) extra_range.at(k) = range_of(v);
  }
  std::map<std::string, double> truth, prior;
  for (const auto& [k, v] : eq.at("params").items()) {
    truth[k] = get<double>(v, "truth");
    prior[k] = get<double>(v, "prior");
  }
  std::vector<Recovered> recovered;
  if (eq.contains("recovered")) {
    for (const auto& r : eq["recovered"]) {
      recovered.push_back({get<std::string>(r, "label"), get<std::string>(r, "num"), get_or<std::string>(r, "den", "")});
    }
  } else {
    for (const auto& [k, v] : truth) recovered.push_back({k, k, ""});
  }

  std::vector<std::string> input_names, param_names;
  for (const auto& [k, v] : train_range) input_names.push_back(k);
  for (const auto& [k, v] : truth) param_names.push_back(k);
  const std::string source = read_text(cfg.path(get<std::string>(eq, "source")));
  const CompiledProgram prog = compile(source, input_names, param_names);

  Rng rng(seed);
  std::vector<ResultRow> rows;
  const ParameterStore true_store = store_with(truth);
  const auto kNan = SafeDomainPolicy::propagate_nan();

  // Compiled against the hand-written closure at the true constants.
  {
    Bindings pts = sample_inputs(train_range, get<std::size_t>(root, "oracle_points"), rng);
    Value compiled = eval_program(prog, pts, true_store, kNan);
    Value native = eval_native(handcoded_oracle(name), pts, truth, {});
    rows.push_back(make_row(kExp, "handcoded_oracle", name, "max_abs_diff", max_abs_diff_exact(compiled, native), "==",
                            0.0, 3));
  }

  const std::size_t n_train = get<std::size_t>(root, "train_samples");
  const std::size_t n_test = get<std::size_t>(root, "test_samples");
  Bindings train_x = sample_inputs(train_range, n_train, rng);
  Value train_y = add_noise(eval_program(prog, train_x, true_store, kNan), get<double>(root, "noise"), rng);
  Bindings test_x = sample_inputs(train_range, n_test, rng);
  Value test_y = eval_program(prog, test_x, true_store, kNan);
  Bindings extra_x = sample_inputs(extra_range, n_test, rng);
  Value extra_y = eval_program(prog, extra_x, true_store, kNan);

  std::map<std::string, double> init;
  for (const auto& [k, p] : prior) init[k] = init_from_prior(rng, p);
  ParameterStore store = store_with(init);
  TrainConfig tc = train_config(get<Json>(root, "optimizer"), get<std::size_t>(root, "epochs"), opts);
  tc.batch_size = get_or<std::size_t>(root, "batch_size", 0);
  tc.shuffle_seed = seed;

  auto t0 = std::chrono::steady_clock::now();
  TrainingReport rep;
  double worst = INFINITY;
  try {
    rep = train_coefficients(prog, store, train_x, train_y, tc);
    worst = 0.0;
    for (const auto& r : recovered) {
      double err = relative_error(recovered_value(r, rep.final_params), recovered_value(r, truth));
      if (std::isnan(err)) err = INFINITY;
      worst = std::max(worst, err);
      rows.push_back(make_row(kExp, "compiled", name, "rel_error[" + r.label + "]", err));
    }
  } catch (const NonFiniteLoss& e) {
    say(name + ": training diverged (" + e.what() + ")");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double tol = get<double>(root, "tolerance");
  if (expected_failure) {
    rows.push_back(make_row(kExp, "compiled", name, "max_rel_error_expected_failure", worst));
  } else {
    rows.push_back(make_row(kExp, "compiled", name, "max_rel_error", worst, "<", tol, 4));
  }
  rows.push_back(make_row(kExp, "compiled", name, "trainable_params", static_cast<double>(store.trainable_count()), "==",
                          static_cast<double>(truth.size()), 4));
  if (!rep.final_params.empty()) {
    // Trained constants, inputs outside the training range: still exactly the source semantics.
    Bindings env = extra_x;
    for (const auto& [k, v] : rep.final_params) env[k] = Value::scalar(v);
    rows.push_back(make_row(kExp, "compiled", name, "extrapolation_max_abs_diff_vs_interpreter",
                            max_abs_diff_exact(eval_program(prog, extra_x, store, kNan), interpret_source(source, env, kNan)),
                            "==", 0.0, 1));
    rows.push_back(make_row(kExp, "compiled", name, "test_mse", mse(eval_program(prog, test_x, store, kNan), test_y)));
    rows.push_back(
        make_row(kExp, "compiled", name, "extrapolation_mse", mse(eval_program(prog, extra_x, store, kNan), extra_y)));
  }
  rows.push_back(make_row(kExp, "compiled", name, "train_seconds", secs));
  write_curve(opts, "feynman_" + name, rep.loss_curve);
  say(name + ": max rel error " + std::to_string(worst) + " in " + std::to_string(secs) + " s");

  if (opts.baselines && root.contains("mlp")) {
    const Json& mj = root["mlp"];
    const std::size_t n = std::min(n_train, get<std::size_t>(mj, "train_samples"));
    Bindings sub;
    for (const auto& [k, v] : train_x) sub[k] = Value::batch_of(n, {}, {v.data().begin(), v.data().begin() + n});
    Value feats = feature_batch(sub, input_names);
    Value target = as_column(Value::batch_of(n, {}, {train_y.data().begin(), train_y.data().begin() + n}));
    ParameterStore ms;
    MlpModel mlp = make_mlp(ms, mlp_sizes(input_names.size(), mj, 1), activation_from(get<std::string>(mj, "activation")),
                            "mlp", rng);
    TrainConfig mtc = train_config(mj, get<std::size_t>(mj, "epochs"), opts);
    try {
      auto curve = train_loop(ms, mtc, [&](Tape& tape) {
        return tape.mse(mlp_forward(tape, mlp, ms, tape.constant(feats)), target);
      });
      write_curve(opts, "feynman_" + name + "_mlp", curve);
      rows.push_back(make_row(kExp, "mlp", name, "test_mse",
                              mse(mlp_predict(mlp, ms, feature_batch(test_x, input_names)), as_column(test_y))));
      rows.push_back(make_row(kExp, "mlp", name, "extrapolation_mse",
                              mse(mlp_predict(mlp, ms, feature_batch(extra_x, input_names)), as_column(extra_y))));
    } catch (const NonFiniteLoss&) {
      rows.push_back(make_row(kExp, "mlp", name, "test_mse", INFINITY));
    }
  }
  return rows;
}

}  // namespace

std::vector<ResultRow> run_feynman(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const std::uint64_t seed = seed_for(cfg, opts);
  const Json eqs = get<Json>(cfg.json, "equations");

  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    std::lock_guard lock(log_mutex);
    log(opts, "[feynman] " + line);
  };

  std::vector<std::vector<ResultRow>> per(eqs.size());
  const std::size_t workers = std::max<std::size_t>(1, opts.parallel);
  for (std::size_t start = 0; start < eqs.size(); start += workers) {
    std::vector<std::future<std::vector<ResultRow>>> jobs;
    for (std::size_t i = start; i < std::min(eqs.size(), start + workers); ++i) {
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return run_equation(cfg, eqs[i], seed + i, opts, say); }));
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) per[start + j] = jobs[j].get();
  }

  std::vector<ResultRow> rows;
  std::size_t recovered = 0;
  for (std::size_t i = 0; i < per.size(); ++i) {
    for (const auto& r : per[i]) {
      rows.push_back(r);
      if (r.metric == "max_rel_error" && r.passed) ++recovered;
    }
  }
  const double need = static_cast<double>(get_or<std::size_t>(cfg.json, "required_recoveries", 13));
  rows.push_back(make_row(kExp, "compiled", "all", "equations_recovered", static_cast<double>(recovered), ">=", need, 4));
  return rows;
}

}  // namespace ncomp
