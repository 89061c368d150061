#include <chrono>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;

constexpr const char* kExp = "composition";

std::string chain_name(const std::vector<std::string>& chain) {
  std::string s;
  for (const auto& m : chain) s += (s.empty() ? "" : "->") + m;
  return s;
}

Value native_chain(const std::vector<std::string>& chain, const Value& x) {
  Value cur = x;
  for (const auto& m : chain) cur = eval_native(handcoded_oracle(m), {{"x", cur}}, {}, {});
  return cur;
}

Value run_chain(const std::vector<ChainStage>& stages, ParameterStore& store, const Value& x) {
  Tape tape;
  return tape.value(compose_chain(tape, stages, store, tape.constant(x)));
}

}  // namespace

std::vector<ResultRow> run_composition(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  Rng rng(seed_for(cfg, opts));
  std::vector<ResultRow> rows;

  std::map<std::string, CompiledProgram> modules;
  for (const auto& [name, file] : j.at("modules").items()) {
    modules.emplace(name, load_program(cfg.path(file.get<std::string>()), {"x"}, {}));
  }
  const auto chains = get<std::vector<std::vector<std::string>>>(j, "chains");
  const auto [lo, hi] = range_pair(get<Json>(j, "train_range"));
  const double factor = get<double>(j, "extrapolation_factor");
  const auto n = get<std::size_t>(j, "eval_points");
  const Value in_dist = uniform_batch(rng, lo, hi, n);
  const Value extra = uniform_batch(rng, lo * factor, hi * factor, n);
  const std::vector<std::pair<std::string, const Value*>> ranges{{"in_dist", &in_dist}, {"extrap", &extra}};

  // One network per operation, each fitted on the training range only.
  const Json& mj = get<Json>(j, "mlp");
  ParameterStore nets;
  std::map<std::string, MlpModel> mlps;
  auto t0 = std::chrono::steady_clock::now();
  for (const auto& [name, prog] : modules) {
    const Value x = uniform_batch(rng, lo, hi, get<std::size_t>(mj, "train_samples"));
    const Value y = as_column(eval_program(prog, {{"x", x}}));
    const Value xs = as_column(x);
    MlpModel m = make_mlp(nets, mlp_sizes(1, mj, 1), activation_from(get<std::string>(mj, "activation")), name, rng);
    auto curve = train_loop(nets, train_config(mj, get<std::size_t>(mj, "epochs"), opts),
                            [&](Tape& tape) { return tape.mse(mlp_forward(tape, m, nets, tape.constant(xs)), y); });
    rows.push_back(make_row(kExp, "mlp", name, "final_train_loss", curve.back()));
    write_curve(opts, "composition_" + name, curve);
    mlps.emplace(name, std::move(m));
    // Later networks share the store; freeze this one so their training leaves it alone.
    for (std::size_t l = 0; l < mlps.at(name).layers(); ++l) {
      nets.set(mlps.at(name).weight(l), nets.value(mlps.at(name).weight(l)), false);
      nets.set(mlps.at(name).bias(l), nets.value(mlps.at(name).bias(l)), false);
    }
  }
  const double train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rows.push_back(make_row(kExp, "mlp", "all_modules", "train_seconds", train_secs));
  log(opts, "[composition] trained " + std::to_string(mlps.size()) + " module networks in " + std::to_string(train_secs) + " s");

  const auto amp_chain = get<std::vector<std::string>>(j, "amplification_chain");
  std::map<std::string, double> amp_mse;
  ParameterStore none;
  for (const auto& chain : chains) {
    std::vector<ChainStage> compiled, neural;
    for (const auto& m : chain) {
      compiled.emplace_back(&modules.at(m));
      neural.emplace_back(&mlps.at(m));
    }
    const std::string item = chain_name(chain);
    for (const auto& [label, x] : ranges) {
      const Value truth = native_chain(chain, *x);
      rows.push_back(make_row(kExp, "compiled", item, "mse_" + label, mse_exact(run_chain(compiled, none, *x), truth), "==",
                              0.0, 8));
      const double neural_mse = mse(run_chain(neural, nets, *x), truth);
      rows.push_back(make_row(kExp, "mlp", item, "mse_" + label, neural_mse));
      if (chain == amp_chain) amp_mse[label] = neural_mse;
    }
  }
  if (amp_mse.size() == 2) {
    rows.push_back(make_row(kExp, "mlp", chain_name(amp_chain), "extrap_over_in_dist_mse",
                            amp_mse["extrap"] / amp_mse["in_dist"], ">=", get<double>(j, "amplification"), 8));
  } else {
    rows.push_back(make_row(kExp, "mlp", chain_name(amp_chain), "extrap_over_in_dist_mse", 0.0, ">=",
                            get<double>(j, "amplification"), 8));
  }
  return rows;
}

}  // namespace ncomp
