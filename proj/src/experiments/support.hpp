#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ncomp/error.hpp"
#include "ncomp/experiments.hpp"
#include "ncomp/training.hpp"

namespace ncomp::detail {

using Json = nlohmann::json;

struct Config {
  Json json;
  std::filesystem::path dir;

  std::filesystem::path path(const std::string& relative) const { return dir / relative; }
};

inline Config load_config(const std::string& id, const RunOptions& opts) {
  auto file = opts.config.value_or(default_config(id));
  Config c;
  try {
    c.json = Json::parse(read_text(file));
  } catch (const Json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  c.dir = file.parent_path();
  return c;
}

template <class T>
T get(const Json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("config is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const Json& j, const std::string& key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

inline std::uint64_t seed_for(const Config& c, const RunOptions& opts) {
  return opts.seed != 0 ? opts.seed : get<std::uint64_t>(c.json, "seed");
}

inline std::size_t scaled_epochs(std::size_t epochs, const RunOptions& opts) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(epochs) * opts.epochs_scale)));
}

inline TrainConfig train_config(const Json& opt, std::size_t epochs, const RunOptions& opts) {
  TrainConfig t;
  t.epochs = scaled_epochs(epochs, opts);
  t.lr_start = get_or<double>(opt, "lr_start", 1e-2);
  t.lr_end = get_or<double>(opt, "lr_end", 1e-4);
  return t;
}

inline void log(const RunOptions& opts, const std::string& line) {
  if (opts.log) opts.log(line);
}

inline Value uniform_batch(Rng& rng, double lo, double hi, std::size_t n) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> xs(n);
  for (double& x : xs) x = u(rng);
  return Value::batch_of(n, {}, std::move(xs));
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Uniform in [0.5, 2] times the prior scale.
inline double init_from_prior(Rng& rng, double prior) { return prior * uniform(rng, 0.5, 2.0); }

inline CompiledProgram load_program(const std::filesystem::path& file, const std::vector<std::string>& inputs,
                                    const std::vector<std::string>& params) {
  return compile(read_text(file), inputs, params);
}

inline Activation activation_from(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

inline std::vector<std::size_t> mlp_sizes(std::size_t in, const Json& mlp, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  for (auto h : get<std::vector<std::size_t>>(mlp, "hidden")) sizes.push_back(h);
  sizes.push_back(out);
  return sizes;
}

inline void write_curve(const RunOptions& opts, const std::string& name, const std::vector<double>& train,
                        const std::vector<double>& test = {}) {
  if (opts.curve_dir) write_loss_curve(*opts.curve_dir / (name + ".csv"), train, test);
}

/// Mean squared error against a reference, with NaN counted as infinite.
inline double mse(const Value& a, const Value& b) {
  double m = mse_exact(a, b);
  return std::isnan(m) ? INFINITY : m;
}

struct ParamSpec {
  std::map<std::string, double> truth, prior;
};

/// {"name": {"truth": t, "prior": p}, ...}
inline ParamSpec param_spec(const Json& j) {
  ParamSpec s;
  for (const auto& [k, v] : j.items()) {
    s.truth[k] = get<double>(v, "truth");
    s.prior[k] = get<double>(v, "prior");
  }
  return s;
}

inline ParameterStore store_with(const std::map<std::string, double>& values) {
  ParameterStore s;
  for (const auto& [name, v] : values) s.set(name, Value::scalar(v));
  return s;
}

inline std::map<std::string, double> init_params(Rng& rng, const std::map<std::string, double>& prior) {
  std::map<std::string, double> out;
  for (const auto& [k, p] : prior) out[k] = init_from_prior(rng, p);
  return out;
}

inline std::pair<double, double> range_pair(const Json& j) {
  auto r = j.get<std::vector<double>>();
  if (r.size() != 2 || !(r[0] <= r[1])) throw ConfigError("ranges are [lo, hi] pairs");
  return {r[0], r[1]};
}

/// Stacks batched scalar columns into a [B, k] feature batch.
inline Value feature_batch(const Bindings& cols, const std::vector<std::string>& names) {
  const std::size_t n = *cols.at(names.at(0)).batch();
  std::vector<double> xs(n * names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    const Value& c = cols.at(names[k]);
    for (std::size_t b = 0; b < n; ++b) xs[b * names.size() + k] = c[b];
  }
  return Value::batch_of(n, {names.size()}, std::move(xs));
}

/// Reshapes a batch of scalars to a batch of width-1 vectors.
inline Value as_column(const Value& v) {
  return Value::batch_of(*v.batch(), {1}, std::vector<double>(v.data().begin(), v.data().end()));
}

}  // namespace ncomp::detail
