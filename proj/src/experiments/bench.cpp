#include <pthread.h>

#include <chrono>
#include <exception>

#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;
using Clock = std::chrono::steady_clock;

constexpr const char* kExp = "bench";

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Seconds per evaluation, repeating until at least `min_seconds` has elapsed.
double time_eval(const CompiledProgram& prog, const Bindings& inputs, double min_seconds) {
  std::size_t reps = 0;
  auto t0 = Clock::now();
  double elapsed = 0.0;
  do {
    Value v = eval_program(prog, inputs);
    if (v.size() == 0) throw Error("empty benchmark output");
    ++reps;
    elapsed = seconds_since(t0);
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(reps);
}

struct DeepRun {
  const CompiledProgram* prog;
  double n;
  Value result;
  std::exception_ptr error;
};

void* deep_loop_thread(void* arg) {
  auto* run = static_cast<DeepRun*>(arg);
  try {
    run->result = eval_program(*run->prog, {{"n", Value::scalar(run->n)}});
  } catch (...) {
    run->error = std::current_exception();
  }
  return nullptr;
}

/// Evaluates on a thread with a deliberately small stack: only an iterative executor finishes.
Value run_on_small_stack(const CompiledProgram& prog, double n, std::size_t stack_bytes) {
  DeepRun run{&prog, n, {}, nullptr};
  pthread_attr_t attr;
  pthread_attr_init(&attr);
  pthread_attr_setstacksize(&attr, stack_bytes);
  pthread_t th;
  const int rc = pthread_create(&th, &attr, deep_loop_thread, &run);
  pthread_attr_destroy(&attr);
  if (rc != 0) throw Error("cannot start benchmark thread");
  pthread_join(th, nullptr);
  if (run.error) std::rethrow_exception(run.error);
  return run.result;
}

}  // namespace

std::vector<ResultRow> run_bench(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  Rng rng(seed_for(cfg, opts));
  std::vector<ResultRow> rows;
  const auto sizes = get<std::vector<std::size_t>>(j, "batch_sizes");
  const double min_seconds = get<double>(j, "min_seconds");

  for (const auto& p : j.at("programs")) {
    const auto name = get<std::string>(p, "name");
    const std::string source = read_text(cfg.path(get<std::string>(p, "source")));
    std::vector<std::string> inputs;
    for (const auto& [k, v] : p.at("inputs").items()) inputs.push_back(k);

    auto t0 = Clock::now();
    const CompiledProgram prog = compile(source, inputs);
    const double compile_ms = seconds_since(t0) * 1e3;
    rows.push_back(make_row(kExp, "compiled", name, "compile_ms", compile_ms, "<", get<double>(j, "compile_ms"), 11));

    std::map<std::size_t, double> per_sample;
    for (auto b : sizes) {
      Bindings in;
      for (const auto& [k, v] : p.at("inputs").items()) {
        const auto [lo, hi] = range_pair(v);
        in[k] = b == 1 ? Value::scalar(uniform(rng, lo, hi)) : uniform_batch(rng, lo, hi, b);
      }
      per_sample[b] = time_eval(prog, in, min_seconds) / static_cast<double>(b);
      rows.push_back(make_row(kExp, "compiled", name, "samples_per_sec@" + std::to_string(b), 1.0 / per_sample[b]));
    }
    const double ratio = per_sample.at(sizes.front()) / per_sample.at(sizes.back());
    rows.push_back(make_row(kExp, "compiled", name,
                            "per_sample_cost_ratio_" + std::to_string(sizes.front()) + "_vs_" + std::to_string(sizes.back()),
                            ratio, ">=", get<double>(j, "amortization"), 11));
    log(opts, "[bench] " + name + ": amortization " + std::to_string(ratio) + "x, compile " + std::to_string(compile_ms) + " ms");
  }

  const double n = get<double>(j, "deep_loop_iterations");
  const std::size_t stack = get<std::size_t>(j, "deep_loop_stack_kb") * 1024;
  for (const auto& d : j.at("deep_loops")) {
    const auto name = get<std::string>(d, "name");
    double got = NAN;
    auto t0 = Clock::now();
    try {
      const CompiledProgram prog = compile(get<std::string>(d, "source"), {"n"});
      got = run_on_small_stack(prog, n, stack).item();
    } catch (const Error& e) {
      log(opts, "[bench] " + name + " failed: " + e.what());
    }
    rows.push_back(make_row(kExp, "compiled", name, "iterations_completed", got, "==", n, 11));
    rows.push_back(make_row(kExp, "compiled", name, "seconds", seconds_since(t0)));
  }
  return rows;
}

}  // namespace ncomp
