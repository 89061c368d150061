#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncomp/error.hpp"
#include "ncomp/experiments.hpp"
#include "ncomp/gradcheck.hpp"
#include "ncomp/training.hpp"

namespace fs = std::filesystem;
using namespace ncomp;

namespace {

constexpr int kPass = 0, kFail = 1, kUsage = 2;

/// A path to a .scm file, or the program text itself.
std::string program_text(const std::string& arg) {
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) return read_text(arg);
  return arg;
}

/// name=JSON, where a number is a scalar, a flat array a vector and a nested array a matrix.
std::pair<std::string, Value> parse_binding(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected name=value, got '" + text + "'");
  const std::string name = text.substr(0, eq);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.substr(eq + 1));
    if (j.is_number()) return {name, Value::scalar(j.get<double>())};
    if (j.is_array() && !j.empty() && j[0].is_array()) {
      const auto rows = j.get<std::vector<std::vector<double>>>();
      std::vector<double> flat;
      for (const auto& r : rows) {
        if (r.size() != rows[0].size()) throw ConfigError("ragged matrix for '" + name + "'");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      return {name, Value::matrix(rows.size(), rows[0].size(), std::move(flat))};
    }
    return {name, Value::vector(j.get<std::vector<double>>())};
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("cannot read a value for '" + name + "' from '" + text.substr(eq + 1) + "'");
  }
}

struct ProgramArgs {
  std::string source;
  std::vector<std::string> inputs, params;
};

void add_program_args(CLI::App* cmd, ProgramArgs& a, bool with_values) {
  cmd->add_option("program", a.source, "Program file or source text")->required();
  if (with_values) {
    cmd->add_option("-i,--input", a.inputs, "Input binding name=value (repeatable)");
    cmd->add_option("-p,--param", a.params, "Parameter binding name=value (repeatable)");
  } else {
    cmd->add_option("-i,--input", a.inputs, "Input names");
    cmd->add_option("-p,--param", a.params, "Parameter names");
  }
}

struct Bound {
  CompiledProgram prog;
  Bindings inputs;
  ParameterStore params;
};

Bound bind(const ProgramArgs& a) {
  Bound b;
  std::vector<std::string> in_names, param_names;
  for (const auto& s : a.inputs) {
    auto [k, v] = parse_binding(s);
    in_names.push_back(k);
    b.inputs[k] = v;
  }
  for (const auto& s : a.params) {
    auto [k, v] = parse_binding(s);
    param_names.push_back(k);
    b.params.set(k, v);
  }
  b.prog = compile(program_text(a.source), in_names, param_names);
  return b;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

/// Header row of column names, then numeric rows.
std::map<std::string, std::vector<double>> read_csv_columns(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(file.string() + " is empty");
  const auto header = split(line);
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw ConfigError(file.string() + ": row width differs from the header");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      try {
        cols[header[k]].push_back(std::stod(cells[k]));
      } catch (const std::exception&) {
        throw ConfigError(file.string() + ": '" + cells[k] + "' is not a number");
      }
    }
  }
  return cols;
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

fs::path fresh_dir(const fs::path& base) {
  fs::path dir = base;
  for (int k = 1; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  return dir;
}

struct ExperimentArgs {
  std::optional<std::string> config;
  std::uint64_t seed = 0;
  std::string out = "results";
  double epochs_scale = 1.0;
  std::size_t parallel = 1;
  bool no_baselines = false;
};

void add_experiment_args(CLI::App* cmd, ExperimentArgs& a) {
  cmd->add_option("--config", a.config, "Config file (default: configs/<id>.json)");
  cmd->add_option("--seed", a.seed, "Seed override (0 keeps the config seed)");
  cmd->add_option("--out", a.out, "Results root directory")->capture_default_str();
  cmd->add_option("--epochs-scale", a.epochs_scale, "Multiplier on every epoch count")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--parallel", a.parallel, "Worker threads for independent fits")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_flag("--no-baselines", a.no_baselines, "Skip network baselines that only feed informational rows");
}

int run_experiments(const std::vector<std::string>& ids, const ExperimentArgs& a) {
  if (a.config && ids.size() != 1) throw ConfigError("--config applies to a single experiment");
  bool ok = true;
  for (const auto& id : ids) {
    const fs::path dir = fresh_dir(fs::path(a.out) / id / timestamp());
    RunOptions opts;
    opts.seed = a.seed;
    opts.epochs_scale = a.epochs_scale;
    opts.parallel = a.parallel;
    if (a.config) opts.config = *a.config;
    opts.curve_dir = dir / "loss_curves";
    opts.baselines = !a.no_baselines;
    opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
    std::cerr << "[" << id << "] running\n";
    const auto rows = run_experiment(id, opts);
    for (const char* fmt : {"csv", "json", "markdown"}) emit_report(rows, fmt, dir);
    std::cout << rows_to_markdown(rows) << "\n";
    const bool pass = all_gating_rows_pass(rows);
    std::cerr << "[" << id << "] " << (pass ? "PASS" : "FAIL") << ", results in " << dir.string() << "\n";
    ok = ok && pass;
  }
  return ok ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile numeric Scheme programs to differentiable instruction sequences and run the experiments"};
  app.require_subcommand(1);

  ProgramArgs compile_args, eval_args, grad_args, train_args;
  auto* compile_cmd = app.add_subcommand("compile", "Print the instruction listing of a program");
  add_program_args(compile_cmd, compile_args, false);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a program at one point");
  add_program_args(eval_cmd, eval_args, true);

  auto* grad_cmd = app.add_subcommand("grad", "Gradient of the summed output with respect to inputs and parameters");
  add_program_args(grad_cmd, grad_args, true);
  bool check = false;
  grad_cmd->add_flag("--check", check, "Also compare against central differences");

  auto* train_cmd = app.add_subcommand("train", "Fit program parameters to a CSV data set by MSE");
  train_cmd->add_option("program", train_args.source, "Program file or source text")->required();
  train_cmd->add_option("-p,--param", train_args.params, "Parameter with its initial value, name=value")->required();
  std::string data, target = "y";
  TrainConfig tc;
  train_cmd->add_option("--data", data, "CSV with a header row; every non-target column is an input")->required();
  train_cmd->add_option("--target", target, "Target column")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Adam steps")->capture_default_str();
  train_cmd->add_option("--lr-start", tc.lr_start, "Initial cosine learning rate")->capture_default_str();
  train_cmd->add_option("--lr-end", tc.lr_end, "Final cosine learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size, "Minibatch size (0: full batch)")->capture_default_str();

  ExperimentArgs exp_args, bench_args, all_args;
  std::string exp_id;
  auto* exp_cmd = app.add_subcommand("experiment", "Run one experiment and write its result tables");
  std::vector<std::string> known = experiment_ids();
  known.push_back("noise_sweep");
  exp_cmd->add_option("id", exp_id, "Experiment id")->required()->check(CLI::IsMember(known));
  add_experiment_args(exp_cmd, exp_args);
  auto* bench_cmd = app.add_subcommand("bench", "Batch amortization, compile time and deep loop benchmarks");
  add_experiment_args(bench_cmd, bench_args);
  auto* all_cmd = app.add_subcommand("all", "Run every experiment");
  add_experiment_args(all_cmd, all_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*compile_cmd) {
      const auto prog = compile(program_text(compile_args.source), compile_args.inputs, compile_args.params);
      std::cout << disassemble(prog);
      return kPass;
    }
    if (*eval_cmd) {
      Bound b = bind(eval_args);
      std::cout << eval_program(b.prog, b.inputs, b.params).to_string() << "\n";
      return kPass;
    }
    if (*grad_cmd) {
      Bound b = bind(grad_args);
      TapedEval run = eval_with_tape(b.prog, b.inputs, b.params);
      const GradResult g = backward(run, Value::filled(run.value.elem_shape(), run.value.batch(), 1.0));
      std::cout << "value " << g.output.to_string() << "\n";
      for (const auto& [k, v] : g.input_grads) std::cout << "d/d" << k << " " << v.to_string() << "\n";
      for (const auto& [k, v] : g.param_grads) std::cout << "d/d" << k << " " << v.to_string() << "\n";
      if (check) {
        b.params.zero_grads();
        const auto rep = finite_diff_check(b.prog, b.inputs, b.params);
        std::cout << "finite difference max rel error " << rep.max_rel_error << " at " << rep.worst << " ("
                  << (rep.passed ? "ok" : "MISMATCH") << ")\n";
        return rep.passed ? kPass : kFail;
      }
      return kPass;
    }
    if (*train_cmd) {
      auto cols = read_csv_columns(data);
      if (!cols.count(target)) throw ConfigError("no column '" + target + "' in " + data);
      Bindings inputs;
      std::vector<std::string> in_names, param_names;
      for (auto& [k, v] : cols) {
        if (k == target) continue;
        in_names.push_back(k);
        const std::size_t n = v.size();
        inputs[k] = Value::batch_of(n, {}, std::move(v));
      }
      const std::size_t n = cols.at(target).size();
      const Value y = Value::batch_of(n, {}, cols.at(target));
      ParameterStore store;
      for (const auto& s : train_args.params) {
        auto [k, v] = parse_binding(s);
        param_names.push_back(k);
        store.set(k, v);
      }
      const auto prog = compile(program_text(train_args.source), in_names, param_names);
      const auto rep = train_coefficients(prog, store, inputs, y, tc);
      std::cout << "final loss " << rep.loss_curve.back() << "\n";
      for (const auto& [k, v] : rep.final_params) std::cout << k << " " << v << "\n";
      return kPass;
    }
    if (*exp_cmd) return run_experiments({exp_id}, exp_args);
    if (*bench_cmd) return run_experiments({"bench"}, bench_args);
    if (*all_cmd) return run_experiments(experiment_ids(), all_args);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
