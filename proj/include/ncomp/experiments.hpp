#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncomp/compiler.hpp"
#include "ncomp/executor.hpp"

namespace ncomp {

/// One line of an experiment table. `criterion` names the acceptance criterion the row
/// gates (1-12), or 0 for informational rows that never affect the exit status.
struct ResultRow {
  std::string experiment;
  std::string model;  // compiled, handcoded_oracle, mlp, mlp_ode_rhs, hybrid
  std::string item;   // equation, chain, program or parameter the row is about
  std::string metric;
  double value = 0.0;
  std::string comparator = "info";  // <=, <, >=, ==, info
  double threshold = 0.0;
  int criterion = 0;
  bool passed = true;

  bool operator==(const ResultRow&) const = default;
};

/// Builds a row and evaluates it against the threshold.
ResultRow make_row(std::string experiment, std::string model, std::string item, std::string metric, double value,
                   std::string comparator = "info", double threshold = 0.0, int criterion = 0);

bool all_gating_rows_pass(const std::vector<ResultRow>& rows);

struct RunOptions {
  std::uint64_t seed = 0;  // 0: use the experiment's default seed from its config
  double epochs_scale = 1.0;
  std::size_t parallel = 1;
  std::optional<std::filesystem::path> config;  // default: configs/<id>.json in the source tree
  std::function<void(const std::string&)> log;  // progress lines; may be empty
  std::optional<std::filesystem::path> curve_dir;  // loss curves are written here when set
  bool baselines = true;  // false skips network baselines that only feed informational rows
};

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"conformance", "feynman",     "lotka_volterra", "pendulum",
                                            "heat",        "vector3d",    "composition",    "bench"};
  return ids;
}

/// Also accepts "noise_sweep". Throws UnknownEquation for any other id outside experiment_ids(), ConfigError/IoError for bad configs.
std::vector<ResultRow> run_experiment(const std::string& id, const RunOptions& opts = {});

std::vector<ResultRow> run_feynman(const RunOptions& opts);
std::vector<ResultRow> run_lotka_volterra(const RunOptions& opts);
std::vector<ResultRow> run_pendulum(const RunOptions& opts);
std::vector<ResultRow> run_heat(const RunOptions& opts);
std::vector<ResultRow> run_vector3d(const RunOptions& opts);
std::vector<ResultRow> run_composition(const RunOptions& opts);
std::vector<ResultRow> run_bench(const RunOptions& opts);

/// LV recovery error at each configured noise level.
std::vector<ResultRow> run_noise_sweep(const RunOptions& opts);

/// Interpreter agreement, gradient checks, node-count goldens, compile time, deep loops and
/// gradient scaling over the whole corpus.
std::vector<ResultRow> run_conformance(const RunOptions& opts);

// ---- native closures -----------------------------------------------------

/// Scalar inputs and parameters by name; vector/matrix arguments are flat.
using NativeArgs = std::map<std::string, std::vector<double>>;
using NativeFn = std::function<std::vector<double>(const NativeArgs&)>;

/// Hand-written evaluation of an experiment equation with the same operation order as its
/// source. Throws UnknownEquation.
const NativeFn& handcoded_oracle(const std::string& equation);
std::vector<std::string> handcoded_equations();

/// Evaluates a native closure element by element over batched inputs and scalar parameters.
Value eval_native(const NativeFn& fn, const Bindings& inputs, const std::map<std::string, double>& params,
                  const Shape& out_elem_shape);

// ---- reports ----------------------------------------------------------------

std::string rows_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> rows_from_csv(const std::string& text);
std::string rows_to_json(const std::vector<ResultRow>& rows);
std::string rows_to_markdown(const std::vector<ResultRow>& rows);

/// Writes rows.<ext> for format csv, json or markdown (report.md) into dir. ConfigError for an
/// unknown format, IoError when the directory is not writable.
std::filesystem::path emit_report(const std::vector<ResultRow>& rows, const std::string& format,
                                  const std::filesystem::path& dir);

void write_loss_curve(const std::filesystem::path& file, const std::vector<double>& train,
                      const std::vector<double>& test = {});

// ---- shared helpers -------------------------------------------------------

std::filesystem::path source_root();
std::filesystem::path default_config(const std::string& id);
std::string read_text(const std::filesystem::path& p);

/// Bit-exact comparison treating identical bit patterns (including inf/nan) as zero difference.
double max_abs_diff_exact(const Value& a, const Value& b);
/// Mean squared error; identical bit patterns contribute exactly zero.
double mse_exact(const Value& a, const Value& b);

}  // namespace ncomp
