#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ncomp/error.hpp"
#include "ncomp/experiments.hpp"

#ifndef NCOMP_SOURCE_DIR
#define NCOMP_SOURCE_DIR "."
#endif

namespace ncomp {

ResultRow make_row(std::string experiment, std::string model, std::string item, std::string metric, double value,
                   std::string comparator, double threshold, int criterion) {
  ResultRow r{std::move(experiment), std::move(model), std::move(item), std::move(metric), value,
              std::move(comparator), threshold, criterion, true};
  if (r.comparator == "<=") {
    r.passed = value <= threshold;
  } else if (r.comparator == "<") {
    r.passed = value < threshold;
  } else if (r.comparator == ">=") {
    r.passed = value >= threshold;
  } else if (r.comparator == "==") {
    r.passed = value == threshold;
  } else if (r.comparator != "info") {
    throw ConfigError("unknown comparator '" + r.comparator + "'");
  }
  return r;
}

bool all_gating_rows_pass(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    if (r.criterion != 0 && !r.passed) return false;
  }
  return true;
}

std::filesystem::path source_root() {
  if (const char* env = std::getenv("NCOMP_ROOT")) return env;
  return NCOMP_SOURCE_DIR;
}

std::filesystem::path default_config(const std::string& id) { return source_root() / "configs" / (id + ".json"); }

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double max_abs_diff_exact(const Value& a, const Value& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("compared values differ in shape");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    if (std::memcmp(&x, &y, sizeof x) == 0) continue;
    const double d = std::abs(x - y);
    m = std::isnan(d) ? INFINITY : std::max(m, d);
  }
  return m;
}

double mse_exact(const Value& a, const Value& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("compared values differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    if (std::memcmp(&x, &y, sizeof x) == 0) continue;
    s += (x - y) * (x - y);
  }
  return s / static_cast<double>(a.size());
}

std::vector<ResultRow> run_experiment(const std::string& id, const RunOptions& opts) {
  if (id == "feynman") return run_feynman(opts);
  if (id == "lotka_volterra") return run_lotka_volterra(opts);
  if (id == "pendulum") return run_pendulum(opts);
  if (id == "heat") return run_heat(opts);
  if (id == "vector3d") return run_vector3d(opts);
  if (id == "composition") return run_composition(opts);
  if (id == "bench") return run_bench(opts);
  if (id == "conformance") return run_conformance(opts);
  if (id == "noise_sweep") return run_noise_sweep(opts);
  throw UnknownEquation("unknown experiment '" + id + "'");
}

}  // namespace ncomp
