// Runs every experiment and judges its gating rows against thresholds fixed here, so a config
// edit cannot loosen the bar. Prints one line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ncomp/experiments.hpp"

using namespace ncomp;

namespace {

struct Rule {
  int criterion;
  std::string experiment;  // "*" for any
  std::string metric;      // trailing '*' matches a prefix
  std::string item;        // "*" for any, trailing '*' matches a prefix
  std::string comparator;  // "self": the row's own structural count
  double threshold = 0.0;
};

bool matches(const std::string& pattern, const std::string& s) {
  if (pattern == "*") return true;
  if (!pattern.empty() && pattern.back() == '*') return s.rfind(pattern.substr(0, pattern.size() - 1), 0) == 0;
  return pattern == s;
}

std::vector<Rule> pinned_rules() {
  std::vector<Rule> r{
      {1, "*", "max_abs_diff_vs_interpreter", "*", "==", 0.0},
      {1, "feynman", "extrapolation_max_abs_diff_vs_interpreter", "*", "==", 0.0},
      {1, "conformance", "interpreter_check_seconds", "*", "<", 10.0},
      {2, "conformance", "grad_max_rel_error", "*", "<=", 1e-6},
      {2, "conformance", "grad_check_seconds", "*", "<", 30.0},
      {3, "*", "max_abs_diff", "*", "==", 0.0},
      {4, "feynman", "max_rel_error", "*", "<", 0.01},
      {4, "feynman", "trainable_params", "*", "self"},
      {4, "feynman", "equations_recovered", "*", ">=", 13.0},
      {5, "lotka_volterra", "max_rel_error", "rates@*", "<=", 0.015},
      {5, "lotka_volterra", "trainable_params", "*", "==", 4.0},
      // Twice the published maximum error at each noise level; noise-free must be essentially exact.
      {5, "lotka_volterra", "max_rel_error", "sweep_noise=0%", "<", 1e-6},
      {5, "lotka_volterra", "max_rel_error", "sweep_noise=1%", "<=", 2 * 0.00663},
      {5, "lotka_volterra", "max_rel_error", "sweep_noise=2%", "<=", 2 * 0.01166},
      {5, "lotka_volterra", "max_rel_error", "sweep_noise=5%", "<=", 2 * 0.03232},
      {5, "lotka_volterra", "max_rel_error", "sweep_noise=10%", "<=", 2 * 0.10846},
      {6, "pendulum", "rel_error", "g_L", "<=", 0.005},
      {6, "pendulum", "rel_error", "b", "<=", 0.01},
      {6, "pendulum", "trainable_params", "*", "==", 2.0},
      {6, "pendulum", "in_dist_mse_ratio", "*", ">=", 100.0},
      {7, "heat", "rel_error", "alpha", "<=", 1e-4},
      {7, "heat", "trainable_params", "alpha", "==", 1.0},
      {7, "heat", "mse", "rollout_*", "<=", 1e-12},
      {7, "heat", "final_loss_ratio", "*", ">=", 20.0},
      {8, "composition", "mse_in_dist", "*", "==", 0.0},
      {8, "composition", "mse_extrap", "*", "==", 0.0},
      {8, "composition", "extrap_over_in_dist_mse", "*", ">=", 1000.0},
      {9, "vector3d", "rel_error", "G", "<=", 0.001},
      {9, "vector3d", "test_mse_ratio", "*", ">=", 1e4},
      {10, "conformance", "slot_count", "listing_golden", "==", 7.0},
      {10, "conformance", "matching_slots", "listing_golden", "==", 7.0},
      {11, "*", "compile_ms", "*", "<", 10.0},
      {11, "bench", "per_sample_cost_ratio_*", "*", ">=", 50.0},
      {11, "bench", "iterations_completed", "*", "==", 1e6},
      {12, "conformance", "grad_rel_error", "square_chain_depth_*", "<=", 1e-9},
      {12, "conformance", "grad_at_zero", "residual_chain_*", "==", 1.0},
  };
  const std::vector<std::pair<std::string, double>> nodes{
      {"planck", 3},  {"hooke", 5},      {"kinetic", 6},    {"gravity", 8},    {"ideal_gas", 5},
      {"pendulum", 6}, {"heat", 5},      {"coulomb", 8},    {"gaussian", 15},  {"rel_energy", 14},
      {"sound", 7},    {"barometric", 14}, {"efield", 6},   {"oscillator", 8}, {"lorentz", 10}};
  for (const auto& [name, n] : nodes) r.push_back({10, "conformance", "node_count", name, "==", n});
  return r;
}

const char* kTitles[] = {"",
                         "compiled output equals the interpreter bit-exactly",
                         "reverse-mode gradients match central differences",
                         "compiled equals hand-coded closures exactly",
                         "Feynman coefficient recovery",
                         "Lotka-Volterra rates and noise sweep",
                         "pendulum constants and in-distribution MSE ratio",
                         "heat equation diffusivity, rollouts and hybrid source",
                         "composition chains exact, neural chains amplify",
                         "3D gravity constant and MSE ratio",
                         "node counts and instruction listing goldens",
                         "batch amortization, compile time, deep loops",
                         "gradient scaling along squaring and residual chains"};

struct Verdict {
  std::size_t rows = 0, passed = 0;
  std::vector<std::string> failures;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> known_failures;
  double epochs_scale = 1.0;
  std::vector<std::string> only;
  app.add_option("--known-failure", known_failures,
                 "Criterion expected to fail; the suite still exits 0 when it does and only it does");
  app.add_option("--epochs-scale", epochs_scale, "Multiplier on every epoch count")->capture_default_str();
  app.add_option("--only", only, "Run only these experiments");
  CLI11_PARSE(app, argc, argv);

  const auto rules = pinned_rules();
  std::map<int, Verdict> verdicts;
  for (int c = 1; c <= 12; ++c) verdicts[c];
  std::vector<std::string> unpinned;

  for (const auto& id : experiment_ids()) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    RunOptions opts;
    opts.epochs_scale = epochs_scale;
    // Network baselines that only feed informational rows are skipped to keep the suite short.
    opts.baselines = id != "feynman" && id != "pendulum";
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ResultRow> rows;
    try {
      rows = run_experiment(id, opts);
    } catch (const std::exception& e) {
      std::cout << "[ERROR] " << id << ": " << e.what() << "\n";
      return 2;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "  ran " << id << " (" << rows.size() << " rows, " << std::round(secs) << " s)\n" << std::flush;

    for (const auto& row : rows) {
      if (row.criterion == 0) continue;
      const Rule* rule = nullptr;
      for (const auto& r : rules) {
        if (r.criterion == row.criterion && matches(r.experiment, row.experiment) && matches(r.metric, row.metric) &&
            matches(r.item, row.item)) {
          rule = &r;
          break;
        }
      }
      Verdict& v = verdicts[row.criterion];
      ++v.rows;
      if (!rule) {
        unpinned.push_back(id + "/" + row.item + "/" + row.metric);
        v.failures.push_back(row.item + " " + row.metric + ": no pinned threshold");
        continue;
      }
      const bool self = rule->comparator == "self";
      const ResultRow judged = make_row(row.experiment, row.model, row.item, row.metric, row.value,
                                        self ? "==" : rule->comparator, self ? row.threshold : rule->threshold,
                                        row.criterion);
      if (judged.passed) {
        ++v.passed;
      } else {
        std::ostringstream s;
        s << id << "/" << row.item << " " << row.metric << " = " << row.value << " (needs " << judged.comparator << " "
          << judged.threshold << ")";
        v.failures.push_back(s.str());
      }
    }
  }

  const std::set<int> expected(known_failures.begin(), known_failures.end());
  bool ok = true;
  std::cout << "\n";
  for (const auto& [c, v] : verdicts) {
    const bool ran = v.rows > 0;
    const bool pass = ran && v.failures.empty();
    std::cout << (pass ? "[PASS] " : ran ? "[FAIL] " : "[SKIP] ") << "C" << c << " " << kTitles[c] << " (" << v.passed
              << "/" << v.rows << " rows)";
    if (!pass && ran && expected.count(c)) std::cout << " [known failure]";
    if (pass && expected.count(c)) std::cout << " [listed as known failure but passed]";
    std::cout << "\n";
    for (const auto& f : v.failures) std::cout << "         " << f << "\n";
    if (!ran && only.empty()) ok = false;
    if (ran && pass == static_cast<bool>(expected.count(c))) ok = false;
  }
  for (const auto& u : unpinned) std::cout << "unpinned gating row: " << u << "\n";
  std::cout << (ok ? "acceptance: OK\n" : "acceptance: FAILED\n");
  return ok ? 0 : 1;
}
