#include <chrono>
#include <sstream>

#include "ncomp/gradcheck.hpp"
#include "ncomp/interpreter.hpp"
#include "support.hpp"

namespace ncomp {
namespace {

using namespace detail;
using Clock = std::chrono::steady_clock;

constexpr const char* kExp = "conformance";

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Case {
  std::string name;
  std::string source;
  std::vector<std::string> inputs;
  std::map<std::string, Json> specs;  // per input: [lo, hi] or {"shape", "range", "diagonal", "min_abs"}
  std::map<std::string, double> params;
  std::optional<std::size_t> nodes;
};

Case make_case(std::string name, std::string source, const Json& inputs, std::map<std::string, double> params) {
  Case c{std::move(name), std::move(source), {}, {}, std::move(params), std::nullopt};
  for (const auto& [k, v] : inputs.items()) {
    c.inputs.push_back(k);
    c.specs[k] = v;
  }
  return c;
}

Value sample_input(Rng& rng, const Json& spec) {
  if (spec.is_array()) {
    const auto [lo, hi] = range_pair(spec);
    return Value::scalar(uniform(rng, lo, hi));
  }
  const auto [lo, hi] = range_pair(get<Json>(spec, "range"));
  const auto shape = get_or<std::vector<std::size_t>>(spec, "shape", {});
  const double min_abs = get_or<double>(spec, "min_abs", 0.0);
  auto draw = [&] {
    double x;
    do x = uniform(rng, lo, hi);
    while (std::abs(x) < min_abs);
    return x;
  };
  if (shape.empty()) return Value::scalar(draw());
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> xs(n);
  for (double& x : xs) x = draw();
  if (shape.size() == 1) return Value::vector(std::move(xs));
  if (shape.size() != 2) throw ConfigError("inputs are scalars, vectors or matrices");
  const double diag = get_or<double>(spec, "diagonal", 0.0);
  for (std::size_t i = 0; i < std::min(shape[0], shape[1]); ++i) xs[i * shape[1] + i] += diag;
  return Value::matrix(shape[0], shape[1], std::move(xs));
}

Bindings sample_point(Rng& rng, const Case& c) {
  Bindings b;
  for (const auto& name : c.inputs) b[name] = sample_input(rng, c.specs.at(name));
  return b;
}

std::vector<std::string> param_names(const Case& c) {
  std::vector<std::string> out;
  for (const auto& [k, v] : c.params) out.push_back(k);
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

/// Each stage rebinds x to the previous stage's output.
std::string chain_source(const std::vector<std::string>& stages) {
  std::string cur = "x";
  for (const auto& s : stages) cur = "(let ((x " + cur + "))\n" + trim(s) + "\n)";
  return cur;
}

std::vector<Case> corpus_cases(const Config& cfg) {
  const Json& j = cfg.json;
  std::vector<Case> cases;

  const Config fey{Json::parse(read_text(cfg.path(get<std::string>(j, "feynman")))),
                   cfg.path(get<std::string>(j, "feynman")).parent_path()};
  for (const auto& eq : fey.json.at("equations")) {
    Case c = make_case(get<std::string>(eq, "name"), read_text(fey.path(get<std::string>(eq, "source"))), eq.at("inputs"),
                       param_spec(eq.at("params")).truth);
    c.nodes = get<std::size_t>(eq, "nodes");
    cases.push_back(std::move(c));
  }

  for (const auto& p : j.at("programs")) {
    cases.push_back(make_case(get<std::string>(p, "name"), read_text(cfg.path(get<std::string>(p, "source"))), p.at("inputs"),
                              get_or<std::map<std::string, double>>(p, "params", {})));
  }

  const auto comp_file = cfg.path(get<std::string>(j, "composition"));
  const Config comp{Json::parse(read_text(comp_file)), comp_file.parent_path()};
  std::map<std::string, std::string> modules;
  for (const auto& [name, file] : comp.json.at("modules").items()) {
    modules[name] = read_text(comp.path(file.get<std::string>()));
  }
  // sqrt_abs has a kink at zero, so keep gradient points away from it.
  Json x_spec{{"x", {{"range", get<Json>(comp.json, "train_range")}, {"min_abs", 0.25}}}};
  for (const auto& [name, src] : modules) cases.push_back(make_case("module_" + name, src, x_spec, {}));
  for (const auto& chain : get<std::vector<std::vector<std::string>>>(comp.json, "chains")) {
    std::vector<std::string> stages;
    std::string name = "chain";
    for (const auto& m : chain) {
      stages.push_back(modules.at(m));
      name += "_" + m;
    }
    cases.push_back(make_case(name, chain_source(stages), x_spec, {}));
  }

  const auto bench_file = cfg.path(get<std::string>(j, "bench"));
  const Config bench{Json::parse(read_text(bench_file)), bench_file.parent_path()};
  for (const auto& p : bench.json.at("programs")) {
    cases.push_back(make_case("bench_" + get<std::string>(p, "name"), read_text(bench.path(get<std::string>(p, "source"))),
                              p.at("inputs"), {}));
  }
  return cases;
}

/// Matches the listing line by line against [expression, role] pairs, ignoring column padding.
std::size_t matching_slots(const std::string& listing, const std::vector<std::pair<std::string, std::string>>& golden) {
  std::istringstream in(listing);
  std::string line;
  std::size_t k = 0, matched = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (k >= golden.size()) return 0;
    const auto eq = line.find(" = "), semi = line.rfind(';');
    if (eq == std::string::npos || semi == std::string::npos) return 0;
    const std::string slot = trim(line.substr(0, eq));
    const std::string expr = trim(line.substr(eq + 3, semi - eq - 3));
    const std::string role = trim(line.substr(semi + 1));
    if (slot == "slot[" + std::to_string(k) + "]" && expr == golden[k].first && role == golden[k].second) ++matched;
    ++k;
  }
  return k == golden.size() ? matched : 0;
}

/// (let ((z step)) ...) nested `depth` times around x.
std::string nested(const std::string& step, std::size_t depth) {
  std::string src = "z";
  for (std::size_t i = 0; i < depth; ++i) src = "(let ((z " + step + ")) " + src + ")";
  return "(let ((z x)) " + src + ")";
}

double grad_at(const std::string& source, double x) {
  const CompiledProgram prog = compile(source, {"x"});
  ParameterStore none;
  TapedEval run = eval_with_tape(prog, {{"x", Value::scalar(x)}}, none);
  return backward(run, Value::scalar(1.0)).input_grads.at("x").item();
}

}  // namespace

std::vector<ResultRow> run_conformance(const RunOptions& opts) {
  const Config cfg = load_config(kExp, opts);
  const Json& j = cfg.json;
  Rng rng(seed_for(cfg, opts));
  std::vector<ResultRow> rows;
  const std::vector<Case> cases = corpus_cases(cfg);

  std::vector<CompiledProgram> progs;
  const double compile_limit = get<double>(j, "compile_ms");
  for (const auto& c : cases) {
    // Best of three, to keep scheduler noise out of a sub-millisecond measurement.
    double best = INFINITY;
    for (int rep = 0; rep < 3; ++rep) {
      CompiledProgram p = compile(c.source, c.inputs, param_names(c));
      best = std::min(best, std::chrono::duration<double, std::milli>(p.compile_time).count());
      if (rep == 2) progs.push_back(std::move(p));
    }
    rows.push_back(make_row(kExp, "compiled", c.name, "compile_ms", best, "<", compile_limit, 11));
    if (c.nodes) {
      rows.push_back(make_row(kExp, "compiled", c.name, "node_count", static_cast<double>(progs.back().node_count), "==",
                              static_cast<double>(*c.nodes), 10));
    }
  }

  {
    const auto n = get<std::size_t>(j, "oracle_points");
    auto t0 = Clock::now();
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const Case& c = cases[i];
      const ParameterStore store = store_with(c.params);
      double worst = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        Bindings in = sample_point(rng, c);
        const Value compiled = eval_program(progs[i], in, store);
        for (const auto& [p, v] : c.params) in[p] = Value::scalar(v);
        worst = std::max(worst, max_abs_diff_exact(compiled, interpret_source(c.source, in)));
      }
      rows.push_back(make_row(kExp, "compiled", c.name, "max_abs_diff_vs_interpreter", worst, "==", 0.0, 1));
    }
    const double secs = seconds_since(t0);
    rows.push_back(make_row(kExp, "compiled", "all_programs", "interpreter_check_seconds", secs, "<",
                            get<double>(j, "oracle_seconds"), 1));
    log(opts, "[conformance] interpreter agreement over " + std::to_string(cases.size()) + " programs in " +
                  std::to_string(secs) + " s");
  }

  {
    const auto n = get<std::size_t>(j, "grad_points");
    const double h = get<double>(j, "grad_step"), tol = get<double>(j, "grad_tolerance");
    auto t0 = Clock::now();
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const Case& c = cases[i];
      ParameterStore store = store_with(c.params);
      double worst = 0.0;
      std::string where;
      for (std::size_t k = 0; k < n; ++k) {
        const GradCheckReport rep = finite_diff_check(progs[i], sample_point(rng, c), store, h, tol);
        if (!(rep.max_rel_error <= worst)) {
          worst = std::isnan(rep.max_rel_error) ? INFINITY : rep.max_rel_error;
          where = rep.worst;
        }
      }
      rows.push_back(make_row(kExp, "compiled", c.name, "grad_max_rel_error", worst, "<=", tol, 2));
      if (worst > tol) log(opts, "[conformance] " + c.name + " gradient mismatch at " + where);
    }
    const double secs = seconds_since(t0);
    rows.push_back(make_row(kExp, "compiled", "all_programs", "grad_check_seconds", secs, "<",
                            get<double>(j, "grad_seconds"), 2));
    log(opts, "[conformance] gradient checks in " + std::to_string(secs) + " s");
  }

  {
    const Json& fj = get<Json>(j, "listing_golden");
    const CompiledProgram prog = compile(get<std::string>(fj, "source"), get<std::vector<std::string>>(fj, "inputs"));
    const auto golden = get<std::vector<std::pair<std::string, std::string>>>(fj, "slots");
    rows.push_back(make_row(kExp, "compiled", "listing_golden", "slot_count", static_cast<double>(prog.program.slot_count),
                            "==", static_cast<double>(golden.size()), 10));
    rows.push_back(make_row(kExp, "compiled", "listing_golden", "matching_slots",
                            static_cast<double>(matching_slots(disassemble(prog), golden)), "==",
                            static_cast<double>(golden.size()), 10));
  }

  {
    const Json& sj = get<Json>(j, "scaling");
    const double x = get<double>(sj, "x"), tol = get<double>(sj, "tolerance");
    const auto max_depth = get<std::size_t>(sj, "max_depth");
    for (std::size_t k = 1; k <= max_depth; ++k) {
      double expected = 1.0, z = x;
      for (std::size_t i = 0; i < k; ++i) {
        expected *= 2.0 * std::abs(z);
        z = z * z;
      }
      const double g = grad_at(nested("(* z z)", k), x);
      rows.push_back(make_row(kExp, "compiled", "square_chain_depth_" + std::to_string(k), "grad_rel_error",
                              relative_error(g, expected), "<=", tol, 12));
    }
    rows.push_back(make_row(kExp, "compiled", "square_chain_depth_" + std::to_string(max_depth), "grad_at_zero",
                            grad_at(nested("(* z z)", max_depth), 0.0)));
    rows.push_back(make_row(kExp, "compiled", "residual_chain_depth_" + std::to_string(max_depth), "grad_at_zero",
                            grad_at(nested("(+ z (* z z))", max_depth), 0.0), "==", 1.0, 12));
  }
  return rows;
}

}  // namespace ncomp
