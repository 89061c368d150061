// Hand-written versions of every experiment equation, in the same operation order as the
// corpus sources, so compiled evaluation can be compared bit for bit.
#include <cmath>

#include "ncomp/error.hpp"
#include "ncomp/experiments.hpp"

namespace ncomp {
namespace {

using std::exp;
using std::sin;
using std::sqrt;

// Called through a pointer so the compiler cannot fold pow(x, 2.0) into x * x; the runtime
// calls libm's pow, which is not always the correctly rounded square.
double (*volatile libm_pow)(double, double) = ::pow;
double pow(double a, double b) { return libm_pow(a, b); }

struct Args {
  const NativeArgs& a;
  double operator()(const char* name) const { return a.at(name)[0]; }
  const std::vector<double>& vec(const char* name) const { return a.at(name); }
};

NativeFn scalar(double (*f)(const Args&)) {
  return [f](const NativeArgs& a) { return std::vector<double>{f(Args{a})}; };
}

std::map<std::string, NativeFn> build() {
  std::map<std::string, NativeFn> m;
  m["planck"] = scalar([](const Args& a) { return a("h") * a("f"); });
  m["hooke"] = scalar([](const Args& a) { return (0.0 - a("k")) * a("x"); });
  m["kinetic"] = scalar([](const Args& a) { return a("alpha") * (a("m") * pow(a("v"), 2.0)); });
  m["gravity"] = scalar([](const Args& a) { return (a("G") * (a("m1") * a("m2"))) / pow(a("r"), 2.0); });
  m["ideal_gas"] = scalar([](const Args& a) { return a("n") * (a("R") * a("T")); });
  m["pendulum"] = scalar([](const Args& a) { return a("k") * sqrt(a("L") / a("g")); });
  m["heat"] = scalar([](const Args& a) { return a("m") * (a("c") * a("dT")); });
  m["coulomb"] = scalar([](const Args& a) { return (a("ke") * (a("q1") * a("q2"))) / pow(a("r"), 2.0); });
  m["gaussian"] = scalar([](const Args& a) {
    const double mu = a("mu"), x = a("x"), sigma = a("sigma");
    return exp(((mu - x) * (x - mu)) / (2.0 * pow(sigma, 2.0))) / (sigma * sqrt(6.283185307179586));
  });
  m["rel_energy"] = scalar([](const Args& a) {
    const double c = a("c");
    return (a("m") * pow(c, 2.0)) / sqrt(1.0 - pow(a("v"), 2.0) / pow(c, 2.0));
  });
  m["sound"] = scalar([](const Args& a) { return sqrt((a("gamma") * a("P")) / a("rho")); });
  m["barometric"] = scalar(
      [](const Args& a) { return a("P0") * exp(((0.0 - a("m")) * (a("g") * a("h"))) / (a("kB") * a("T"))); });
  m["efield"] = scalar([](const Args& a) { return a("coeff") * (a("E") * (a("E") * a("V"))); });
  m["oscillator"] = scalar([](const Args& a) { return a("A") * sin(a("omega") * a("t") + a("phi")); });
  m["lorentz"] = scalar([](const Args& a) { return 1.0 / sqrt(1.0 - pow(a("v"), 2.0) / pow(a("c"), 2.0)); });

  m["lv_prey"] = scalar([](const Args& a) { return a("alpha") * a("x") - a("beta") * (a("x") * a("y")); });
  m["lv_predator"] = scalar([](const Args& a) { return a("delta") * (a("x") * a("y")) - a("gamma") * a("y"); });
  m["pendulum_theta"] = scalar([](const Args& a) { return a("omega"); });
  m["pendulum_omega"] =
      scalar([](const Args& a) { return (0.0 - a("g_L")) * sin(a("theta")) - a("b") * a("omega"); });
  m["pendulum_gravity"] = scalar([](const Args& a) { return (0.0 - a("g_L")) * sin(a("theta")); });

  m["heat_step"] = [](const NativeArgs& na) {
    Args a{na};
    const auto& u = a.vec("u");
    const auto& L = a.vec("L");
    const std::size_t n = u.size();
    const double s = a("dt") * a("alpha");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double lu = 0.0;
      for (std::size_t j = 0; j < n; ++j) lu += L[i * n + j] * u[j];
      out[i] = u[i] + s * lu;
    }
    return out;
  };
  m["gravity3d"] = [](const NativeArgs& na) {
    Args a{na};
    const auto& r = a.vec("r");
    double sq = 0.0;
    for (double x : r) sq += x * x;
    const double s = ((0.0 - a("G")) * (a("m1") * a("m2"))) / pow(sqrt(sq), 3.0);
    std::vector<double> out(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = s * r[i];
    return out;
  };

  m["square"] = scalar([](const Args& a) { return a("x") * a("x"); });
  m["cube"] = scalar([](const Args& a) { return a("x") * (a("x") * a("x")); });
  m["sin"] = scalar([](const Args& a) { return sin(a("x")); });
  m["exp"] = scalar([](const Args& a) { return exp(a("x")); });
  m["add_one"] = scalar([](const Args& a) { return a("x") + 1.0; });
  m["negate"] = scalar([](const Args& a) { return 0.0 - a("x"); });
  m["double"] = scalar([](const Args& a) { return 2.0 * a("x"); });
  m["sqrt_abs"] = scalar([](const Args& a) { return sqrt(std::fabs(a("x"))); });
  return m;
}

const std::map<std::string, NativeFn>& registry() {
  static const auto m = build();
  return m;
}

}  // namespace

const NativeFn& handcoded_oracle(const std::string& equation) {
  auto it = registry().find(equation);
  if (it == registry().end()) throw UnknownEquation("no hand-coded closure for '" + equation + "'");
  return it->second;
}

std::vector<std::string> handcoded_equations() {
  std::vector<std::string> out;
  for (const auto& [name, fn] : registry()) out.push_back(name);
  return out;
}

Value eval_native(const NativeFn& fn, const Bindings& inputs, const std::map<std::string, double>& params,
                  const Shape& out_elem_shape) {
  std::optional<std::size_t> batch;
  for (const auto& [name, v] : inputs) {
    if (v.is_batched()) batch = v.batch();
  }
  const std::size_t nb = batch.value_or(1);
  const std::size_t n = shape_size(out_elem_shape);
  std::vector<double> out;
  out.reserve(nb * n);
  NativeArgs args;
  for (const auto& [name, p] : params) args[name] = {p};
  for (std::size_t b = 0; b < nb; ++b) {
    for (const auto& [name, v] : inputs) {
      Value e = v.element(b);
      args[name].assign(e.data().begin(), e.data().end());
    }
    auto r = fn(args);
    if (r.size() != n) throw ShapeMismatch("native closure returned the wrong number of values");
    out.insert(out.end(), r.begin(), r.end());
  }
  return Value(out_elem_shape, batch, std::move(out));
}

}  // namespace ncomp
