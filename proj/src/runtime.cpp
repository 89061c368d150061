#include "ncomp/runtime.hpp"

#include <cmath>
#include <string>

#include "ncomp/error.hpp"
#include "ncomp/format.hpp"

namespace ncomp {
namespace {

struct DomainReporter {
  const SafeDomainPolicy& policy;
  DomainSink* sink;
  std::optional<std::size_t> batch;
  std::size_t elem_size;

  void report(std::size_t flat, const std::string& what) const {
    if (!policy.checking()) return;
    if (sink) {
      sink->push_back({flat, what});
      return;
    }
    long b = batch ? static_cast<long>(flat / elem_size) : -1;
    throw DomainViolation(what, -1, b);
  }
};

std::string op_label(PrimOp op) { return std::string(prim_name(op)); }

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  throw ShapeMismatch(std::string(op) + ": " + detail);
}

void expect_elem(const Value& v, const Shape& shape, std::string_view op) {
  if (v.elem_shape() != shape) {
    shape_error(op, "expected element shape " + shape_to_string(shape) + ", got " + shape_to_string(v.elem_shape()));
  }
}

void expect_rank(const Value& v, std::size_t rank, std::string_view op) {
  if (v.elem_shape().size() != rank) {
    static const char* names[] = {"a scalar", "a vector", "a matrix"};
    shape_error(op, std::string("expected ") + names[rank] + ", got element shape " + shape_to_string(v.elem_shape()));
  }
}

std::size_t index_arg(const Value& v, std::string_view op) {
  if (v.is_batched() || !v.elem_shape().empty()) shape_error(op, "index/size arguments must be unbatched scalars");
  double x = v.item();
  if (!(x >= 0) || std::floor(x) != x) shape_error(op, "index/size must be a non-negative integer, got " + format_number(x));
  return static_cast<std::size_t>(x);
}

template <class F>
Value elementwise_fold(std::span<const Value> args, PrimOp op, F&& f) {
  Shape es = elementwise_shape(args, prim_name(op));
  auto batch = common_batch(args);
  std::size_t n = shape_size(es), nb = batch.value_or(1);
  std::vector<double> out(n * nb);
  const std::size_t total = out.size();
  if (args.size() == 2) {
    // Common case: each side is either full-size or a single broadcast value.
    const Value &x = args[0], &y = args[1];
    const bool x_ok = x.size() == total || x.size() == 1, y_ok = y.size() == total || y.size() == 1;
    if (x_ok && y_ok) {
      const double *xp = x.ptr(), *yp = y.ptr();
      const std::size_t xs = x.size() == 1 ? 0 : 1, ys = y.size() == 1 ? 0 : 1;
      for (std::size_t k = 0; k < total; ++k) out[k] = f(xp[k * xs], yp[k * ys], k);
      return Value(std::move(es), batch, std::move(out));
    }
  }
  struct Operand {
    const double* p;
    std::size_t batch_stride, elem_stride;
  };
  std::vector<Operand> ops;
  ops.reserve(args.size());
  for (const auto& a : args) {
    ops.push_back({a.ptr(), a.is_batched() ? a.elem_size() : 0, a.elem_size() == 1 ? 0u : 1u});
  }
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t e = 0; e < n; ++e) {
      double acc = ops[0].p[b * ops[0].batch_stride + e * ops[0].elem_stride];
      for (std::size_t i = 1; i < ops.size(); ++i) {
        acc = f(acc, ops[i].p[b * ops[i].batch_stride + e * ops[i].elem_stride], b * n + e);
      }
      out[b * n + e] = acc;
    }
  }
  return Value(std::move(es), batch, std::move(out));
}

template <class F>
Value elementwise_unary(const Value& a, F&& f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], i);
  return Value(a.elem_shape(), a.batch(), std::move(out));
}

/// Applies a per-element kernel to batch slices. The kernel writes `out_elem` doubles.
template <class F>
Value per_batch(std::span<const Value> args, Shape out_shape, F&& kernel) {
  auto batch = common_batch(args);
  std::size_t n = shape_size(out_shape), nb = batch.value_or(1);
  std::vector<double> out(n * nb);
  for (std::size_t b = 0; b < nb; ++b) kernel(b, out.data() + b * n);
  return Value(std::move(out_shape), batch, std::move(out));
}

double floored_mod(double a, double b) {
  double r = std::fmod(a, b);
  if (r != 0.0 && ((r < 0.0) != (b < 0.0))) r += b;
  return r;
}

double pow_checked(double a, double b, std::size_t flat, const DomainReporter& rep) {
  if (a < 0.0 && std::floor(b) != b) rep.report(flat, "pow of negative base with non-integer exponent");
  if (a == 0.0 && b < 0.0) rep.report(flat, "pow of zero with negative exponent");
  return std::pow(a, b);
}

double row_norm_max(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += a[r * n + c] * a[r * n + c];
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

Value sized_fill(std::span<const Value> args, PrimOp op, double fill) {
  Shape s;
  for (const auto& a : args) s.push_back(index_arg(a, prim_name(op)));
  return Value::filled(std::move(s), std::nullopt, fill);
}

}  // namespace

std::optional<std::size_t> common_batch(std::span<const Value> args) {
  std::optional<std::size_t> batch;
  for (const auto& a : args) {
    if (!a.is_batched()) continue;
    if (batch && *batch != *a.batch()) {
      throw ShapeMismatch("batch sizes " + std::to_string(*batch) + " and " + std::to_string(*a.batch()) + " differ");
    }
    batch = a.batch();
  }
  return batch;
}

Shape elementwise_shape(std::span<const Value> args, std::string_view op_name) {
  Shape es;
  bool have = false;
  for (const auto& a : args) {
    if (a.elem_shape().empty()) continue;
    if (!have) {
      es = a.elem_shape();
      have = true;
    } else if (es != a.elem_shape()) {
      shape_error(op_name, "element shapes " + shape_to_string(es) + " and " + shape_to_string(a.elem_shape()) +
                               " do not broadcast");
    }
  }
  return es;
}

LuResult lu_decompose(const double* a, std::size_t n) {
  LuResult r;
  r.lu.assign(a, a + n * n);
  r.perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.perm[i] = i;
  const double tol = 1e-12 * row_norm_max(a, n);
  auto& m = r.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::fabs(m[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      double v = std::fabs(m[i * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (!(best > tol) || best == 0.0) r.singular = true;
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m[k * n + c], m[p * n + c]);
      std::swap(r.perm[k], r.perm[p]);
      r.sign = -r.sign;
    }
    double piv = m[k * n + k];
    if (piv == 0.0) continue;
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = m[i * n + k] / piv;
      m[i * n + k] = f;
      for (std::size_t c = k + 1; c < n; ++c) m[i * n + c] -= f * m[k * n + c];
    }
  }
  return r;
}

double lu_det(const LuResult& lu, std::size_t n) {
  double d = 1.0;
  for (std::size_t k = 0; k < n; ++k) d *= lu.lu[k * n + k];
  return lu.sign < 0 ? -d : d;
}

std::vector<double> lu_inverse(const LuResult& lu, std::size_t n) {
  std::vector<double> inv(n * n);
  std::vector<double> col(n);
  const auto& m = lu.lu;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = lu.perm[i] == j ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = col[i];
      for (std::size_t k = 0; k < i; ++k) s -= m[i * n + k] * col[k];
      col[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = col[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= m[ii * n + k] * col[k];
      col[ii] = s / m[ii * n + ii];
    }
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  return inv;
}

CondState cond_state(const Value& cond) {
  bool any_true = false, any_false = false;
  for (double c : cond.data()) {
    if (c != 0.0) {
      any_true = true;
    } else {
      any_false = true;
    }
  }
  if (any_true && any_false) return CondState::mixed;
  return any_true ? CondState::all_true : CondState::all_false;
}

Value apply_select(const Value& cond, const Value& then_value, const Value& else_value) {
  switch (cond_state(cond)) {
    case CondState::all_true: return then_value;
    case CondState::all_false: return else_value;
    case CondState::mixed: break;
  }
  Value parts[] = {then_value, else_value};
  Shape es = elementwise_shape(parts, "if");
  Value all[] = {cond, then_value, else_value};
  auto batch = common_batch(all);
  if (!cond.elem_shape().empty() && cond.elem_shape() != es) {
    shape_error("if", "condition element shape must be scalar or match the branches");
  }
  std::size_t n = shape_size(es), nb = batch.value_or(1);
  std::vector<double> out(n * nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const double* c = elem_ptr(cond, b);
    const double* t = elem_ptr(then_value, b);
    const double* f = elem_ptr(else_value, b);
    for (std::size_t e = 0; e < n; ++e) {
      bool take = c[cond.elem_size() == 1 ? 0 : e] != 0.0;
      out[b * n + e] = take ? t[then_value.elem_size() == 1 ? 0 : e] : f[else_value.elem_size() == 1 ? 0 : e];
    }
  }
  return Value(std::move(es), batch, std::move(out));
}

Value apply_pow_immediate(const Value& base, double exponent, const SafeDomainPolicy& policy, DomainSink* sink) {
  DomainReporter rep{policy, sink, base.batch(), base.elem_size()};
  return elementwise_unary(base, [&](double a, std::size_t i) { return pow_checked(a, exponent, i, rep); });
}

Value apply_primitive(PrimOp op, std::span<const Value> args, const SafeDomainPolicy& policy, DomainSink* sink) {
  const std::string name = op_label(op);
  if (is_special_form(op)) throw Error(name + " is a special form, not a computational primitive");
  if (!arity_ok(op, args.size())) {
    throw ShapeMismatch(name + ": wrong number of arguments (" + std::to_string(args.size()) + ")");
  }

  auto batch = common_batch(args);
  auto reporter = [&](std::size_t elem_size) { return DomainReporter{policy, sink, batch, elem_size}; };

  switch (op) {
    case PrimOp::add:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a + b; });
    case PrimOp::sub:
      if (args.size() == 1) {
        return elementwise_unary(args[0], [](double a, std::size_t) { return 0.0 - a; });
      }
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a - b; });
    case PrimOp::mul:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a * b; });
    case PrimOp::div: {
      auto rep = reporter(shape_size(elementwise_shape(args, name)));
      return elementwise_fold(args, op, [&](double a, double b, std::size_t i) {
        if (b == 0.0) rep.report(i, "division by zero");
        return a / b;
      });
    }
    case PrimOp::pow: {
      auto rep = reporter(shape_size(elementwise_shape(args, name)));
      return elementwise_fold(args, op, [&](double a, double b, std::size_t i) { return pow_checked(a, b, i, rep); });
    }
    case PrimOp::modulo: {
      auto rep = reporter(shape_size(elementwise_shape(args, name)));
      return elementwise_fold(args, op, [&](double a, double b, std::size_t i) {
        if (b == 0.0) rep.report(i, "modulo by zero");
        return floored_mod(a, b);
      });
    }
    case PrimOp::remainder: {
      auto rep = reporter(shape_size(elementwise_shape(args, name)));
      return elementwise_fold(args, op, [&](double a, double b, std::size_t i) {
        if (b == 0.0) rep.report(i, "remainder by zero");
        return std::fmod(a, b);
      });
    }
    case PrimOp::abs:
      return elementwise_unary(args[0], [](double a, std::size_t) { return std::fabs(a); });
    case PrimOp::min:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return b < a ? b : a; });
    case PrimOp::max:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return b > a ? b : a; });
    case PrimOp::sin:
      return elementwise_unary(args[0], [](double a, std::size_t) { return std::sin(a); });
    case PrimOp::cos:
      return elementwise_unary(args[0], [](double a, std::size_t) { return std::cos(a); });
    case PrimOp::exp:
      return elementwise_unary(args[0], [](double a, std::size_t) { return std::exp(a); });
    case PrimOp::sqrt: {
      auto rep = reporter(args[0].elem_size());
      return elementwise_unary(args[0], [&](double a, std::size_t i) {
        if (a < 0.0) rep.report(i, "sqrt of negative value");
        return std::sqrt(a);
      });
    }
    case PrimOp::log: {
      auto rep = reporter(args[0].elem_size());
      return elementwise_unary(args[0], [&](double a, std::size_t i) {
        if (!(a > 0.0)) rep.report(i, "log of non-positive value");
        return std::log(a);
      });
    }
    case PrimOp::eq:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a == b ? 1.0 : 0.0; });
    case PrimOp::lt:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a < b ? 1.0 : 0.0; });
    case PrimOp::gt:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a > b ? 1.0 : 0.0; });
    case PrimOp::le:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a <= b ? 1.0 : 0.0; });
    case PrimOp::ge:
      return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a >= b ? 1.0 : 0.0; });
    case PrimOp::logical_and: {
      Value v = elementwise_fold(args, op, [](double a, double b, std::size_t) {
        return (a != 0.0 && b != 0.0) ? 1.0 : 0.0;
      });
      return elementwise_unary(v, [](double a, std::size_t) { return a != 0.0 ? 1.0 : 0.0; });
    }
    case PrimOp::logical_or: {
      Value v = elementwise_fold(args, op, [](double a, double b, std::size_t) {
        return (a != 0.0 || b != 0.0) ? 1.0 : 0.0;
      });
      return elementwise_unary(v, [](double a, std::size_t) { return a != 0.0 ? 1.0 : 0.0; });
    }
    case PrimOp::logical_not:
      return elementwise_unary(args[0], [](double a, std::size_t) { return a == 0.0 ? 1.0 : 0.0; });

    case PrimOp::vec: {
      for (const auto& a : args) expect_rank(a, 0, name);
      std::size_t n = args.size();
      return per_batch(args, {n}, [&](std::size_t b, double* out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = elem_ptr(args[i], b)[0];
      });
    }
    case PrimOp::ref: {
      const Value& v = args[0];
      std::size_t i = index_arg(args[1], name);
      if (v.elem_shape().empty()) shape_error(name, "cannot index a scalar");
      if (i >= v.elem_shape()[0]) shape_error(name, "index " + std::to_string(i) + " out of range");
      Shape rest(v.elem_shape().begin() + 1, v.elem_shape().end());
      std::size_t stride = shape_size(rest);
      return per_batch(args, rest, [&](std::size_t b, double* out) {
        const double* p = elem_ptr(v, b) + i * stride;
        for (std::size_t k = 0; k < stride; ++k) out[k] = p[k];
      });
    }
    case PrimOp::dot: {
      expect_rank(args[0], 1, name);
      expect_elem(args[1], args[0].elem_shape(), name);
      std::size_t n = args[0].elem_size();
      return per_batch(args, {}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        const double* y = elem_ptr(args[1], b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
        out[0] = s;
      });
    }
    case PrimOp::cross: {
      expect_elem(args[0], {3}, name);
      expect_elem(args[1], {3}, name);
      return per_batch(args, {3}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        const double* y = elem_ptr(args[1], b);
        out[0] = x[1] * y[2] - x[2] * y[1];
        out[1] = x[2] * y[0] - x[0] * y[2];
        out[2] = x[0] * y[1] - x[1] * y[0];
      });
    }
    case PrimOp::norm: {
      expect_rank(args[0], 1, name);
      std::size_t n = args[0].elem_size();
      return per_batch(args, {}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
        out[0] = std::sqrt(s);
      });
    }
    case PrimOp::normalize: {
      expect_rank(args[0], 1, name);
      std::size_t n = args[0].elem_size();
      auto rep = reporter(n);
      return per_batch(args, {n}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
        double len = std::sqrt(s);
        if (len == 0.0) rep.report(b * n, "normalize of zero vector");
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / len;
      });
    }
    case PrimOp::vsum: {
      if (args.size() > 1) {
        return elementwise_fold(args, op, [](double a, double b, std::size_t) { return a + b; });
      }
      std::size_t n = args[0].elem_size();
      return per_batch(args, {}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        out[0] = s;
      });
    }
    case PrimOp::vlen: {
      if (args[0].elem_shape().empty()) shape_error(name, "argument must be a vector or matrix");
      return Value::scalar(static_cast<double>(args[0].elem_shape()[0]));
    }
    case PrimOp::scale: {
      expect_rank(args[0], 0, name);
      const Value& v = args[1];
      std::size_t n = v.elem_size();
      return per_batch(args, v.elem_shape(), [&](std::size_t b, double* out) {
        double s = elem_ptr(args[0], b)[0];
        const double* x = elem_ptr(v, b);
        for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
      });
    }

    case PrimOp::mat: {
      expect_rank(args[0], 1, name);
      for (const auto& a : args) expect_elem(a, args[0].elem_shape(), name);
      std::size_t rows = args.size(), cols = args[0].elem_size();
      return per_batch(args, {rows, cols}, [&](std::size_t b, double* out) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* p = elem_ptr(args[r], b);
          for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = p[c];
        }
      });
    }
    case PrimOp::matmul: {
      expect_rank(args[0], 2, name);
      expect_rank(args[1], 2, name);
      std::size_t n = args[0].elem_shape()[0], k = args[0].elem_shape()[1], m = args[1].elem_shape()[1];
      if (args[1].elem_shape()[0] != k) shape_error(name, "inner dimensions differ");
      return per_batch(args, {n, m}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        const double* y = elem_ptr(args[1], b);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += x[i * k + t] * y[t * m + j];
            out[i * m + j] = s;
          }
        }
      });
    }
    case PrimOp::matvec: {
      expect_rank(args[0], 2, name);
      expect_rank(args[1], 1, name);
      std::size_t n = args[0].elem_shape()[0], m = args[0].elem_shape()[1];
      if (args[1].elem_size() != m) shape_error(name, "matrix columns and vector length differ");
      return per_batch(args, {n}, [&](std::size_t b, double* out) {
        const double* a = elem_ptr(args[0], b);
        const double* v = elem_ptr(args[1], b);
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += a[i * m + j] * v[j];
          out[i] = s;
        }
      });
    }
    case PrimOp::transpose: {
      expect_rank(args[0], 2, name);
      std::size_t n = args[0].elem_shape()[0], m = args[0].elem_shape()[1];
      return per_batch(args, {m, n}, [&](std::size_t b, double* out) {
        const double* a = elem_ptr(args[0], b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a[i * m + j];
      });
    }
    case PrimOp::trace: {
      expect_rank(args[0], 2, name);
      std::size_t n = args[0].elem_shape()[0];
      if (args[0].elem_shape()[1] != n) shape_error(name, "matrix must be square");
      return per_batch(args, {}, [&](std::size_t b, double* out) {
        const double* a = elem_ptr(args[0], b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i * n + i];
        out[0] = s;
      });
    }
    case PrimOp::det:
    case PrimOp::inv: {
      expect_rank(args[0], 2, name);
      std::size_t n = args[0].elem_shape()[0];
      if (args[0].elem_shape()[1] != n) shape_error(name, "matrix must be square");
      Shape out_shape = op == PrimOp::det ? Shape{} : Shape{n, n};
      return per_batch(args, out_shape, [&](std::size_t b, double* out) {
        LuResult lu = lu_decompose(elem_ptr(args[0], b), n);
        if (lu.singular && policy.checking()) {
          throw SingularMatrix(name + ": singular matrix" + (batch ? " at batch element " + std::to_string(b) : ""));
        }
        if (op == PrimOp::det) {
          out[0] = lu_det(lu, n);
        } else if (lu.singular) {
          for (std::size_t i = 0; i < n * n; ++i) out[i] = std::nan("");
        } else {
          auto inv = lu_inverse(lu, n);
          std::copy(inv.begin(), inv.end(), out);
        }
      });
    }
    case PrimOp::outer: {
      expect_rank(args[0], 1, name);
      expect_rank(args[1], 1, name);
      std::size_t n = args[0].elem_size(), m = args[1].elem_size();
      return per_batch(args, {n, m}, [&](std::size_t b, double* out) {
        const double* x = elem_ptr(args[0], b);
        const double* y = elem_ptr(args[1], b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i] * y[j];
      });
    }
    case PrimOp::eye: {
      std::size_t n = index_arg(args[0], name);
      std::vector<double> data(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
      return Value::matrix(n, n, std::move(data));
    }
    case PrimOp::zeros: return sized_fill(args, op, 0.0);
    case PrimOp::ones: return sized_fill(args, op, 1.0);
    default: break;
  }
  throw Error("unhandled primitive " + name);
}

}  // namespace ncomp
