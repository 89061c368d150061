// Vector-Jacobian products. Each rule mirrors the loop structure of its forward kernel;
// gradients for unbatched operands of a batched result accumulate over the batch in order.
#include <cmath>

#include "ncomp/error.hpp"
#include "ncomp/tape.hpp"

namespace ncomp {
namespace {

class VjpContext {
 public:
  VjpContext(const TapeRecord& rec, const std::vector<Value>& values, const std::vector<double>& out_grad,
             std::vector<std::vector<double>>& grads)
      : rec_(rec), values_(values), og_(out_grad), grads_(grads), out_(values[rec.output]) {}

  std::size_t batches() const { return out_.batch_or(1); }
  std::size_t out_elems() const { return out_.elem_size(); }
  std::size_t arity() const { return rec_.inputs.size(); }
  const Value& in(std::size_t i) const { return values_[rec_.inputs[i]]; }
  const double* val(std::size_t i, std::size_t b) const { return elem_ptr(in(i), b); }
  const double* out(std::size_t b) const { return elem_ptr(out_, b); }
  const double* g(std::size_t b) const { return og_.data() + (out_.is_batched() ? b * out_.elem_size() : 0); }

  double* acc(std::size_t i, std::size_t b) {
    auto& buf = grads_[rec_.inputs[i]];
    const Value& v = in(i);
    if (buf.empty()) buf.assign(v.size(), 0.0);
    return buf.data() + (v.is_batched() ? b * v.elem_size() : 0);
  }

  /// Element index for elementwise ops, where scalar operands are promoted.
  std::size_t ix(std::size_t i, std::size_t e) const { return in(i).elem_size() == 1 ? 0 : e; }

  /// Flat addressing for elementwise rules: value and gradient at (b, e) sit at b * batch_stride + e * elem_stride.
  struct Operand {
    const double* v;
    double* g;
    std::size_t batch_stride;
    std::size_t elem_stride;
  };

  void prepare() {
    ops_.clear();
    for (std::size_t i = 0; i < arity(); ++i) {
      const Value& v = in(i);
      auto& buf = grads_[rec_.inputs[i]];
      if (buf.empty()) buf.assign(v.size(), 0.0);
      ops_.push_back({v.ptr(), buf.data(), v.is_batched() ? v.elem_size() : 0, v.elem_size() == 1 ? 0u : 1u});
    }
  }
  const Operand& operand(std::size_t i) const { return ops_[i]; }

  template <class F>
  void elementwise(F&& f) {
    const std::size_t nb = batches(), n = out_elems();
    for (std::size_t b = 0; b < nb; ++b) {
      const double* gb = g(b);
      for (std::size_t e = 0; e < n; ++e) f(b, e, gb[e]);
    }
  }

 private:
  const TapeRecord& rec_;
  const std::vector<Value>& values_;
  const std::vector<double>& og_;
  std::vector<std::vector<double>>& grads_;
  const Value& out_;
  std::vector<Operand> ops_;
};

void prim_vjp(PrimOp op, VjpContext& c) {
  const std::size_t nb = c.batches();
  c.prepare();
  auto x = [&](std::size_t i, std::size_t b, std::size_t e) {
    const auto& o = c.operand(i);
    return o.v[b * o.batch_stride + e * o.elem_stride];
  };
  auto add_to = [&](std::size_t i, std::size_t b, std::size_t e, double v) {
    const auto& o = c.operand(i);
    o.g[b * o.batch_stride + e * o.elem_stride] += v;
  };

  switch (op) {
    case PrimOp::add:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        for (std::size_t i = 0; i < c.arity(); ++i) add_to(i, b, e, g);
      });
      return;
    case PrimOp::vsum:
      if (c.arity() > 1) {
        c.elementwise([&](std::size_t b, std::size_t e, double g) {
          for (std::size_t i = 0; i < c.arity(); ++i) add_to(i, b, e, g);
        });
      } else {
        const std::size_t n = c.in(0).elem_size();
        for (std::size_t b = 0; b < nb; ++b) {
          double g = c.g(b)[0];
          double* a = c.acc(0, b);
          for (std::size_t k = 0; k < n; ++k) a[k] += g;
        }
      }
      return;
    case PrimOp::sub:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        if (c.arity() == 1) {
          add_to(0, b, e, -g);
        } else {
          add_to(0, b, e, g);
          add_to(1, b, e, -g);
        }
      });
      return;
    case PrimOp::mul:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        for (std::size_t i = 0; i < c.arity(); ++i) {
          double p = g;
          for (std::size_t j = 0; j < c.arity(); ++j) {
            if (j != i) p *= x(j, b, e);
          }
          add_to(i, b, e, p);
        }
      });
      return;
    case PrimOp::div:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double num = x(0, b, e), den = x(1, b, e);
        add_to(0, b, e, g / den);
        add_to(1, b, e, -g * num / (den * den));
      });
      return;
    case PrimOp::pow:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double base = x(0, b, e), ex = x(1, b, e);
        add_to(0, b, e, g * (ex * std::pow(base, ex - 1.0)));
        if (base > 0.0) add_to(1, b, e, g * (c.out(b)[e] * std::log(base)));
      });
      return;
    case PrimOp::modulo:
    case PrimOp::remainder:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double num = x(0, b, e), den = x(1, b, e);
        add_to(0, b, e, g);
        double q = num / den;
        double k = op == PrimOp::modulo ? std::floor(q) : std::trunc(q);
        // The divisor derivative is undefined where the quotient is an integer (a jump).
        if (den != 0.0 && q != k) add_to(1, b, e, -g * k);
      });
      return;
    case PrimOp::abs:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double a = x(0, b, e);
        if (a > 0.0) add_to(0, b, e, g);
        if (a < 0.0) add_to(0, b, e, -g);
      });
      return;
    case PrimOp::min:
    case PrimOp::max:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        std::size_t k = 0;
        double best = x(0, b, e);
        for (std::size_t i = 1; i < c.arity(); ++i) {
          double v = x(i, b, e);
          if (op == PrimOp::min ? v < best : v > best) {
            best = v;
            k = i;
          }
        }
        add_to(k, b, e, g);
      });
      return;
    case PrimOp::sin:
      c.elementwise([&](std::size_t b, std::size_t e, double g) { add_to(0, b, e, g * std::cos(x(0, b, e))); });
      return;
    case PrimOp::cos:
      c.elementwise([&](std::size_t b, std::size_t e, double g) { add_to(0, b, e, -g * std::sin(x(0, b, e))); });
      return;
    case PrimOp::exp:
      c.elementwise([&](std::size_t b, std::size_t e, double g) { add_to(0, b, e, g * c.out(b)[e]); });
      return;
    case PrimOp::sqrt:
      c.elementwise([&](std::size_t b, std::size_t e, double g) { add_to(0, b, e, g / (2.0 * c.out(b)[e])); });
      return;
    case PrimOp::log:
      c.elementwise([&](std::size_t b, std::size_t e, double g) { add_to(0, b, e, g / x(0, b, e)); });
      return;

    case PrimOp::eq:
    case PrimOp::lt:
    case PrimOp::gt:
    case PrimOp::le:
    case PrimOp::ge:
    case PrimOp::logical_and:
    case PrimOp::logical_or:
    case PrimOp::logical_not:
    case PrimOp::vlen:
    case PrimOp::eye:
    case PrimOp::zeros:
    case PrimOp::ones:
      return;

    case PrimOp::vec:
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < c.arity(); ++i) c.acc(i, b)[0] += c.g(b)[i];
      }
      return;
    case PrimOp::ref: {
      std::size_t k = static_cast<std::size_t>(c.in(1).item());
      std::size_t stride = c.out_elems();
      for (std::size_t b = 0; b < nb; ++b) {
        double* a = c.acc(0, b) + k * stride;
        for (std::size_t s = 0; s < stride; ++s) a[s] += c.g(b)[s];
      }
      return;
    }
    case PrimOp::dot: {
      std::size_t n = c.in(0).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        double g = c.g(b)[0];
        const double* u = c.val(0, b);
        const double* v = c.val(1, b);
        double* gu = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i) gu[i] += g * v[i];
        double* gv = c.acc(1, b);
        for (std::size_t i = 0; i < n; ++i) gv[i] += g * u[i];
      }
      return;
    }
    case PrimOp::cross:
      for (std::size_t b = 0; b < nb; ++b) {
        const double* u = c.val(0, b);
        const double* v = c.val(1, b);
        const double* g = c.g(b);
        double* gu = c.acc(0, b);
        gu[0] += v[1] * g[2] - v[2] * g[1];
        gu[1] += v[2] * g[0] - v[0] * g[2];
        gu[2] += v[0] * g[1] - v[1] * g[0];
        double* gv = c.acc(1, b);
        gv[0] += g[1] * u[2] - g[2] * u[1];
        gv[1] += g[2] * u[0] - g[0] * u[2];
        gv[2] += g[0] * u[1] - g[1] * u[0];
      }
      return;
    case PrimOp::norm: {
      std::size_t n = c.in(0).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        double len = c.out(b)[0];
        if (len == 0.0) continue;
        double g = c.g(b)[0];
        const double* u = c.val(0, b);
        double* gu = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i) gu[i] += g * u[i] / len;
      }
      return;
    }
    case PrimOp::normalize: {
      std::size_t n = c.in(0).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        const double* u = c.val(0, b);
        const double* unit = c.out(b);
        const double* g = c.g(b);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += u[i] * u[i];
        double len = std::sqrt(s);
        if (len == 0.0) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += unit[i] * g[i];
        double* gu = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i) gu[i] += (g[i] - unit[i] * proj) / len;
      }
      return;
    }
    case PrimOp::scale: {
      std::size_t n = c.in(1).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        double s = c.val(0, b)[0];
        const double* v = c.val(1, b);
        const double* g = c.g(b);
        double gs = 0.0;
        for (std::size_t i = 0; i < n; ++i) gs += g[i] * v[i];
        c.acc(0, b)[0] += gs;
        double* gv = c.acc(1, b);
        for (std::size_t i = 0; i < n; ++i) gv[i] += s * g[i];
      }
      return;
    }

    case PrimOp::mat: {
      std::size_t cols = c.in(0).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t r = 0; r < c.arity(); ++r) {
          double* gr = c.acc(r, b);
          for (std::size_t k = 0; k < cols; ++k) gr[k] += c.g(b)[r * cols + k];
        }
      }
      return;
    }
    case PrimOp::matmul: {
      std::size_t n = c.in(0).elem_shape()[0], k = c.in(0).elem_shape()[1], m = c.in(1).elem_shape()[1];
      for (std::size_t b = 0; b < nb; ++b) {
        const double* A = c.val(0, b);
        const double* B = c.val(1, b);
        const double* G = c.g(b);
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[t * m + j];
            gA[i * k + t] += s;
          }
        double* gB = c.acc(1, b);
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += A[i * k + t] * G[i * m + j];
            gB[t * m + j] += s;
          }
      }
      return;
    }
    case PrimOp::matvec: {
      std::size_t n = c.in(0).elem_shape()[0], m = c.in(0).elem_shape()[1];
      for (std::size_t b = 0; b < nb; ++b) {
        const double* A = c.val(0, b);
        const double* v = c.val(1, b);
        const double* g = c.g(b);
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gA[i * m + j] += g[i] * v[j];
        double* gv = c.acc(1, b);
        for (std::size_t j = 0; j < m; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += A[i * m + j] * g[i];
          gv[j] += s;
        }
      }
      return;
    }
    case PrimOp::transpose: {
      std::size_t n = c.in(0).elem_shape()[0], m = c.in(0).elem_shape()[1];
      for (std::size_t b = 0; b < nb; ++b) {
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gA[i * m + j] += c.g(b)[j * n + i];
      }
      return;
    }
    case PrimOp::trace: {
      std::size_t n = c.in(0).elem_shape()[0];
      for (std::size_t b = 0; b < nb; ++b) {
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i) gA[i * n + i] += c.g(b)[0];
      }
      return;
    }
    case PrimOp::det: {
      std::size_t n = c.in(0).elem_shape()[0];
      for (std::size_t b = 0; b < nb; ++b) {
        LuResult lu = lu_decompose(c.val(0, b), n);
        if (lu.singular) continue;
        auto inv = lu_inverse(lu, n);
        double gd = c.g(b)[0] * c.out(b)[0];
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) gA[i * n + j] += gd * inv[j * n + i];
      }
      return;
    }
    case PrimOp::inv: {
      std::size_t n = c.in(0).elem_shape()[0];
      std::vector<double> t(n * n);
      for (std::size_t b = 0; b < nb; ++b) {
        const double* X = c.out(b);
        const double* G = c.g(b);
        // T = X^T G, then gA = -T X^T.
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t l = 0; l < n; ++l) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += X[k * n + i] * G[k * n + l];
            t[i * n + l] = s;
          }
        double* gA = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < n; ++l) s += t[i * n + l] * X[j * n + l];
            gA[i * n + j] -= s;
          }
      }
      return;
    }
    case PrimOp::outer: {
      std::size_t n = c.in(0).elem_size(), m = c.in(1).elem_size();
      for (std::size_t b = 0; b < nb; ++b) {
        const double* u = c.val(0, b);
        const double* v = c.val(1, b);
        const double* G = c.g(b);
        double* gu = c.acc(0, b);
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * v[j];
          gu[i] += s;
        }
        double* gv = c.acc(1, b);
        for (std::size_t j = 0; j < m; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += G[i * m + j] * u[i];
          gv[j] += s;
        }
      }
      return;
    }
    default:
      throw Error("no gradient rule for " + std::string(prim_name(op)));
  }
}

}  // namespace

void accumulate_vjp(const TapeRecord& rec, const std::vector<Value>& values, const std::vector<double>& out_grad,
                    std::vector<std::vector<double>>& grads) {
  VjpContext c(rec, values, out_grad, grads);
  switch (rec.kind) {
    case TapeOp::leaf:
    case TapeOp::loop_iteration:
      return;
    case TapeOp::prim:
      prim_vjp(rec.op, c);
      return;
    case TapeOp::pow_imm: {
      const double ex = rec.immediate;
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double base = c.val(0, b)[c.ix(0, e)];
        c.acc(0, b)[c.ix(0, e)] += g * (ex * std::pow(base, ex - 1.0));
      });
      return;
    }
    case TapeOp::select:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        bool take = c.val(0, b)[c.ix(0, e)] != 0.0;
        std::size_t i = take ? 1 : 2;
        c.acc(i, b)[c.ix(i, e)] += g;
      });
      return;
    case TapeOp::relu:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        if (c.val(0, b)[e] > 0.0) c.acc(0, b)[e] += g;
      });
      return;
    case TapeOp::tanh:
      c.elementwise([&](std::size_t b, std::size_t e, double g) {
        double y = c.out(b)[e];
        c.acc(0, b)[e] += g * (1.0 - y * y);
      });
      return;
    case TapeOp::mean_all: {
      const Value& v = c.in(0);
      double share = out_grad[0] / static_cast<double>(v.size());
      auto& buf = grads[rec.inputs[0]];
      if (buf.empty()) buf.assign(v.size(), 0.0);
      for (auto& d : buf) d += share;
      return;
    }
  }
}

}  // namespace ncomp
