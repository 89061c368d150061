#include "ncomp/primitives.hpp"

#include <array>

namespace ncomp {
namespace {

using C = PrimCategory;

constexpr std::array<PrimInfo, 51> kRegistry{{
    {PrimOp::add, "+", C::scalar, 1, kVariadic},
    {PrimOp::sub, "-", C::scalar, 1, 2},
    {PrimOp::mul, "*", C::scalar, 1, kVariadic},
    {PrimOp::div, "/", C::scalar, 2, 2},
    {PrimOp::pow, "pow", C::scalar, 2, 2},
    {PrimOp::modulo, "modulo", C::scalar, 2, 2},
    {PrimOp::remainder, "remainder", C::scalar, 2, 2},
    {PrimOp::abs, "abs", C::scalar, 1, 1},
    {PrimOp::min, "min", C::scalar, 1, kVariadic},
    {PrimOp::max, "max", C::scalar, 1, kVariadic},
    {PrimOp::sin, "sin", C::scalar, 1, 1},
    {PrimOp::cos, "cos", C::scalar, 1, 1},
    {PrimOp::exp, "exp", C::scalar, 1, 1},
    {PrimOp::sqrt, "sqrt", C::scalar, 1, 1},
    {PrimOp::log, "log", C::scalar, 1, 1},
    {PrimOp::eq, "=", C::scalar, 2, 2},
    {PrimOp::lt, "<", C::scalar, 2, 2},
    {PrimOp::gt, ">", C::scalar, 2, 2},
    {PrimOp::le, "<=", C::scalar, 2, 2},
    {PrimOp::ge, ">=", C::scalar, 2, 2},
    {PrimOp::logical_and, "and", C::scalar, 1, kVariadic},
    {PrimOp::logical_or, "or", C::scalar, 1, kVariadic},
    {PrimOp::logical_not, "not", C::scalar, 1, 1},
    {PrimOp::if_, "if", C::scalar, 3, 3},

    {PrimOp::vec, "vec", C::vector, 1, kVariadic},
    {PrimOp::ref, "ref", C::vector, 2, 2},
    {PrimOp::dot, "dot", C::vector, 2, 2},
    {PrimOp::cross, "cross", C::vector, 2, 2},
    {PrimOp::norm, "norm", C::vector, 1, 1},
    {PrimOp::normalize, "normalize", C::vector, 1, 1},
    {PrimOp::vsum, "vsum", C::vector, 1, kVariadic},
    {PrimOp::vlen, "vlen", C::vector, 1, 1},
    {PrimOp::scale, "scale", C::vector, 2, 2},

    {PrimOp::mat, "mat", C::matrix, 1, kVariadic},
    {PrimOp::matmul, "matmul", C::matrix, 2, 2},
    {PrimOp::matvec, "matvec", C::matrix, 2, 2},
    {PrimOp::transpose, "transpose", C::matrix, 1, 1},
    {PrimOp::trace, "trace", C::matrix, 1, 1},
    {PrimOp::det, "det", C::matrix, 1, 1},
    {PrimOp::inv, "inv", C::matrix, 1, 1},
    {PrimOp::outer, "outer", C::matrix, 2, 2},
    {PrimOp::eye, "eye", C::matrix, 1, 1},
    {PrimOp::zeros, "zeros", C::matrix, 1, 2},
    {PrimOp::ones, "ones", C::matrix, 1, 2},

    {PrimOp::let, "let", C::control, 2, 2},
    {PrimOp::let_star, "let*", C::control, 2, 2},
    {PrimOp::loop, "loop", C::control, 2, 2},
    {PrimOp::recur, "recur", C::control, 0, kVariadic},
    {PrimOp::letrec, "letrec", C::control, 2, 2},
    {PrimOp::call, "call", C::control, 1, kVariadic},
    {PrimOp::begin, "begin", C::control, 1, kVariadic},
}};

}  // namespace

std::span<const PrimInfo> primitive_registry() { return kRegistry; }

const PrimInfo& prim_info(PrimOp op) { return kRegistry[static_cast<std::size_t>(op)]; }

std::string_view prim_name(PrimOp op) { return prim_info(op).name; }

std::optional<PrimOp> lookup_primitive(std::string_view name) {
  for (const auto& info : kRegistry) {
    if (info.name == name) return info.op;
  }
  return std::nullopt;
}

bool is_special_form(PrimOp op) {
  return op == PrimOp::if_ || prim_info(op).category == PrimCategory::control;
}

bool arity_ok(PrimOp op, std::size_t n) {
  const auto& info = prim_info(op);
  if (static_cast<int>(n) < info.min_arity) return false;
  return info.max_arity == kVariadic || static_cast<int>(n) <= info.max_arity;
}

bool is_commutative(PrimOp op) {
  switch (op) {
    case PrimOp::add:
    case PrimOp::mul:
    case PrimOp::min:
    case PrimOp::max:
    case PrimOp::eq:
    case PrimOp::logical_and:
    case PrimOp::logical_or:
    case PrimOp::dot:
      return true;
    default:
      return false;
  }
}

bool is_predicate(PrimOp op) {
  switch (op) {
    case PrimOp::eq:
    case PrimOp::lt:
    case PrimOp::gt:
    case PrimOp::le:
    case PrimOp::ge:
    case PrimOp::logical_and:
    case PrimOp::logical_or:
    case PrimOp::logical_not:
      return true;
    default:
      return false;
  }
}

bool is_partial(PrimOp op) {
  switch (op) {
    case PrimOp::div:
    case PrimOp::sqrt:
    case PrimOp::log:
    case PrimOp::pow:
    case PrimOp::modulo:
    case PrimOp::remainder:
    case PrimOp::normalize:
    case PrimOp::inv:
      return true;
    default:
      return false;
  }
}

}  // namespace ncomp
