#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace ncomp {

enum class PrimCategory { scalar, vector, matrix, control };

// Order matches the registry table in primitives.cpp.
enum class PrimOp {
  // scalar (24)
  add, sub, mul, div, pow, modulo, remainder, abs, min, max, sin, cos, exp, sqrt, log,
  eq, lt, gt, le, ge, logical_and, logical_or, logical_not, if_,
  // vector (9)
  vec, ref, dot, cross, norm, normalize, vsum, vlen, scale,
  // matrix (11)
  mat, matmul, matvec, transpose, trace, det, inv, outer, eye, zeros, ones,
  // control (7)
  let, let_star, loop, recur, letrec, call, begin,
};

inline constexpr int kVariadic = -1;

struct PrimInfo {
  PrimOp op;
  std::string_view name;
  PrimCategory category;
  int min_arity;
  int max_arity;  // kVariadic for no upper bound
};

std::span<const PrimInfo> primitive_registry();
const PrimInfo& prim_info(PrimOp op);
std::string_view prim_name(PrimOp op);
std::optional<PrimOp> lookup_primitive(std::string_view name);

/// Control forms are parsed into dedicated AST nodes rather than Prim nodes.
bool is_special_form(PrimOp op);
bool arity_ok(PrimOp op, std::size_t n);
bool is_commutative(PrimOp op);
/// Comparisons and logic: 0/1-valued, zero gradient.
bool is_predicate(PrimOp op);
/// Partial operations checked by the safe-domain policy.
bool is_partial(PrimOp op);

}  // namespace ncomp
