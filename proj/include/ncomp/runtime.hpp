#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncomp/primitives.hpp"
#include "ncomp/value.hpp"

namespace ncomp {

enum class DomainMode { error, propagate_nan };

struct SafeDomainPolicy {
  DomainMode mode = DomainMode::error;

  static SafeDomainPolicy error() { return {DomainMode::error}; }
  static SafeDomainPolicy propagate_nan() { return {DomainMode::propagate_nan}; }
  bool checking() const { return mode == DomainMode::error; }
};

/// A partial operation left its domain at one output element.
struct DomainIssue {
  std::size_t flat_index;
  std::string what;
};

/// Collects domain issues instead of throwing. When a sink is passed the kernel fills the
/// offending element with the IEEE result (nan/inf) and keeps going; evaluation decides
/// later whether the value reached the output.
using DomainSink = std::vector<DomainIssue>;

/// Forward implementation of a computational primitive (not the special forms).
/// Batch broadcasting: every batched argument shares one batch size; unbatched arguments
/// are reused for every batch element. Elementwise ops also promote scalar elements.
Value apply_primitive(PrimOp op, std::span<const Value> args, const SafeDomainPolicy& policy,
                      DomainSink* sink = nullptr);

/// `pow` with a literal exponent folded into the instruction.
Value apply_pow_immediate(const Value& base, double exponent, const SafeDomainPolicy& policy,
                          DomainSink* sink = nullptr);

enum class CondState { all_true, all_false, mixed };
CondState cond_state(const Value& cond);

/// Per-element choice by cond != 0. A uniform condition returns the chosen branch unchanged.
Value apply_select(const Value& cond, const Value& then_value, const Value& else_value);

/// Common batch size of the arguments; throws ShapeMismatch on disagreement.
std::optional<std::size_t> common_batch(std::span<const Value> args);

/// Shape of an elementwise result (scalar elements promote).
Shape elementwise_shape(std::span<const Value> args, std::string_view op_name);

inline const double* elem_ptr(const Value& v, std::size_t b) {
  return v.ptr() + (v.is_batched() ? b * v.elem_size() : 0);
}

/// LU helpers shared with the backward pass. Singularity: a pivot below
/// 1e-12 times the largest Euclidean row norm of the input.
struct LuResult {
  std::vector<double> lu;
  std::vector<std::size_t> perm;
  int sign = 1;
  bool singular = false;
};
LuResult lu_decompose(const double* a, std::size_t n);
double lu_det(const LuResult& lu, std::size_t n);
std::vector<double> lu_inverse(const LuResult& lu, std::size_t n);

}  // namespace ncomp
