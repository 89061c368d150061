#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ncomp/anf.hpp"

namespace ncomp {

inline constexpr std::size_t kDefaultMaxRecursionDepth = 10000;

/// A letrec function that keeps a non-tail self-call and runs by stack dispatch.
struct RecursiveFn {
  std::string name;
  std::vector<std::string> params;
  AnfBlock body;
  std::size_t max_depth = kDefaultMaxRecursionDepth;
};

/// Throws DepthLimitExceeded unless current_depth < fn.max_depth.
void check_depth(const RecursiveFn& fn, std::size_t current_depth);
void check_depth(const std::string& name, std::size_t max_depth, std::size_t current_depth);

/// True when every call the function makes to itself is in tail position and it is not
/// part of a larger call cycle.
bool is_tail_recursive(const AnfProgram& prog, std::size_t function);

/// Rewrites each call to a tail-recursive function into an inline loop whose tail
/// self-calls become recur. Other functions are left for stack dispatch.
/// Also validates recur placement and arity (LoweringError).
AnfProgram lower_tail_calls(const AnfProgram& anf);

/// Functions still reached through calls after lowering.
std::vector<RecursiveFn> recursive_functions(const AnfProgram& lowered, std::size_t max_depth);

}  // namespace ncomp
