#pragma once

#include <string>

#include "ncomp/executor.hpp"
#include "ncomp/loop_lowering.hpp"
#include "ncomp/syntax.hpp"

namespace ncomp {

/// Direct recursive evaluation of the source tree, the oracle for compiled evaluation.
/// `env` binds every free variable (inputs and parameters alike). Conditionals evaluate only
/// the taken branch when the condition is uniform over the batch, and both branches plus a
/// per-element select otherwise.
Value interpret_ast(const Ast& ast, const Bindings& env, const SafeDomainPolicy& policy = {},
                    std::size_t max_depth = kDefaultMaxRecursionDepth);

Value interpret_source(const std::string& source, const Bindings& env, const SafeDomainPolicy& policy = {});

}  // namespace ncomp
