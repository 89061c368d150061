#pragma once

#include <map>
#include <string>

#include "ncomp/compiler.hpp"
#include "ncomp/params.hpp"
#include "ncomp/runtime.hpp"
#include "ncomp/tape.hpp"
#include "ncomp/value.hpp"

namespace ncomp {

using Bindings = std::map<std::string, Value>;

/// Runs the instruction program. In error mode a domain violation is reported only when a
/// non-finite value reaches the output (an untaken select branch may leave the domain).
Value eval_program(const CompiledProgram& prog, const Bindings& inputs, const ParameterStore& params,
                   const SafeDomainPolicy& policy = {});
Value eval_program(const CompiledProgram& prog, const Bindings& inputs, const SafeDomainPolicy& policy = {});

/// Runs the program on an existing tape, so compiled modules compose with other taped
/// computation. Inputs are tape variables.
VarId eval_on_tape(Tape& tape, const CompiledProgram& prog, const std::map<std::string, VarId>& inputs,
                   ParameterStore& params, const SafeDomainPolicy& policy = {});

struct TapedEval {
  Value value;
  Tape tape;
  VarId output = 0;
};

/// Inputs become named tape leaves, so backward reports their gradients by name.
TapedEval eval_with_tape(const CompiledProgram& prog, const Bindings& inputs, ParameterStore& params,
                         const SafeDomainPolicy& policy = {});

GradResult backward(TapedEval& run, const Value& seed, const GradRequest* request = nullptr);

}  // namespace ncomp
