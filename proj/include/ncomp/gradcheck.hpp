#pragma once

#include <string>

#include "ncomp/executor.hpp"

namespace ncomp {

struct GradCheckReport {
  /// max over coordinates of |fd - ad| / max(|ad|, |fd|, 1)
  double max_rel_error = 0.0;
  std::string worst;  // "name[i]" of the worst coordinate
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Compares reverse-mode gradients of the summed output against central differences,
/// for every element of every input and trainable parameter.
GradCheckReport finite_diff_check(const CompiledProgram& prog, const Bindings& inputs, ParameterStore& params,
                                  double h = 1e-5, double tol = 1e-6);
GradCheckReport finite_diff_check(const CompiledProgram& prog, const Bindings& inputs, double h = 1e-5,
                                  double tol = 1e-6);

}  // namespace ncomp
