#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ncomp/params.hpp"
#include "ncomp/primitives.hpp"
#include "ncomp/runtime.hpp"
#include "ncomp/value.hpp"

namespace ncomp {

using VarId = std::size_t;

enum class TapeOp { leaf, prim, pow_imm, select, relu, tanh, mean_all, loop_iteration };

struct TapeRecord {
  TapeOp kind = TapeOp::leaf;
  PrimOp op = PrimOp::add;
  std::vector<VarId> inputs;
  VarId output = 0;
  double immediate = 0.0;
};

/// Names of the leaves whose gradients a backward pass should report.
struct GradRequest {
  std::set<std::string> inputs;
  std::set<std::string> params;
};

struct GradResult {
  Value output;
  std::map<std::string, Value> input_grads;
  /// The amounts added to the store by this pass.
  std::map<std::string, Value> param_grads;
};

/// Dynamic reverse-mode tape. Every operation appends a record; backward walks the
/// records in reverse. Operand values are kept by shared buffer, so saving them is cheap.
class Tape {
 public:
  VarId constant(Value v);
  /// Named input leaf, one per name.
  VarId input(const std::string& name, Value v);
  /// Parameter leaf read from the store, one per name; backward adds into the store's grad.
  VarId param(ParameterStore& store, const std::string& name);

  VarId apply(PrimOp op, std::span<const VarId> args, const SafeDomainPolicy& policy = {},
              DomainSink* sink = nullptr);
  VarId apply(PrimOp op, std::initializer_list<VarId> args, const SafeDomainPolicy& policy = {}) {
    return apply(op, std::span<const VarId>(args.begin(), args.size()), policy);
  }
  VarId pow_imm(VarId base, double exponent, const SafeDomainPolicy& policy = {}, DomainSink* sink = nullptr);
  VarId select(VarId cond, VarId then_value, VarId else_value);
  VarId relu(VarId x);
  VarId tanh(VarId x);
  /// Mean over every element (batch included) as an unbatched scalar.
  VarId mean_all(VarId x);
  /// Mean squared error against a fixed target.
  VarId mse(VarId pred, const Value& target);

  void mark_loop_iteration();

  const Value& value(VarId id) const { return values_.at(id); }
  std::size_t var_count() const { return values_.size(); }
  const std::vector<TapeRecord>& records() const { return records_; }
  std::size_t loop_iterations() const;

  /// Seeds `out` and propagates. Without a request every named input and parameter is reported.
  GradResult backward(VarId out, const Value& seed, const GradRequest* request = nullptr);
  GradResult backward(VarId out);  // seed of ones

  /// Gradient of a variable from the last backward pass (zeros when it received none).
  Value grad(VarId id) const;

 private:
  VarId push(Value v, TapeRecord rec);

  std::vector<Value> values_;
  std::vector<TapeRecord> records_;
  std::map<std::string, VarId> inputs_;
  struct ParamLeaf {
    ParameterStore* store;
    VarId id;
  };
  std::map<std::string, ParamLeaf> params_;
  std::vector<std::vector<double>> grads_;
};

/// Accumulates the vector-Jacobian product of one record into the operand gradients.
/// `grads[i]` may be empty (treated as zero and allocated on first write).
void accumulate_vjp(const TapeRecord& rec, const std::vector<Value>& values, const std::vector<double>& out_grad,
                    std::vector<std::vector<double>>& grads);

}  // namespace ncomp
