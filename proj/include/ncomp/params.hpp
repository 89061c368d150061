#pragma once

#include <map>
#include <string>
#include <vector>

#include "ncomp/value.hpp"

namespace ncomp {

struct ParamEntry {
  Value value;
  Value grad;  // same shape as value
  bool trainable = true;
  bool has_grad = false;  // set by accumulate_grad, cleared by zero_grads
};

/// Named trainable parameters and their accumulated gradients. Single writer.
class ParameterStore {
 public:
  void set(const std::string& name, Value value, bool trainable = true);
  /// Replaces the value, keeping the gradient buffer and trainable flag.
  void set_value(const std::string& name, Value value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ParamEntry& at(const std::string& name) const;
  const Value& value(const std::string& name) const { return at(name).value; }
  const Value& grad(const std::string& name) const { return at(name).grad; }
  double scalar(const std::string& name) const { return at(name).value.item(); }

  void zero_grads();
  void accumulate_grad(const std::string& name, const Value& g);

  std::vector<std::string> names() const;
  /// Number of trainable scalars.
  std::size_t trainable_count() const;

 private:
  ParamEntry& mutable_at(const std::string& name);
  std::map<std::string, ParamEntry> entries_;
};

}  // namespace ncomp
