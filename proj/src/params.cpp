#include "ncomp/params.hpp"

#include "ncomp/error.hpp"

namespace ncomp {

void ParameterStore::set(const std::string& name, Value value, bool trainable) {
  Value zeros = Value::filled(value.elem_shape(), value.batch(), 0.0);
  entries_[name] = ParamEntry{std::move(value), std::move(zeros), trainable, false};
}

void ParameterStore::set_value(const std::string& name, Value value) {
  ParamEntry& e = mutable_at(name);
  if (!e.value.same_shape(value)) throw ShapeMismatch("parameter '" + name + "' changed shape");
  e.value = std::move(value);
}

const ParamEntry& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingInput("parameter '" + name + "' is not in the store");
  return it->second;
}

ParamEntry& ParameterStore::mutable_at(const std::string& name) {
  return const_cast<ParamEntry&>(static_cast<const ParameterStore&>(*this).at(name));
}

void ParameterStore::zero_grads() {
  for (auto& [name, e] : entries_) {
    e.grad = Value::filled(e.value.elem_shape(), e.value.batch(), 0.0);
    e.has_grad = false;
  }
}

void ParameterStore::accumulate_grad(const std::string& name, const Value& g) {
  ParamEntry& e = mutable_at(name);
  if (!e.grad.same_shape(g)) {
    throw ShapeMismatch("gradient for '" + name + "' has shape " + shape_to_string(g.shape()) + ", expected " +
                        shape_to_string(e.grad.shape()));
  }
  std::vector<double> sum(e.grad.data().begin(), e.grad.data().end());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
  e.grad = Value(e.grad.elem_shape(), e.grad.batch(), std::move(sum));
  e.has_grad = true;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

}  // namespace ncomp
