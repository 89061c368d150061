#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncomp {

enum class ValueKind { scalar, vector, matrix };

/// Element shape: [] for scalars, [n] for vectors, [n, m] for matrices.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Immutable scalar/vector/matrix with an optional leading batch dimension.
/// Copies share the underlying buffer.
class Value {
 public:
  Value();
  Value(Shape elem_shape, std::optional<std::size_t> batch, std::vector<double> data);

  static Value scalar(double x);
  static Value vector(std::vector<double> xs);
  static Value matrix(std::size_t rows, std::size_t cols, std::vector<double> xs);
  static Value batch_of(std::size_t batch, Shape elem_shape, std::vector<double> xs);
  static Value filled(Shape elem_shape, std::optional<std::size_t> batch, double x);
  /// Stacks unbatched values along a new leading batch dimension.
  static Value stack(std::span<const Value> items);

  bool is_batched() const { return batch_.has_value(); }
  std::optional<std::size_t> batch() const { return batch_; }
  std::size_t batch_or(std::size_t fallback) const { return batch_.value_or(fallback); }
  const Shape& elem_shape() const { return elem_shape_; }
  std::size_t elem_size() const { return elem_size_; }
  ValueKind kind() const;
  /// Full shape including the batch dimension.
  Shape shape() const;

  std::size_t size() const { return data_->size(); }
  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  const double* ptr() const { return data_->data(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  /// The single value of an unbatched scalar.
  double item() const;
  /// Unbatched slice for batch element b (the value itself when unbatched).
  Value element(std::size_t b) const;

  bool all_finite() const;
  bool same_shape(const Value& other) const;

  std::string to_string() const;

 private:
  std::shared_ptr<const std::vector<double>> data_;
  Shape elem_shape_;
  std::optional<std::size_t> batch_;
  std::size_t elem_size_ = 1;
};

/// Shape and bit pattern equality (NaN payloads included).
bool bitwise_equal(const Value& a, const Value& b);

double max_abs_diff(const Value& a, const Value& b);

}  // namespace ncomp
