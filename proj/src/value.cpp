#include "ncomp/value.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "ncomp/error.hpp"
#include "ncomp/format.hpp"

namespace ncomp {

std::string to_string(const SourcePos& pos) {
  return std::to_string(pos.line) + ":" + std::to_string(pos.column);
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Value::Value() : Value({}, std::nullopt, {0.0}) {}

Value::Value(Shape elem_shape, std::optional<std::size_t> batch, std::vector<double> data)
    : elem_shape_(std::move(elem_shape)), batch_(batch) {
  if (elem_shape_.size() > 2) throw ShapeMismatch("values have at most two element dimensions");
  elem_size_ = shape_size(elem_shape_);
  if (data.size() != elem_size_ * batch_.value_or(1)) {
    throw ShapeMismatch("buffer of " + std::to_string(data.size()) + " elements does not match shape " +
                        shape_to_string(shape()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Value Value::scalar(double x) { return Value({}, std::nullopt, {x}); }

Value Value::vector(std::vector<double> xs) {
  Shape s{xs.size()};
  return Value(std::move(s), std::nullopt, std::move(xs));
}

Value Value::matrix(std::size_t rows, std::size_t cols, std::vector<double> xs) {
  return Value({rows, cols}, std::nullopt, std::move(xs));
}

Value Value::batch_of(std::size_t batch, Shape elem_shape, std::vector<double> xs) {
  return Value(std::move(elem_shape), batch, std::move(xs));
}

Value Value::filled(Shape elem_shape, std::optional<std::size_t> batch, double x) {
  std::vector<double> data(shape_size(elem_shape) * batch.value_or(1), x);
  return Value(std::move(elem_shape), batch, std::move(data));
}

Value Value::stack(std::span<const Value> items) {
  if (items.empty()) throw ShapeMismatch("cannot stack an empty list");
  const Shape& es = items.front().elem_shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().elem_size());
  for (const auto& v : items) {
    if (v.is_batched() || v.elem_shape() != es) throw ShapeMismatch("stack needs unbatched values of one shape");
    data.insert(data.end(), v.data().begin(), v.data().end());
  }
  return Value(es, items.size(), std::move(data));
}

ValueKind Value::kind() const {
  switch (elem_shape_.size()) {
    case 0: return ValueKind::scalar;
    case 1: return ValueKind::vector;
    default: return ValueKind::matrix;
  }
}

Shape Value::shape() const {
  Shape s;
  if (batch_) s.push_back(*batch_);
  s.insert(s.end(), elem_shape_.begin(), elem_shape_.end());
  return s;
}

double Value::item() const {
  if (batch_ || !elem_shape_.empty()) throw ShapeMismatch("expected an unbatched scalar, got " + shape_to_string(shape()));
  return (*data_)[0];
}

Value Value::element(std::size_t b) const {
  if (!batch_) return *this;
  if (b >= *batch_) throw ShapeMismatch("batch index out of range");
  auto first = data_->begin() + static_cast<std::ptrdiff_t>(b * elem_size_);
  return Value(elem_shape_, std::nullopt, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(elem_size_)));
}

bool Value::all_finite() const {
  for (double x : *data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool Value::same_shape(const Value& other) const {
  return batch_ == other.batch_ && elem_shape_ == other.elem_shape_;
}

std::string Value::to_string() const {
  std::ostringstream os;
  auto emit_elem = [&](const double* p) {
    if (elem_shape_.empty()) {
      os << format_number(p[0]);
    } else if (elem_shape_.size() == 1) {
      os << "[";
      for (std::size_t i = 0; i < elem_shape_[0]; ++i) os << (i ? " " : "") << format_number(p[i]);
      os << "]";
    } else {
      os << "[";
      for (std::size_t r = 0; r < elem_shape_[0]; ++r) {
        os << (r ? " [" : "[");
        for (std::size_t c = 0; c < elem_shape_[1]; ++c) os << (c ? " " : "") << format_number(p[r * elem_shape_[1] + c]);
        os << "]";
      }
      os << "]";
    }
  };
  if (!batch_) {
    emit_elem(ptr());
  } else {
    os << "{";
    for (std::size_t b = 0; b < *batch_; ++b) {
      if (b) os << ", ";
      emit_elem(ptr() + b * elem_size_);
    }
    os << "}";
  }
  return os.str();
}

bool bitwise_equal(const Value& a, const Value& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Value& a, const Value& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("max_abs_diff on different shapes");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (std::isnan(d)) return d;
    m = std::max(m, d);
  }
  return m;
}

}  // namespace ncomp
