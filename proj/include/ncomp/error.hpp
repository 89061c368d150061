#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ncomp {

/// 1-based line/column into the source text.
struct SourcePos {
  std::size_t line = 0;
  std::size_t column = 0;
};

std::string to_string(const SourcePos& pos);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PositionedError : public Error {
 public:
  PositionedError(const std::string& what, SourcePos pos)
      : Error(what + " at " + to_string(pos)), pos_(pos) {}
  SourcePos position() const { return pos_; }

 private:
  SourcePos pos_;
};

class LexError : public PositionedError {
 public:
  using PositionedError::PositionedError;
};

class ParseError : public PositionedError {
 public:
  using PositionedError::PositionedError;
};

class ScopeError : public PositionedError {
 public:
  using PositionedError::PositionedError;
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(const std::string& name)
      : Error("unbound variable '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class LoweringError : public Error {
 public:
  using Error::Error;
};

class CycleDetected : public Error {
 public:
  using Error::Error;
};

class DepthLimitExceeded : public Error {
 public:
  DepthLimitExceeded(const std::string& fn, std::size_t limit)
      : Error("recursion depth limit " + std::to_string(limit) + " exceeded in '" + fn + "'"),
        function_(fn),
        limit_(limit) {}
  const std::string& function() const { return function_; }
  std::size_t limit() const { return limit_; }

 private:
  std::string function_;
  std::size_t limit_;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class DomainViolation : public Error {
 public:
  DomainViolation(const std::string& what, long instruction, long batch_index)
      : Error(what), instruction_(instruction), batch_index_(batch_index) {}
  /// Index of the instruction that left the safe domain, -1 outside compiled evaluation.
  long instruction() const { return instruction_; }
  /// Offending batch element, -1 for unbatched values.
  long batch_index() const { return batch_index_; }

 private:
  long instruction_;
  long batch_index_;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class MissingInput : public Error {
 public:
  using Error::Error;
};

class BranchDivergence : public Error {
 public:
  using Error::Error;
};

class MissingGradient : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t epoch)
      : Error("non-finite loss at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

class EmptyObservations : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnknownEquation : public Error {
 public:
  using Error::Error;
};

}  // namespace ncomp
