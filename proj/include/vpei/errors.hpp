#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace vpei {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation (non-square, mismatched sizes).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input or result outside the representable range (overflowing exponentials).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Unsupported stage count, order, or method variant.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A linear system is singular. Carries the elimination column where the
/// zero pivot appeared, when known.
class SingularityError : public Error {
 public:
  explicit SingularityError(const std::string& what,
                            std::optional<std::size_t> pivot = std::nullopt)
      : Error(what), pivot_(pivot) {}

  std::optional<std::size_t> pivot() const noexcept { return pivot_; }

 private:
  std::optional<std::size_t> pivot_;
};

/// Fixed-point stage iteration blew up.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t stage, int iteration)
      : Error(what), stage_(stage), iteration_(iteration) {}

  /// Index of the first stage whose iterate went non-finite (or grew unboundedly).
  std::size_t stage() const noexcept { return stage_; }
  int iteration() const noexcept { return iteration_; }

 private:
  std::size_t stage_;
  int iteration_;
};

/// A class certificate cannot be used (singular or ill-conditioned P).
class CertificateInvalidError : public Error {
 public:
  using Error::Error;
};

/// Successive reference refinements disagree.
class ReferenceUnreliableError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (tableau files, certificates, expressions, configs).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace vpei
