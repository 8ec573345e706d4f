#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparxnet {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Shapes of two operands do not chain. `layer()` names the offending layer
/// when the mismatch is inside a network, and is npos otherwise.
class DimensionError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit DimensionError(const std::string& what, std::size_t layer = npos)
      : Error(layer == npos ? what : "layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// Training diverged (non-finite loss) or could not proceed.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t iteration)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Malformed input file (CSV, JSON model, dataset sidecar).
class ParseError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace sparxnet
