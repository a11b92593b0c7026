#pragma once

#include <stdexcept>
#include <string>

namespace lit {

// Shape or extent disagreement between operands.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's contract (non-scalar loss, r < 1, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model or run configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected in a tensor value.
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content; carries the byte offset of the problem.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, long long offset)
      : std::runtime_error(msg + " (offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  long long byte_offset;
};

}  // namespace lit
