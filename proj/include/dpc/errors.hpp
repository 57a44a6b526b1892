#pragma once

#include <stdexcept>
#include <string>

namespace dpc {

/// Precondition violation on a library call (empty prefix, bad parameters, ...).
struct InvalidInput : std::invalid_argument {
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed serialized data (truncated frame, bad magic, corrupt payload).
struct DecodeError : std::runtime_error {
  explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

/// Bloom catalog parameter mismatch between a local replica and the master.
struct CatalogMismatch : std::runtime_error {
  explicit CatalogMismatch(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpc
