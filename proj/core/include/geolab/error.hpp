#pragma once

#include <stdexcept>
#include <string>

namespace geolab {

enum class ErrorKind {
  Io,          // missing or unwritable file
  Format,      // malformed document, size or checksum mismatch
  Argument,    // precondition violated by the caller
  Numeric,     // non-finite data, solver failed to converge
  Degenerate,  // geometry or labels too degenerate to measure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace geolab
