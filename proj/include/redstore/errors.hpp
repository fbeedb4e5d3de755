#pragma once

#include <stdexcept>
#include <string>

namespace redstore {

// Base for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// Parameter or value outside the operation's domain (bad index, bad range,
// empty category set, non-finite result, ...).
struct DomainError : Error {
  using Error::Error;
};

// Malformed external input: PPM bytes, action JSON, CSV rows.
struct ParseError : Error {
  using Error::Error;
};

// File-level I/O failure (open/read/write).
struct IoError : Error {
  using Error::Error;
};

// Weights-file rejection; `kind` distinguishes the failure class.
struct WeightsError : Error {
  enum class Kind { bad_magic, truncated, inconsistent_header, malformed };
  Kind kind;
  WeightsError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// HTTP transport failure talking to a storefront; distinct from any
// attack or episode outcome.
struct TransportError : Error {
  using Error::Error;
};

}  // namespace redstore
