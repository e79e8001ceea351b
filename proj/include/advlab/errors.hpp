#pragma once

#include <stdexcept>
#include <string>

namespace advlab {

// Base for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or incompatible shapes/parameters supplied by the caller.
struct ConfigError : Error {
  using Error::Error;
};

// Invalid runtime input values (bad labels, out-of-range pixels).
struct InputError : Error {
  using Error::Error;
};

// Malformed or unsupported file contents (magic, version, checksum, arch id).
struct FormatError : Error {
  using Error::Error;
};

// Mutually inconsistent inputs (e.g. image/label count mismatch, truncation).
struct ConsistencyError : Error {
  using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace advlab
