#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace burstforge {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad shapes, bad configs, bad files: the caller asked for something
// inconsistent. Maps to CLI exit code 2.
struct ValidationError : Error {
  using Error::Error;
};

// NaN/Inf surfaced from a numeric kernel, checksum mismatch in a payload,
// failed invariant at runtime. Maps to CLI exit code 3.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace burstforge
