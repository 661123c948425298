#pragma once

#include <stdexcept>
#include <string>

namespace drau {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or channel counts do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation precondition (non-scalar loss, bad target id, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or inconsistent model/config combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Input that cannot produce a meaningful result, e.g. an empty question or a fully masked attention.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace drau
