#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgmvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of a primitive (log of a non-positive value, ...).
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An embedding row whose norm is too small to normalize.
class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (rates, fractions, thresholds, sizes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mixture prior requested for a sample with no positive label.
class EmptyMixtureError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint cannot be read, or does not fit the dataset it is used with.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Finite-difference oracle evaluated a function that is not deterministic.
class OracleInvalidError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied input violates a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace cgmvae
