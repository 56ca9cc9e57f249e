#pragma once

#include <stdexcept>
#include <string>

namespace rws {

// Invalid arguments or violated invariants. The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ArchitectureMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FingerprintMismatch : public ValidationError {
 public:
  FingerprintMismatch(std::string expected, std::string actual)
      : ValidationError("fingerprint mismatch: target " + expected + " vs signature " + actual),
        expected_(std::move(expected)),
        actual_(std::move(actual)) {}
  const std::string& expected() const { return expected_; }
  const std::string& actual() const { return actual_; }

 private:
  std::string expected_;
  std::string actual_;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files and I/O failures. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParseError {
  TruncatedFile,
  HeaderOverrunsFile,
  BadHeader,
  UnknownDtype,
  BadShape,
  OffsetsOutOfBounds,
  OverlappingOffsets,
  SizeMismatch,
  MissingLayerOrder,
  BadLayerOrder,
  OrphanTensor,
  BadMetadata,
  MissingScale,
  BadMagic,
  CountMismatch,
};

class FormatError : public IoError {
 public:
  FormatError(ParseError kind, const std::string& what) : IoError(what), kind_(kind) {}
  ParseError kind() const { return kind_; }

 private:
  ParseError kind_;
};

}  // namespace rws
