#pragma once

#include <stdexcept>
#include <string>

namespace ttpmap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad JSON, a missing required field, an unreadable file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A value that is well-formed but refers to something that does not exist
/// (unknown label id, empty report text).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An append that would break uniqueness (duplicate doc_id).
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// A label whose training targets are all one class.
class DegenerateLabelError : public Error {
 public:
  using Error::Error;
};

/// Vectorizer fitting produced no usable features.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent options or thresholds.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// HTML input contained no paragraph text.
class EmptyTextError : public Error {
 public:
  using Error::Error;
};

/// A decided label cannot be expressed as a STIX reference.
class ExportError : public Error {
 public:
  using Error::Error;
};

}  // namespace ttpmap
