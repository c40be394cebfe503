// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <stdexcept>
#include <string>

namespace wealy {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input or state violates a documented invariant (exit status 1 in the CLI).
class ValidationError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class LookupError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };

// Persistence problems (exit status 2 in the CLI).
class StorageError : public Error { using Error::Error; };
class FormatError : public StorageError { using StorageError::StorageError; };
class CorruptionError : public StorageError { using StorageError::StorageError; };

}  // namespace wealy
