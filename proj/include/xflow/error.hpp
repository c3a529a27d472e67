// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace xflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid model / experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad model input (token ids, patch features).
class InputError : public Error {
 public:
  using Error::Error;
};

// Intervention plan that cannot be applied to a layout or model.
class PlanError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: empty task lists, empty chart series, bad spans.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Relative change requested with a zero baseline probability.
class UndefinedBaselineError : public Error {
 public:
  using Error::Error;
};

// Weight container failures. Each failure mode has its own type so callers
// can tell a corrupted file from a truncated one.
class LoadError : public Error {
 public:
  using Error::Error;
};

class FormatError : public LoadError {
 public:
  using LoadError::LoadError;
};

class VersionError : public LoadError {
 public:
  using LoadError::LoadError;
};

class TruncationError : public LoadError {
 public:
  using LoadError::LoadError;
};

class ChecksumError : public LoadError {
 public:
  using LoadError::LoadError;
};

}  // namespace xflow
