// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <stdexcept>
#include <string>

namespace flexoffload {

enum class ErrorKind {
  kInvalidParameter,
  kInsufficientBudget,
  kStorage,
  kCapability,
  kUsage,
  kCorruption,
  kUndefinedModel,
};

const char* ErrorKindName(ErrorKind kind);

/// Base of every error the library raises. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidParameterError : public Error {
 public:
  explicit InvalidParameterError(const std::string& what)
      : Error(ErrorKind::kInvalidParameter, what) {}
};

class InsufficientBudgetError : public Error {
 public:
  explicit InsufficientBudgetError(const std::string& what)
      : Error(ErrorKind::kInsufficientBudget, what) {}
};

class StorageError : public Error {
 public:
  explicit StorageError(const std::string& what)
      : Error(ErrorKind::kStorage, what) {}
};

class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what)
      : Error(ErrorKind::kCapability, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorKind::kUsage, what) {}
};

class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& what)
      : Error(ErrorKind::kCorruption, what) {}
};

class UndefinedModelError : public Error {
 public:
  explicit UndefinedModelError(const std::string& what)
      : Error(ErrorKind::kUndefinedModel, what) {}
};

}  // namespace flexoffload
