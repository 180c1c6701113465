// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/error.hpp"

namespace flexoffload {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kInsufficientBudget: return "insufficient-budget";
    case ErrorKind::kStorage: return "storage";
    case ErrorKind::kCapability: return "capability";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kUndefinedModel: return "undefined-model";
  }
  return "unknown";
}

}  // namespace flexoffload
