// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "flexoffload/error.hpp"

namespace flexoffload {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitStorage = 3,
  kExitCapability = 4,
  kExitCorruption = 5,
  kExitInsufficientBudget = 6,
  kExitUndefinedModel = 7,
};

int ExitCodeFor(ErrorKind kind);

/// Entry point of the `flexoffload` tool. `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace flexoffload
