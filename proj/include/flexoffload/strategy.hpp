// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flexoffload/planner.hpp"

namespace flexoffload {

/// How IO is interleaved with compute.
enum class Schedule {
  kPrefetch,  // windowed asynchronous prefetch
  kSync,      // per-layer multi-threaded reads, then compute
  kMmapLike,  // single-threaded page-sized reads, no locking, no lookahead
};

std::string_view ScheduleName(Schedule schedule);

/// A named cell of the ablation matrix: preservation strategy x schedule.
struct RunStrategy {
  std::string name;
  PlanStrategy plan = PlanStrategy::kNone;
  Schedule schedule = Schedule::kPrefetch;

  bool operator==(const RunStrategy&) const = default;
};

/// Accepted names: flex, layer-order, attn-first, ffn-first, none (prefetch
/// only), sync (no locking, no prefetch), flex-sync (flex plan, no prefetch),
/// mmap.
std::optional<RunStrategy> ParseRunStrategy(std::string_view name);
std::vector<RunStrategy> AllRunStrategies();

}  // namespace flexoffload
