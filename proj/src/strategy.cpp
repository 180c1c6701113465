// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/strategy.hpp"

namespace flexoffload {

std::string_view ScheduleName(Schedule schedule) {
  switch (schedule) {
    case Schedule::kPrefetch: return "prefetch";
    case Schedule::kSync: return "sync";
    case Schedule::kMmapLike: return "mmap";
  }
  return "unknown";
}

std::vector<RunStrategy> AllRunStrategies() {
  return {
      {"flex", PlanStrategy::kFlex, Schedule::kPrefetch},
      {"layer-order", PlanStrategy::kLayerOrder, Schedule::kPrefetch},
      {"attn-first", PlanStrategy::kAttnFirst, Schedule::kPrefetch},
      {"ffn-first", PlanStrategy::kFfnFirst, Schedule::kPrefetch},
      {"none", PlanStrategy::kNone, Schedule::kPrefetch},
      {"sync", PlanStrategy::kNone, Schedule::kSync},
      {"flex-sync", PlanStrategy::kFlex, Schedule::kSync},
      {"mmap", PlanStrategy::kNone, Schedule::kMmapLike},
  };
}

std::optional<RunStrategy> ParseRunStrategy(std::string_view name) {
  for (auto& s : AllRunStrategies()) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

}  // namespace flexoffload
