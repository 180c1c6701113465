// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flexoffload/manifest.hpp"

namespace flexoffload {

enum class PlanStrategy {
  kFlex,        // flexible tensor preservation with balanced locking
  kLayerOrder,  // whole layers in index order (unbalanced)
  kAttnFirst,
  kFfnFirst,
  kNone,
};

std::string_view StrategyName(PlanStrategy strategy);
std::optional<PlanStrategy> ParseStrategy(std::string_view name);

/// Which tensors stay resident for the whole run. Embeddings are always
/// resident and are charged to the budget but not listed in `locked`.
struct PreservationPlan {
  std::optional<PlanStrategy> strategy;  // unset for plans read from a file
  uint64_t budget_bytes = 0;
  uint64_t embedding_bytes = 0;
  /// Locked decoding-layer bytes; locked_bytes + embedding_bytes <= budget_bytes.
  uint64_t locked_bytes = 0;
  /// Per layer, locked roles in the order they were chosen.
  std::vector<std::vector<TensorRole>> locked;
  std::vector<uint64_t> residual_bytes_per_layer;

  bool is_locked(int layer, TensorRole role) const;
  size_t locked_tensor_count() const;

  bool operator==(const PreservationPlan&) const = default;
};

/// Attention roles in preservation priority: smallest first, ties K, V, Q, O.
std::vector<TensorRole> AttentionPriority(const ModelManifest& manifest);

/// Computes a preservation plan. Throws InsufficientBudgetError when the
/// budget cannot hold the embeddings.
PreservationPlan Plan(const ModelManifest& manifest, uint64_t budget_bytes,
                      PlanStrategy strategy);

uint64_t ResidualSpread(const PreservationPlan& plan);
uint64_t IoBytesPerToken(const PreservationPlan& plan);

/// Throws UsageError when the plan does not fit the manifest's shape.
void CheckPlanMatchesManifest(const PreservationPlan& plan,
                              const ModelManifest& manifest);

std::string SerializePlan(const PreservationPlan& plan);
/// Rebuilds residuals from the manifest. Throws InvalidParameterError on
/// malformed text or roles the manifest lacks.
PreservationPlan ParsePlan(std::string_view text, const ModelManifest& manifest);

}  // namespace flexoffload
