// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>

#include "flexoffload/manifest.hpp"
#include "flexoffload/planner.hpp"
#include "flexoffload/report.hpp"
#include "flexoffload/storage.hpp"
#include "flexoffload/strategy.hpp"

namespace flexoffload {

inline constexpr int kDefaultWindow = 3;

struct ExecutionConfig {
  PlanStrategy strategy = PlanStrategy::kFlex;
  uint64_t budget_bytes = 0;
  /// Layers whose prefetched tensors may be live at once, counting the layer
  /// being computed.
  int window_k = kDefaultWindow;
  int io_threads = 1;
  int compute_threads = 1;
  ReadMode read_mode = ReadMode::kCached;
  int tokens = 1;
  /// Wall-clock cost of the synthetic kernel per layer byte.
  double compute_ns_per_byte = 0.0;
  bool verify_payloads = false;
  uint64_t payload_seed = 0;
  /// Request size of the mmap-like baseline.
  uint64_t page_bytes = 4096;
};

/// Hooks invoked by the executor's threads. `tensor` is the index into the
/// layer's tensor list. Implementations must be thread-safe.
/// OnComputeEnd runs before the layer's window slot is released.
class ExecutionObserver {
 public:
  virtual ~ExecutionObserver() = default;
  virtual void OnIoStart(int /*token*/, int /*layer*/, int /*tensor*/) {}
  virtual void OnIoEnd(int /*token*/, int /*layer*/, int /*tensor*/) {}
  virtual void OnComputeStart(int /*token*/, int /*layer*/) {}
  virtual void OnComputeEnd(int /*token*/, int /*layer*/) {}
};

/// Windowed asynchronous prefetch. IO workers pull (layer, tensor) items in
/// order and block when the item's layer is window_k or more layers ahead of
/// the oldest uncompleted layer; compute processes layers in order and frees
/// a layer's prefetched buffers when its compute finishes.
RunReport Run(const ModelManifest& manifest, const PreservationPlan& plan,
              TensorReader& store, const ExecutionConfig& config,
              ExecutionObserver* observer = nullptr);

/// No lookahead: layer i's reads (still spread over io_threads) complete
/// before its compute starts, and layer i+1's reads start after it ends.
RunReport RunSync(const ModelManifest& manifest, const PreservationPlan& plan,
                  TensorReader& store, const ExecutionConfig& config,
                  ExecutionObserver* observer = nullptr);

/// Single-threaded page-sized reads of every decoding tensor every token,
/// nothing locked, no lookahead.
RunReport RunMmapLike(const ModelManifest& manifest, TensorReader& store,
                      const ExecutionConfig& config,
                      ExecutionObserver* observer = nullptr);

/// Dispatches on the strategy's schedule; plans with config.budget_bytes.
RunReport RunStrategyOnStore(const ModelManifest& manifest,
                             const RunStrategy& strategy, TensorReader& store,
                             const ExecutionConfig& config,
                             ExecutionObserver* observer = nullptr);

}  // namespace flexoffload
