// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>
#include <vector>

#include "flexoffload/executor.hpp"
#include "flexoffload/manifest.hpp"
#include "flexoffload/planner.hpp"
#include "flexoffload/report.hpp"
#include "flexoffload/strategy.hpp"

namespace flexoffload {

struct CostModel {
  double io_bandwidth_bytes_per_s = 1e9;
  double compute_ns_per_byte = 0.0;
  /// Fixed latency added to every read request. Zero gives the pure
  /// bandwidth model of the closed forms below.
  double per_tensor_io_overhead_ns = 0.0;
  /// Parallel IO servers, each at io_bandwidth / io_channels.
  int io_channels = 1;
};

/// Per-token compute latency in seconds for `layer_bytes_total` bytes.
double ComputeLatencySeconds(const CostModel& cost, uint64_t layer_bytes_total);
/// Per-token IO time in seconds for the plan's residual bytes.
double IoTimeSeconds(const PreservationPlan& plan, const CostModel& cost);

/// Tokens/s with IO and compute serialized: 1 / (compute + io).
double PredictSync(const PreservationPlan& plan, const CostModel& cost,
                   uint64_t layer_bytes_total);
/// Tokens/s with IO fully overlapped: 1 / max(compute, io).
double PredictAsync(const PreservationPlan& plan, const CostModel& cost,
                    uint64_t layer_bytes_total);
/// Tokens/s of the page-granular single-channel baseline, counting the
/// per-request overhead of every page.
double PredictMmapLike(const ModelManifest& manifest, const CostModel& cost,
                       uint64_t page_bytes);

enum class EventKind { kIoStart, kIoEnd, kComputeStart, kComputeEnd };

struct SimEvent {
  int64_t time_ns = 0;
  EventKind kind = EventKind::kIoStart;
  int token = 0;
  int layer = 0;
  int tensor = -1;  // index into the layer's tensors; -1 for compute events
};

struct SimOptions {
  Schedule schedule = Schedule::kPrefetch;
  /// Each read gets a uniform extra delay in [0, max_io_jitter_ns].
  int64_t max_io_jitter_ns = 0;
  uint64_t jitter_seed = 0;
  bool record_events = true;
};

struct SimTimeline {
  std::vector<SimEvent> events;  // time-ordered
  RunReport report;
  /// Tokens/s after excluding the first window_k layers of the first token.
  double steady_throughput_tps = 0;
  /// Completion time of each global layer (token * N + layer).
  std::vector<int64_t> layer_end_ns;
};

/// Deterministic discrete-event model of the executor: same work items,
/// window rule, release point and stall attribution, with integer-ns time.
/// IO channels come from cost.io_channels (config.io_threads is ignored).
SimTimeline Simulate(const ModelManifest& manifest, const PreservationPlan& plan,
                     const ExecutionConfig& config, const CostModel& cost,
                     const SimOptions& options = {});

struct SweepRow {
  uint64_t budget_bytes = 0;
  RunStrategy strategy;
  double analytic_tps = 0;
  RunReport analytic;
  RunReport simulated;
};

/// Full factorial budget x strategy table. Budgets must be ascending.
std::vector<SweepRow> Sweep(const ModelManifest& manifest,
                            const std::vector<uint64_t>& budgets,
                            const std::vector<RunStrategy>& strategies,
                            const ExecutionConfig& config, const CostModel& cost);

/// Analytic RunReport for one strategy and budget.
RunReport AnalyticReport(const ModelManifest& manifest, const RunStrategy& strategy,
                         const ExecutionConfig& config, const CostModel& cost);

/// Simulated RunReport for one strategy and budget.
RunReport SimulatedReport(const ModelManifest& manifest, const RunStrategy& strategy,
                          const ExecutionConfig& config, const CostModel& cost);

}  // namespace flexoffload
