// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <tuple>

#include "flexoffload/error.hpp"

namespace flexoffload {
namespace {

void CheckCost(const CostModel& cost) {
  if (!(cost.compute_ns_per_byte >= 0) || !(cost.per_tensor_io_overhead_ns >= 0)) {
    throw InvalidParameterError("cost model rates must be non-negative");
  }
  if (cost.io_channels < 1) throw InvalidParameterError("io_channels must be >= 1");
}

double Throughput(double latency_s) {
  if (!(latency_s > 0) || !std::isfinite(latency_s)) {
    throw UndefinedModelError("per-token latency is zero or undefined");
  }
  return 1.0 / latency_s;
}

int64_t CeilNs(long double ns) { return static_cast<int64_t>(std::ceil(ns)); }

struct WorkItem {
  int64_t global_layer;
  int tensor;
  uint64_t bytes;
  int64_t duration_ns;
};

PreservationPlan PlanFor(const ModelManifest& manifest, const RunStrategy& strategy,
                         uint64_t budget) {
  // The mmap-like baseline locks nothing, but embeddings must still fit.
  return Plan(manifest, budget,
              strategy.schedule == Schedule::kMmapLike ? PlanStrategy::kNone
                                                       : strategy.plan);
}

uint64_t MaxResidual(const PreservationPlan& plan) {
  uint64_t m = 0;
  for (uint64_t r : plan.residual_bytes_per_layer) m = std::max(m, r);
  return m;
}

}  // namespace

double ComputeLatencySeconds(const CostModel& cost, uint64_t layer_bytes_total) {
  return cost.compute_ns_per_byte * static_cast<double>(layer_bytes_total) * 1e-9;
}

double IoTimeSeconds(const PreservationPlan& plan, const CostModel& cost) {
  const uint64_t io = IoBytesPerToken(plan);
  if (io == 0) return 0.0;
  if (!(cost.io_bandwidth_bytes_per_s > 0)) {
    throw UndefinedModelError("IO bandwidth must be positive when " +
                              std::to_string(io) + " bytes are read per token");
  }
  return static_cast<double>(io) / cost.io_bandwidth_bytes_per_s;
}

double PredictSync(const PreservationPlan& plan, const CostModel& cost,
                   uint64_t layer_bytes_total) {
  CheckCost(cost);
  return Throughput(ComputeLatencySeconds(cost, layer_bytes_total) +
                    IoTimeSeconds(plan, cost));
}

double PredictAsync(const PreservationPlan& plan, const CostModel& cost,
                    uint64_t layer_bytes_total) {
  CheckCost(cost);
  return Throughput(std::max(ComputeLatencySeconds(cost, layer_bytes_total),
                             IoTimeSeconds(plan, cost)));
}

double PredictMmapLike(const ModelManifest& manifest, const CostModel& cost,
                       uint64_t page_bytes) {
  CheckCost(cost);
  if (page_bytes == 0) throw InvalidParameterError("page_bytes must be positive");
  const uint64_t bytes = manifest.decoding_bytes();
  if (bytes > 0 && !(cost.io_bandwidth_bytes_per_s > 0)) {
    throw UndefinedModelError("IO bandwidth must be positive");
  }
  uint64_t pages = 0;
  for (const auto& l : manifest.layers) {
    for (const auto& t : l.tensors) pages += (t.size_bytes + page_bytes - 1) / page_bytes;
  }
  // One reader gets one channel's share of the bandwidth.
  double io = static_cast<double>(bytes) * cost.io_channels /
                  cost.io_bandwidth_bytes_per_s +
              static_cast<double>(pages) * cost.per_tensor_io_overhead_ns * 1e-9;
  return Throughput(ComputeLatencySeconds(cost, bytes) + io);
}

SimTimeline Simulate(const ModelManifest& manifest, const PreservationPlan& plan,
                     const ExecutionConfig& config, const CostModel& cost,
                     const SimOptions& options) {
  CheckCost(cost);
  CheckPlanMatchesManifest(plan, manifest);
  if (config.tokens < 1) throw UsageError("tokens must be >= 1");
  if (options.schedule == Schedule::kPrefetch &&
      (config.window_k < 1 || config.window_k > manifest.n_layers)) {
    throw UsageError("window_k must be in [1, n_layers]");
  }
  if (options.max_io_jitter_ns < 0) throw UsageError("jitter must be non-negative");

  const int n = manifest.n_layers;
  const int64_t total = static_cast<int64_t>(config.tokens) * n;
  const bool mmap = options.schedule == Schedule::kMmapLike;
  const int window = options.schedule == Schedule::kPrefetch ? config.window_k : 1;
  const int channels = mmap ? 1 : cost.io_channels;
  const bool count_mem_stall = options.schedule == Schedule::kPrefetch;
  if (!(cost.io_bandwidth_bytes_per_s > 0)) {
    throw UndefinedModelError("IO bandwidth must be positive");
  }
  // Every server, including the lone mmap-like reader, runs at bw / channels.
  const long double ns_per_byte_io =
      1e9L * cost.io_channels / cost.io_bandwidth_bytes_per_s;

  std::mt19937_64 rng(options.jitter_seed);
  std::uniform_int_distribution<int64_t> jitter(0, options.max_io_jitter_ns);
  auto io_duration = [&](uint64_t bytes) {
    int64_t d = CeilNs(static_cast<long double>(cost.per_tensor_io_overhead_ns) +
                       static_cast<long double>(bytes) * ns_per_byte_io);
    if (options.max_io_jitter_ns > 0) d += jitter(rng);
    return d;
  };

  // Work items in executor claim order.
  std::vector<WorkItem> items;
  std::vector<int> expected(static_cast<size_t>(n), 0);
  for (int64_t g = 0; g < total; ++g) {
    const int layer = static_cast<int>(g % n);
    const auto& spec = manifest.layers[static_cast<size_t>(layer)];
    int count = 0;
    for (size_t t = 0; t < spec.tensors.size(); ++t) {
      const TensorSpec& ts = spec.tensors[t];
      if (!mmap && plan.is_locked(layer, ts.role)) continue;
      if (mmap) {
        for (uint64_t off = 0; off < ts.size_bytes; off += config.page_bytes) {
          uint64_t len = std::min<uint64_t>(config.page_bytes, ts.size_bytes - off);
          items.push_back({g, static_cast<int>(t), len, io_duration(len)});
          ++count;
        }
      } else {
        items.push_back({g, static_cast<int>(t), ts.size_bytes, io_duration(ts.size_bytes)});
        ++count;
      }
    }
    expected[static_cast<size_t>(layer)] = count;
  }
  std::vector<int64_t> compute_ns(static_cast<size_t>(n));
  for (int l = 0; l < n; ++l) {
    compute_ns[static_cast<size_t>(l)] =
        CeilNs(static_cast<long double>(cost.compute_ns_per_byte) *
               manifest.layers[static_cast<size_t>(l)].bytes());
  }
  const uint64_t resident_bytes =
      plan.embedding_bytes + (mmap ? 0 : plan.locked_bytes);

  SimTimeline out;
  RunReport& rep = out.report;
  rep.per_layer.resize(static_cast<size_t>(n));
  out.layer_end_ns.assign(static_cast<size_t>(total), 0);

  // (time, seq, kind, index): kind 0 = IO end (index = item), 1 = compute end.
  using Pending = std::tuple<int64_t, uint64_t, int, int64_t>;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  uint64_t seq = 0;

  int64_t now = 0;
  int64_t last = 0;
  int free_channels = channels;
  size_t next_item = 0;
  int64_t completed = 0;
  int64_t next_compute = 0;
  bool compute_busy = false;
  std::vector<int> loaded(static_cast<size_t>(total), 0);
  uint64_t tracked = resident_bytes;
  uint64_t peak = tracked;
  std::vector<uint64_t> layer_live(static_cast<size_t>(total), 0);

  auto record = [&](EventKind kind, int64_t g, int tensor) {
    if (!options.record_events) return;
    out.events.push_back({now, kind, static_cast<int>(g / n),
                          static_cast<int>(g % n), tensor});
  };

  auto advance = [&](int64_t t) {
    const int64_t dt = t - last;
    if (dt > 0) {
      if (count_mem_stall && free_channels > 0 && next_item < items.size() &&
          items[next_item].global_layer >= completed + window) {
        rep.mem_stall_ns += dt * free_channels;
      }
      if (!compute_busy && next_compute < total) {
        rep.io_stall_ns += dt;
        rep.per_layer[static_cast<size_t>(next_compute % n)].io_wait_ns += dt;
      }
    }
    last = t;
    now = t;
  };

  auto dispatch = [&] {
    while (free_channels > 0 && next_item < items.size() &&
           items[next_item].global_layer < completed + window) {
      const WorkItem& it = items[next_item];
      record(EventKind::kIoStart, it.global_layer, it.tensor);
      tracked += it.bytes;
      layer_live[static_cast<size_t>(it.global_layer)] += it.bytes;
      peak = std::max(peak, tracked);
      rep.io_bytes_total += it.bytes;
      ++rep.io_requests;
      --free_channels;
      queue.emplace(now + it.duration_ns, seq++, 0, static_cast<int64_t>(next_item));
      ++next_item;
    }
  };

  auto try_compute = [&] {
    if (compute_busy || next_compute >= total) return;
    const int layer = static_cast<int>(next_compute % n);
    if (loaded[static_cast<size_t>(next_compute)] < expected[static_cast<size_t>(layer)]) {
      return;
    }
    compute_busy = true;
    record(EventKind::kComputeStart, next_compute, -1);
    rep.per_layer[static_cast<size_t>(layer)].compute_ns += compute_ns[static_cast<size_t>(layer)];
    queue.emplace(now + compute_ns[static_cast<size_t>(layer)], seq++, 1, next_compute);
  };

  try_compute();
  dispatch();
  while (!queue.empty()) {
    auto [t, s, kind, index] = queue.top();
    queue.pop();
    advance(t);
    if (kind == 0) {
      const WorkItem& it = items[static_cast<size_t>(index)];
      record(EventKind::kIoEnd, it.global_layer, it.tensor);
      ++loaded[static_cast<size_t>(it.global_layer)];
      ++free_channels;
    } else {
      record(EventKind::kComputeEnd, index, -1);
      out.layer_end_ns[static_cast<size_t>(index)] = now;
      tracked -= layer_live[static_cast<size_t>(index)];
      compute_busy = false;
      ++completed;
      ++next_compute;
    }
    try_compute();
    dispatch();
  }

  const int64_t end = now;
  rep.source = "simulated";
  rep.budget_bytes = config.budget_bytes;
  rep.window_k = options.schedule == Schedule::kPrefetch ? config.window_k : 0;
  rep.io_threads = channels;
  rep.compute_threads = config.compute_threads;
  rep.read_mode = config.read_mode;
  rep.tokens = config.tokens;
  rep.strategy = plan.strategy ? std::string(StrategyName(*plan.strategy)) : "plan";
  rep.wall_time_s = static_cast<double>(end) * 1e-9;
  rep.throughput_tps = end > 0 ? config.tokens / rep.wall_time_s : 0.0;
  rep.peak_tracked_bytes = peak;

  out.steady_throughput_tps = rep.throughput_tps;
  if (total > window) {
    const int64_t t0 = out.layer_end_ns[static_cast<size_t>(window - 1)];
    if (end > t0) {
      out.steady_throughput_tps = static_cast<double>(total - window) / n /
                                  (static_cast<double>(end - t0) * 1e-9);
    }
  }
  return out;
}

RunReport AnalyticReport(const ModelManifest& manifest, const RunStrategy& strategy,
                         const ExecutionConfig& config, const CostModel& cost) {
  const PreservationPlan plan = PlanFor(manifest, strategy, config.budget_bytes);
  const uint64_t bytes = manifest.decoding_bytes();
  RunReport r;
  r.strategy = strategy.name;
  r.budget_bytes = config.budget_bytes;
  r.io_threads = strategy.schedule == Schedule::kMmapLike ? 1 : cost.io_channels;
  r.compute_threads = config.compute_threads;
  r.read_mode = config.read_mode;
  r.tokens = config.tokens;
  r.source = "analytic";

  const double compute = ComputeLatencySeconds(cost, bytes);
  double io = 0;
  double per_token = 0;
  uint64_t peak = plan.embedding_bytes;
  switch (strategy.schedule) {
    case Schedule::kPrefetch:
      r.window_k = config.window_k;
      r.throughput_tps = PredictAsync(plan, cost, bytes);
      io = IoTimeSeconds(plan, cost);
      r.io_stall_ns = static_cast<int64_t>(std::max(0.0, io - compute) * 1e9) * config.tokens;
      r.mem_stall_ns = static_cast<int64_t>(std::max(0.0, compute - io) * 1e9) * config.tokens;
      peak += plan.locked_bytes + static_cast<uint64_t>(config.window_k) * MaxResidual(plan);
      break;
    case Schedule::kSync:
      r.throughput_tps = PredictSync(plan, cost, bytes);
      io = IoTimeSeconds(plan, cost);
      r.io_stall_ns = static_cast<int64_t>(io * 1e9) * config.tokens;
      peak += plan.locked_bytes + MaxResidual(plan);
      break;
    case Schedule::kMmapLike:
      r.throughput_tps = PredictMmapLike(manifest, cost, config.page_bytes);
      per_token = 1.0 / r.throughput_tps;
      r.io_stall_ns = static_cast<int64_t>((per_token - compute) * 1e9) * config.tokens;
      for (const auto& l : manifest.layers) peak = std::max(peak, plan.embedding_bytes + l.bytes());
      break;
  }
  r.io_bytes_total = (strategy.schedule == Schedule::kMmapLike ? bytes : IoBytesPerToken(plan)) *
                     static_cast<uint64_t>(config.tokens);
  r.peak_tracked_bytes = peak;
  r.wall_time_s = config.tokens / r.throughput_tps;
  return r;
}

RunReport SimulatedReport(const ModelManifest& manifest, const RunStrategy& strategy,
                          const ExecutionConfig& config, const CostModel& cost) {
  const PreservationPlan plan = PlanFor(manifest, strategy, config.budget_bytes);
  SimOptions options;
  options.schedule = strategy.schedule;
  options.record_events = false;
  RunReport r = Simulate(manifest, plan, config, cost, options).report;
  r.strategy = strategy.name;
  return r;
}

std::vector<SweepRow> Sweep(const ModelManifest& manifest,
                            const std::vector<uint64_t>& budgets,
                            const std::vector<RunStrategy>& strategies,
                            const ExecutionConfig& config, const CostModel& cost) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) {
    throw UsageError("sweep budgets must be sorted ascending");
  }
  std::vector<SweepRow> rows;
  for (uint64_t budget : budgets) {
    ExecutionConfig c = config;
    c.budget_bytes = budget;
    for (const auto& s : strategies) {
      SweepRow row;
      row.budget_bytes = budget;
      row.strategy = s;
      row.analytic = AnalyticReport(manifest, s, c, cost);
      row.analytic_tps = row.analytic.throughput_tps;
      row.simulated = SimulatedReport(manifest, s, c, cost);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace flexoffload
