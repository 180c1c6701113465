// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexoffload/storage.hpp"

namespace flexoffload {

struct LayerTiming {
  int64_t io_wait_ns = 0;  // compute waiting on this layer's reads
  int64_t compute_ns = 0;
};

/// Result of one measured, simulated, or analytic run.
struct RunReport {
  std::string strategy;
  uint64_t budget_bytes = 0;
  int window_k = 0;
  int io_threads = 1;
  int compute_threads = 1;
  ReadMode read_mode = ReadMode::kCached;
  int tokens = 0;

  double wall_time_s = 0;
  double throughput_tps = 0;
  uint64_t peak_tracked_bytes = 0;
  uint64_t io_bytes_total = 0;
  uint64_t io_requests = 0;
  int64_t io_stall_ns = 0;   // compute waiting on IO
  int64_t mem_stall_ns = 0;  // IO waiting on a window slot
  int64_t warmup_ns = 0;     // startup load of locked tensors; not in throughput
  std::vector<LayerTiming> per_layer;
  std::string source = "measured";  // analytic | simulated | measured
};

/// CSV header; the `source` column is appended when requested.
std::string CsvHeader(bool with_source);
std::string CsvRow(const RunReport& report, bool with_source);

}  // namespace flexoffload
