// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/report.hpp"

#include <cstdio>
#include <sstream>

namespace flexoffload {

std::string CsvHeader(bool with_source) {
  std::string h =
      "strategy,budget_bytes,window_k,io_threads,compute_threads,read_mode,"
      "tokens,throughput_tps,peak_bytes,io_bytes,io_stall_ns,mem_stall_ns";
  if (with_source) h += ",source";
  return h;
}

std::string CsvRow(const RunReport& r, bool with_source) {
  char tps[64];
  std::snprintf(tps, sizeof(tps), "%.6g", r.throughput_tps);
  std::ostringstream out;
  out << r.strategy << ',' << r.budget_bytes << ',' << r.window_k << ','
      << r.io_threads << ',' << r.compute_threads << ','
      << ReadModeName(r.read_mode) << ',' << r.tokens << ',' << tps << ','
      << r.peak_tracked_bytes << ',' << r.io_bytes_total << ','
      << r.io_stall_ns << ',' << r.mem_stall_ns;
  if (with_source) out << ',' << r.source;
  return out.str();
}

}  // namespace flexoffload
