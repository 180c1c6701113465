// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flexoffload/executor.hpp"
#include "flexoffload/manifest.hpp"
#include "flexoffload/perf_model.hpp"
#include "flexoffload/planner.hpp"
#include "flexoffload/report.hpp"
#include "flexoffload/strategy.hpp"

namespace flexoffload {

/// A budget given either in bytes or as a fraction of total model bytes.
struct BudgetSpec {
  bool is_fraction = false;
  double fraction = 0.0;
  uint64_t bytes = 0;

  static BudgetSpec Bytes(uint64_t b) { return {false, 0.0, b}; }
  static BudgetSpec Fraction(double f) { return {true, f, 0}; }
};

/// "0.25" and "25%" are fractions; plain integers are bytes.
BudgetSpec ParseBudget(std::string_view text);
/// floor(fraction * total_bytes) for fractions in (0, 1].
uint64_t ResolveBudget(const BudgetSpec& budget, const ModelManifest& manifest);

enum class RunMode { kReal, kSimulate, kAnalytic };
std::string_view RunModeName(RunMode mode);
std::optional<RunMode> ParseRunMode(std::string_view name);

struct ExperimentSpec {
  std::vector<BudgetSpec> budgets;
  std::vector<RunStrategy> strategies;
  RunMode mode = RunMode::kSimulate;
  ExecutionConfig config;
  CostModel cost;  // simulate / analytic only
};

/// One row per (budget, strategy), budgets ascending, strategies in the
/// given order. Real mode needs `store`.
std::vector<RunReport> RunExperiment(const ModelManifest& manifest,
                                     const ExperimentSpec& spec,
                                     TensorReader* store);

struct ModelPaths {
  std::filesystem::path manifest;
  std::filesystem::path blob;
};
ModelPaths PathsInDirectory(const std::filesystem::path& dir);

/// Scratch root: $FLEXOFFLOAD_TMPDIR, else <system temp>/flexoffload.
std::filesystem::path ScratchDirectory();

/// Total size and per-layer composition of a manifest.
std::string DescribeManifest(const ModelManifest& manifest);
/// locked bytes, residual spread, per-token IO.
std::string DescribePlan(const PreservationPlan& plan, const ModelManifest& manifest);

}  // namespace flexoffload
