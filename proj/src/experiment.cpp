// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "flexoffload/error.hpp"

namespace flexoffload {

BudgetSpec ParseBudget(std::string_view text) {
  auto bad = [&] {
    return InvalidParameterError("bad budget '" + std::string(text) + "'");
  };
  if (text.empty()) throw bad();
  bool percent = text.back() == '%';
  if (percent) text.remove_suffix(1);
  if (percent || text.find('.') != std::string_view::npos ||
      text.find('e') != std::string_view::npos) {
    double v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) throw bad();
    if (percent) v /= 100.0;
    if (!(v > 0.0 && v <= 1.0)) {
      throw InvalidParameterError("budget fraction must be in (0, 1], got " +
                                  std::to_string(v));
    }
    return BudgetSpec::Fraction(v);
  }
  uint64_t b = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), b);
  if (ec != std::errc() || p != text.data() + text.size()) throw bad();
  return BudgetSpec::Bytes(b);
}

uint64_t ResolveBudget(const BudgetSpec& budget, const ModelManifest& manifest) {
  if (!budget.is_fraction) return budget.bytes;
  if (!(budget.fraction > 0.0 && budget.fraction <= 1.0)) {
    throw InvalidParameterError("budget fraction must be in (0, 1]");
  }
  return static_cast<uint64_t>(
      std::floor(budget.fraction * static_cast<double>(manifest.total_bytes)));
}

std::string_view RunModeName(RunMode mode) {
  switch (mode) {
    case RunMode::kReal: return "real";
    case RunMode::kSimulate: return "simulate";
    case RunMode::kAnalytic: return "analytic";
  }
  return "unknown";
}

std::optional<RunMode> ParseRunMode(std::string_view name) {
  for (RunMode m : {RunMode::kReal, RunMode::kSimulate, RunMode::kAnalytic}) {
    if (RunModeName(m) == name) return m;
  }
  return std::nullopt;
}

std::vector<RunReport> RunExperiment(const ModelManifest& manifest,
                                     const ExperimentSpec& spec,
                                     TensorReader* store) {
  if (spec.budgets.empty() || spec.strategies.empty()) {
    throw UsageError("an experiment needs at least one budget and one strategy");
  }
  if (spec.mode == RunMode::kReal && store == nullptr) {
    throw UsageError("real mode needs an open blob store");
  }
  std::vector<uint64_t> budgets;
  for (const auto& b : spec.budgets) budgets.push_back(ResolveBudget(b, manifest));
  std::sort(budgets.begin(), budgets.end());

  CostModel cost = spec.cost;
  cost.compute_ns_per_byte = spec.config.compute_ns_per_byte;

  std::vector<RunReport> rows;
  for (uint64_t budget : budgets) {
    ExecutionConfig config = spec.config;
    config.budget_bytes = budget;
    for (const auto& s : spec.strategies) {
      switch (spec.mode) {
        case RunMode::kReal:
          rows.push_back(RunStrategyOnStore(manifest, s, *store, config));
          break;
        case RunMode::kSimulate:
          rows.push_back(SimulatedReport(manifest, s, config, cost));
          break;
        case RunMode::kAnalytic:
          rows.push_back(AnalyticReport(manifest, s, config, cost));
          break;
      }
    }
  }
  return rows;
}

ModelPaths PathsInDirectory(const std::filesystem::path& dir) {
  return {dir / "model.manifest", dir / "model.blob"};
}

std::filesystem::path ScratchDirectory() {
  if (const char* env = std::getenv("FLEXOFFLOAD_TMPDIR"); env && *env) {
    return std::filesystem::path(env);
  }
  return std::filesystem::temp_directory_path() / "flexoffload";
}

std::string DescribeManifest(const ModelManifest& m) {
  std::ostringstream out;
  out << "layers: " << m.n_layers << "\n"
      << "total bytes: " << m.total_bytes << " (decoding " << m.decoding_bytes()
      << ", embeddings " << m.embedding_bytes() << ")\n"
      << "alignment: " << m.alignment << "\n";
  if (!m.layers.empty()) {
    const auto& l = m.layers.front();
    out << "per-layer bytes: " << l.bytes() << "\n";
    for (const auto& t : l.tensors) {
      out << "  " << RoleName(t.role) << ": " << t.size_bytes << "\n";
    }
    uint64_t attn = m.role_bytes(TensorRole::kAttnQ);
    uint64_t ffn = m.role_bytes(TensorRole::kFfnUp);
    if (attn > 0) {
      out << "attn:ffn tensor ratio: 1:" << static_cast<double>(ffn) / attn << "\n";
    }
  }
  return out.str();
}

std::string DescribePlan(const PreservationPlan& plan, const ModelManifest& m) {
  uint64_t max_attn = 0;
  for (TensorRole r : {TensorRole::kAttnQ, TensorRole::kAttnK, TensorRole::kAttnV,
                       TensorRole::kAttnO}) {
    max_attn = std::max(max_attn, m.role_bytes(r));
  }
  std::ostringstream out;
  out << "strategy: "
      << (plan.strategy ? std::string(StrategyName(*plan.strategy)) : "file") << "\n"
      << "budget bytes: " << plan.budget_bytes << "\n"
      << "embedding bytes: " << plan.embedding_bytes << "\n"
      << "locked bytes: " << plan.locked_bytes << "\n"
      << "locked tensors: " << plan.locked_tensor_count() << "\n"
      << "residual spread: " << ResidualSpread(plan) << " (attention tensor "
      << max_attn << ")\n"
      << "io bytes per token: " << IoBytesPerToken(plan) << "\n";
  return out.str();
}

}  // namespace flexoffload
