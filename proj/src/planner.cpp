// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/planner.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

#include "flexoffload/error.hpp"

namespace flexoffload {
namespace {

constexpr std::array<TensorRole, kFfnTensorsPerLayer> kFfnOrder = {
    TensorRole::kFfnUp, TensorRole::kFfnGate, TensorRole::kFfnDown};

// Accumulates locks against a byte budget. Every lock is whole-tensor.
class Locker {
 public:
  Locker(const ModelManifest& manifest, uint64_t budget, PlanStrategy strategy)
      : manifest_(manifest) {
    plan_.strategy = strategy;
    plan_.budget_bytes = budget;
    plan_.embedding_bytes = manifest.embedding_bytes();
    if (budget < plan_.embedding_bytes) {
      throw InsufficientBudgetError(
          "budget " + std::to_string(budget) +
          " bytes is below the always-resident embedding bytes " +
          std::to_string(plan_.embedding_bytes));
    }
    remaining_ = budget - plan_.embedding_bytes;
    plan_.locked.resize(manifest.layers.size());
  }

  uint64_t remaining() const { return remaining_; }

  bool TryLock(size_t layer, TensorRole role) {
    const TensorSpec* t = manifest_.layers[layer].find(role);
    if (t == nullptr || t->size_bytes > remaining_) return false;
    remaining_ -= t->size_bytes;
    plan_.locked_bytes += t->size_bytes;
    plan_.locked[layer].push_back(role);
    return true;
  }

  /// One role across layers 0..N-1; false once a tensor does not fit.
  bool Round(TensorRole role) {
    for (size_t i = 0; i < manifest_.layers.size(); ++i) {
      if (!TryLock(i, role)) return false;
    }
    return true;
  }

  PreservationPlan Finish() {
    plan_.residual_bytes_per_layer.clear();
    for (size_t i = 0; i < manifest_.layers.size(); ++i) {
      uint64_t locked = 0;
      for (TensorRole role : plan_.locked[i]) {
        locked += manifest_.layers[i].find(role)->size_bytes;
      }
      plan_.residual_bytes_per_layer.push_back(manifest_.layers[i].bytes() -
                                               locked);
    }
    return std::move(plan_);
  }

 private:
  const ModelManifest& manifest_;
  PreservationPlan plan_;
  uint64_t remaining_ = 0;
};

void PlanFlex(const ModelManifest& m, Locker& locker) {
  const uint64_t n = static_cast<uint64_t>(m.n_layers);
  const uint64_t up = m.role_bytes(TensorRole::kFfnUp);
  const uint64_t gate = m.role_bytes(TensorRole::kFfnGate);
  const uint64_t down = m.role_bytes(TensorRole::kFfnDown);
  const auto attn_order = AttentionPriority(m);
  const uint64_t half_attn =
      m.role_bytes(attn_order[0]) + m.role_bytes(attn_order[1]);

  const uint64_t budget = locker.remaining();
  int ffn_per_layer = 0;
  if (budget >= n * (up + gate + down) + n * half_attn) {
    ffn_per_layer = 3;
  } else if (budget >= n * (up + gate)) {
    ffn_per_layer = 2;
  } else if (budget >= n * up) {
    ffn_per_layer = 1;
  }
  for (int r = 0; r < ffn_per_layer; ++r) locker.Round(kFfnOrder[static_cast<size_t>(r)]);

  // Attention fill is terminal: leftover budget never buys more FFN tensors.
  for (TensorRole role : attn_order) {
    if (!locker.Round(role)) break;
  }
}

void PlanLayerOrder(const ModelManifest& m, Locker& locker) {
  for (size_t i = 0; i < m.layers.size(); ++i) {
    for (const auto& t : m.layers[i].tensors) {
      if (!locker.TryLock(i, t.role)) return;
    }
  }
}

void PlanRounds(const std::vector<TensorRole>& roles, Locker& locker) {
  for (TensorRole role : roles) {
    if (!locker.Round(role)) return;
  }
}

}  // namespace

std::string_view StrategyName(PlanStrategy strategy) {
  switch (strategy) {
    case PlanStrategy::kFlex: return "flex";
    case PlanStrategy::kLayerOrder: return "layer-order";
    case PlanStrategy::kAttnFirst: return "attn-first";
    case PlanStrategy::kFfnFirst: return "ffn-first";
    case PlanStrategy::kNone: return "none";
  }
  return "unknown";
}

std::optional<PlanStrategy> ParseStrategy(std::string_view name) {
  for (PlanStrategy s : {PlanStrategy::kFlex, PlanStrategy::kLayerOrder,
                         PlanStrategy::kAttnFirst, PlanStrategy::kFfnFirst,
                         PlanStrategy::kNone}) {
    if (StrategyName(s) == name) return s;
  }
  return std::nullopt;
}

bool PreservationPlan::is_locked(int layer, TensorRole role) const {
  if (layer < 0 || static_cast<size_t>(layer) >= locked.size()) return false;
  const auto& roles = locked[static_cast<size_t>(layer)];
  return std::find(roles.begin(), roles.end(), role) != roles.end();
}

size_t PreservationPlan::locked_tensor_count() const {
  size_t n = 0;
  for (const auto& roles : locked) n += roles.size();
  return n;
}

std::vector<TensorRole> AttentionPriority(const ModelManifest& manifest) {
  std::vector<TensorRole> order = {TensorRole::kAttnK, TensorRole::kAttnV,
                                   TensorRole::kAttnQ, TensorRole::kAttnO};
  std::stable_sort(order.begin(), order.end(), [&](TensorRole a, TensorRole b) {
    return manifest.role_bytes(a) < manifest.role_bytes(b);
  });
  return order;
}

PreservationPlan Plan(const ModelManifest& manifest, uint64_t budget_bytes,
                      PlanStrategy strategy) {
  if (manifest.layers.empty()) {
    throw InvalidParameterError("cannot plan a manifest without layers");
  }
  Locker locker(manifest, budget_bytes, strategy);
  const auto attn = AttentionPriority(manifest);
  const std::vector<TensorRole> ffn(kFfnOrder.begin(), kFfnOrder.end());

  switch (strategy) {
    case PlanStrategy::kFlex:
      PlanFlex(manifest, locker);
      break;
    case PlanStrategy::kLayerOrder:
      PlanLayerOrder(manifest, locker);
      break;
    case PlanStrategy::kAttnFirst: {
      auto roles = attn;
      roles.insert(roles.end(), ffn.begin(), ffn.end());
      PlanRounds(roles, locker);
      break;
    }
    case PlanStrategy::kFfnFirst: {
      auto roles = ffn;
      roles.insert(roles.end(), attn.begin(), attn.end());
      PlanRounds(roles, locker);
      break;
    }
    case PlanStrategy::kNone:
      break;
  }
  return locker.Finish();
}

uint64_t ResidualSpread(const PreservationPlan& plan) {
  if (plan.residual_bytes_per_layer.empty()) return 0;
  auto [lo, hi] = std::minmax_element(plan.residual_bytes_per_layer.begin(),
                                      plan.residual_bytes_per_layer.end());
  return *hi - *lo;
}

uint64_t IoBytesPerToken(const PreservationPlan& plan) {
  uint64_t sum = 0;
  for (uint64_t r : plan.residual_bytes_per_layer) sum += r;
  return sum;
}

void CheckPlanMatchesManifest(const PreservationPlan& plan,
                              const ModelManifest& manifest) {
  if (plan.locked.size() != manifest.layers.size() ||
      plan.residual_bytes_per_layer.size() != manifest.layers.size()) {
    throw UsageError("plan covers " + std::to_string(plan.locked.size()) +
                     " layers but manifest has " +
                     std::to_string(manifest.layers.size()));
  }
  uint64_t locked_total = 0;
  for (size_t i = 0; i < manifest.layers.size(); ++i) {
    uint64_t locked = 0;
    for (TensorRole role : plan.locked[i]) {
      const TensorSpec* t = manifest.layers[i].find(role);
      if (t == nullptr) {
        throw UsageError("plan locks " + std::string(RoleName(role)) +
                         " in layer " + std::to_string(i) +
                         " which the manifest lacks");
      }
      locked += t->size_bytes;
    }
    if (manifest.layers[i].bytes() - locked != plan.residual_bytes_per_layer[i]) {
      throw UsageError("plan residual for layer " + std::to_string(i) +
                       " disagrees with the manifest");
    }
    locked_total += locked;
  }
  if (locked_total != plan.locked_bytes) {
    throw UsageError("plan locked_bytes disagrees with the manifest");
  }
}

std::string SerializePlan(const PreservationPlan& plan) {
  std::ostringstream out;
  out << "FLEXPLAN\t1\t" << plan.budget_bytes << '\t' << plan.locked_bytes
      << '\n';
  for (size_t i = 0; i < plan.locked.size(); ++i) {
    for (TensorRole role : plan.locked[i]) {
      out << "LOCK\t" << i << '\t' << RoleName(role) << '\n';
    }
  }
  return out.str();
}

PreservationPlan ParsePlan(std::string_view text, const ModelManifest& manifest) {
  auto fail = [](const std::string& msg) -> void {
    throw InvalidParameterError("plan: " + msg);
  };
  auto to_u64 = [&](std::string_view s) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      fail("bad number '" + std::string(s) + "'");
    }
    return v;
  };

  PreservationPlan plan;
  plan.embedding_bytes = manifest.embedding_bytes();
  plan.locked.resize(manifest.layers.size());
  bool header = false;
  uint64_t declared_locked = 0;

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest = line;
    while (true) {
      size_t tab = rest.find('\t');
      f.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (!header) {
      if (f.size() != 4 || f[0] != "FLEXPLAN" || f[1] != "1") {
        fail("missing FLEXPLAN header");
      }
      plan.budget_bytes = to_u64(f[2]);
      declared_locked = to_u64(f[3]);
      header = true;
      continue;
    }
    if (f.size() != 3 || f[0] != "LOCK") fail("expected LOCK record");
    uint64_t layer = to_u64(f[1]);
    auto role = ParseRole(f[2]);
    if (layer >= manifest.layers.size()) fail("layer out of range");
    if (!role || manifest.layers[layer].find(*role) == nullptr) {
      fail("unknown role '" + std::string(f[2]) + "'");
    }
    if (plan.is_locked(static_cast<int>(layer), *role)) fail("duplicate LOCK");
    plan.locked[layer].push_back(*role);
    plan.locked_bytes += manifest.layers[layer].find(*role)->size_bytes;
  }
  if (!header) fail("empty input");
  if (plan.locked_bytes != declared_locked) {
    fail("header locked_bytes " + std::to_string(declared_locked) +
         " != sum of LOCK records " + std::to_string(plan.locked_bytes));
  }
  for (size_t i = 0; i < manifest.layers.size(); ++i) {
    uint64_t locked = 0;
    for (TensorRole role : plan.locked[i]) {
      locked += manifest.layers[i].find(role)->size_bytes;
    }
    plan.residual_bytes_per_layer.push_back(manifest.layers[i].bytes() - locked);
  }
  return plan;
}

}  // namespace flexoffload
