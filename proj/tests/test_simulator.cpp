// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "flexoffload/error.hpp"
#include "flexoffload/executor.hpp"
#include "flexoffload/perf_model.hpp"
#include "flexoffload/planner.hpp"
#include "support/test_support.hpp"

using namespace flexoffload;
using flexoffload::testing::CheckingObserver;
using flexoffload::testing::ExpectedReads;
using flexoffload::testing::OnDiskModel;
using flexoffload::testing::Replay;

namespace {

ManifestParams MiB(int layers) {
  ManifestParams p;
  p.n_layers = layers;
  p.attn_tensor_bytes = 1 << 20;
  p.ffn_tensor_bytes = 3 << 20;
  p.embed_bytes = 1 << 20;
  p.alignment = 4096;
  return p;
}

// compute_ns_per_byte that makes per-token compute `ratio` times IO time.
double ComputeFor(const ModelManifest& m, const PreservationPlan& plan,
                  const CostModel& cost, double ratio) {
  double io_ns = IoTimeSeconds(plan, cost) * 1e9;
  return ratio * io_ns / static_cast<double>(m.decoding_bytes());
}

ExecutionConfig Cfg(int window, int tokens) {
  ExecutionConfig c;
  c.window_k = window;
  c.tokens = tokens;
  return c;
}

}  // namespace

TEST_CASE("steady state matches the async closed form", "[simulator]") {
  auto m = GenerateManifest(MiB(8));
  CostModel cost;
  cost.io_bandwidth_bytes_per_s = 2e9;
  auto plan = Plan(m, m.total_bytes * 3 / 10, PlanStrategy::kFlex);
  for (double ratio : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    cost.compute_ns_per_byte = ComputeFor(m, plan, cost, ratio);
    auto cfg = Cfg(3, 6);
    cfg.compute_ns_per_byte = cost.compute_ns_per_byte;
    auto t = Simulate(m, plan, cfg, cost);
    double predicted = PredictAsync(plan, cost, m.decoding_bytes());
    INFO("ratio " << ratio);
    CHECK(t.steady_throughput_tps <= predicted * 1.0001);
    CHECK(t.steady_throughput_tps >= predicted * 0.98);

    SimOptions sync;
    sync.schedule = Schedule::kSync;
    auto s = Simulate(m, plan, cfg, cost, sync);
    CHECK(s.steady_throughput_tps ==
          Catch::Approx(PredictSync(plan, cost, m.decoding_bytes())).epsilon(0.01));
    CHECK(s.report.window_k == 0);
    CHECK(s.report.mem_stall_ns == 0);
  }
}

TEST_CASE("an unconstrained pipeline saturates bandwidth", "[simulator]") {
  auto m = GenerateManifest(MiB(6));
  auto plan = Plan(m, m.embedding_bytes(), PlanStrategy::kNone);
  for (int channels : {1, 2, 4}) {
    CostModel cost;
    cost.io_bandwidth_bytes_per_s = 1e9;
    cost.io_channels = channels;
    auto t = Simulate(m, plan, Cfg(6, 10), cost);
    double limit = cost.io_bandwidth_bytes_per_s / IoBytesPerToken(plan);
    INFO("channels " << channels);
    CHECK(t.report.throughput_tps <= limit * 1.0001);
    CHECK(t.report.throughput_tps >= limit * 0.95);
  }
}

TEST_CASE("layer order loses to flex when IO bound", "[simulator]") {
  auto m = GenerateManifest(MiB(8));
  CostModel cost;
  cost.io_bandwidth_bytes_per_s = 1e9;
  uint64_t budget = m.embedding_bytes() + 4 * m.layers[0].bytes();
  auto flex = Plan(m, budget, PlanStrategy::kFlex);
  auto lo = Plan(m, budget, PlanStrategy::kLayerOrder);
  REQUIRE(lo.locked_bytes == 4 * m.layers[0].bytes());
  REQUIRE(flex.locked_bytes == lo.locked_bytes);
  cost.compute_ns_per_byte = ComputeFor(m, flex, cost, 0.5);
  auto cfg = Cfg(3, 4);
  auto tf = Simulate(m, flex, cfg, cost);
  auto tl = Simulate(m, lo, cfg, cost);
  CHECK(tl.report.throughput_tps < tf.report.throughput_tps);
  CHECK(tl.report.mem_stall_ns > 0);
  CHECK(tl.report.io_stall_ns > 0);
  // IO stalls sit past the locked-to-unlocked boundary; flex spreads them
  const auto& per = tl.report.per_layer;
  for (int i = 0; i < 4; ++i) CHECK(per[i].io_wait_ns == 0);
  int64_t unlocked = 0;
  for (int i = 4; i < 8; ++i) unlocked += per[i].io_wait_ns;
  CHECK(unlocked == tl.report.io_stall_ns);
  CHECK(tf.report.io_stall_ns < tl.report.io_stall_ns);
}

TEST_CASE("timelines are causal, windowed and exactly once", "[simulator]") {
  auto m = GenerateManifest(MiB(6));
  CostModel cost;
  cost.io_bandwidth_bytes_per_s = 1e9;
  cost.per_tensor_io_overhead_ns = 20000;
  for (int seed = 0; seed < 200; ++seed) {
    PlanStrategy s = seed % 3 == 0   ? PlanStrategy::kFlex
                     : seed % 3 == 1 ? PlanStrategy::kLayerOrder
                                     : PlanStrategy::kNone;
    auto plan = Plan(m, m.total_bytes * (seed % 5) / 5 + m.embedding_bytes(), s);
    int window = 1 + seed % 6;
    cost.io_channels = 1 + seed % 4;
    cost.compute_ns_per_byte = 0.2 * (seed % 7);
    SimOptions opt;
    opt.schedule = seed % 4 == 0 ? Schedule::kSync : Schedule::kPrefetch;
    opt.max_io_jitter_ns = 2'000'000;
    opt.jitter_seed = static_cast<uint64_t>(seed);
    auto cfg = Cfg(window, 3);
    auto t = Simulate(m, plan, cfg, cost, opt);
    CheckingObserver obs(m, plan, opt.schedule == Schedule::kSync ? 1 : window);
    Replay(t, obs);
    INFO("seed " << seed);
    CHECK(obs.compute_before_load() == 0);
    CHECK(obs.order_violations() == 0);
    CHECK(obs.window_violations() == 0);
    CHECK(obs.ReadMultiset() == ExpectedReads(m, plan, 3));
    for (size_t i = 1; i < t.events.size(); ++i) {
      CHECK(t.events[i - 1].time_ns <= t.events[i].time_ns);
    }
    // compute busy time plus compute idle time is the whole run
    int64_t busy = 0;
    for (const auto& l : t.report.per_layer) busy += l.compute_ns;
    CHECK(busy + t.report.io_stall_ns ==
          static_cast<int64_t>(std::llround(t.report.wall_time_s * 1e9)));
  }
}

TEST_CASE("simulation is deterministic", "[simulator]") {
  auto m = GenerateManifest(MiB(4));
  auto plan = Plan(m, m.total_bytes / 2, PlanStrategy::kFlex);
  CostModel cost;
  cost.io_channels = 3;
  cost.compute_ns_per_byte = 0.3;
  SimOptions opt;
  opt.max_io_jitter_ns = 100000;
  opt.jitter_seed = 42;
  auto a = Simulate(m, plan, Cfg(2, 3), cost, opt);
  auto b = Simulate(m, plan, Cfg(2, 3), cost, opt);
  REQUIRE(a.events.size() == b.events.size());
  for (size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time_ns == b.events[i].time_ns);
    CHECK(a.events[i].tensor == b.events[i].tensor);
  }
  CHECK(a.report.throughput_tps == b.report.throughput_tps);
}

TEST_CASE("simulator and executor agree on work", "[simulator]") {
  auto p = MiB(5);
  p.attn_tensor_bytes = 8192;
  p.ffn_tensor_bytes = 3 * 8192;
  p.embed_bytes = 4096;
  OnDiskModel model(p, 21);
  const auto& m = model.manifest;
  auto store = BlobStore::Open(model.blob, m, ReadMode::kCached);
  CostModel cost;
  cost.compute_ns_per_byte = 0.5;
  for (PlanStrategy s : {PlanStrategy::kNone, PlanStrategy::kFlex, PlanStrategy::kFfnFirst}) {
    auto plan = Plan(m, m.total_bytes / 2, s);
    auto cfg = Cfg(3, 2);
    cfg.io_threads = 2;
    CheckingObserver real_obs(m, plan, 3);
    auto real = Run(m, plan, *store, cfg, &real_obs);
    auto sim = Simulate(m, plan, cfg, cost);
    CheckingObserver sim_obs(m, plan, 3);
    Replay(sim, sim_obs);
    CHECK(real.io_bytes_total == sim.report.io_bytes_total);
    CHECK(real.io_requests == sim.report.io_requests);
    CHECK(real_obs.ReadMultiset() == sim_obs.ReadMultiset());
    CHECK(real_obs.compute_before_load() == 0);
    CHECK(sim_obs.compute_before_load() == 0);
  }
}

TEST_CASE("mmap-like simulation issues page requests on one channel", "[simulator]") {
  auto m = GenerateManifest(MiB(2));
  auto plan = Plan(m, m.total_bytes, PlanStrategy::kNone);
  CostModel cost;
  cost.io_channels = 4;
  cost.per_tensor_io_overhead_ns = 1000;
  SimOptions opt;
  opt.schedule = Schedule::kMmapLike;
  auto cfg = Cfg(1, 1);
  auto t = Simulate(m, plan, cfg, cost, opt);
  CHECK(t.report.io_requests == m.decoding_bytes() / 4096);
  CHECK(t.report.io_threads == 1);
  CHECK(t.report.throughput_tps ==
        Catch::Approx(PredictMmapLike(m, cost, 4096)).epsilon(1e-6));
}

TEST_CASE("sweep properties", "[simulator]") {
  auto m = GenerateManifest(MiB(8));
  CostModel cost;
  cost.io_bandwidth_bytes_per_s = 1e9;
  cost.io_channels = 2;
  auto probe = Plan(m, m.embedding_bytes(), PlanStrategy::kNone);
  cost.compute_ns_per_byte = ComputeFor(m, probe, cost, 0.3);
  ExecutionConfig cfg = Cfg(3, 3);
  cfg.compute_ns_per_byte = cost.compute_ns_per_byte;

  std::vector<uint64_t> budgets;
  for (int i = 0; i <= 20; ++i) {
    budgets.push_back(m.embedding_bytes() + m.decoding_bytes() * i / 20);
  }
  auto strategies = AllRunStrategies();
  auto rows = Sweep(m, budgets, strategies, cfg, cost);
  REQUIRE(rows.size() == budgets.size() * strategies.size());

  double prev = 0;
  for (const auto& r : rows) {
    if (r.strategy.name != "flex") continue;
    CHECK(r.simulated.throughput_tps >= prev);
    prev = r.simulated.throughput_tps;
  }
  // lowest budget: every prefetch strategy runs the same empty plan
  std::vector<double> low, high;
  for (const auto& r : rows) {
    if (r.strategy.schedule != Schedule::kPrefetch) continue;
    if (r.budget_bytes == budgets.front()) low.push_back(r.simulated.throughput_tps);
    if (r.budget_bytes == budgets.back() && r.strategy.plan != PlanStrategy::kNone) {
      high.push_back(r.simulated.throughput_tps);
      CHECK(r.simulated.io_bytes_total == 0);
      CHECK(r.analytic_tps ==
            Catch::Approx(1e9 / (cost.compute_ns_per_byte * m.decoding_bytes())));
    }
  }
  for (double v : low) CHECK(v == low.front());
  for (double v : high) CHECK(v == Catch::Approx(high.front()));

  std::vector<uint64_t> unsorted = {budgets[3], budgets[1]};
  CHECK_THROWS_AS(Sweep(m, unsorted, strategies, cfg, cost), UsageError);
}

TEST_CASE("simulator rejects inconsistent inputs", "[simulator]") {
  auto m = GenerateManifest(MiB(3));
  auto other = GenerateManifest(MiB(4));
  CostModel cost;
  CHECK_THROWS_AS(Simulate(m, Plan(other, other.total_bytes, PlanStrategy::kFlex),
                           Cfg(2, 1), cost),
                  UsageError);
  CHECK_THROWS_AS(Simulate(m, Plan(m, m.total_bytes, PlanStrategy::kFlex), Cfg(4, 1), cost),
                  UsageError);
  cost.io_bandwidth_bytes_per_s = 0;
  CHECK_THROWS_AS(Simulate(m, Plan(m, m.embedding_bytes(), PlanStrategy::kNone), Cfg(2, 1),
                           cost),
                  UndefinedModelError);
}
