// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/executor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "flexoffload/error.hpp"
#include "flexoffload/pattern.hpp"

namespace flexoffload {
namespace {

using Clock = std::chrono::steady_clock;

int64_t NsSince(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start)
      .count();
}

std::atomic<uint64_t> g_touch_sink{0};

class MemoryTracker {
 public:
  void Add(uint64_t bytes) {
    uint64_t now = current_.fetch_add(bytes) + bytes;
    uint64_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  void Sub(uint64_t bytes) { current_.fetch_sub(bytes); }
  uint64_t peak() const { return peak_.load(); }

 private:
  std::atomic<uint64_t> current_{0};
  std::atomic<uint64_t> peak_{0};
};

// Runs fn(0..n-1) with shard 0 on the calling thread.
class WorkerPool {
 public:
  explicit WorkerPool(int threads) : size_(std::max(threads, 1)) {
    for (int i = 1; i < size_; ++i) {
      threads_.emplace_back([this, i] { Loop(i); });
    }
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return size_; }

  void Run(const std::function<void(int)>& fn) {
    if (size_ == 1) {
      fn(0);
      return;
    }
    {
      std::lock_guard lock(mu_);
      job_ = &fn;
      error_ = nullptr;
      pending_ = size_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    std::exception_ptr mine;
    try {
      fn(0);
    } catch (...) {
      mine = std::current_exception();
    }
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] { return pending_ == 0; });
    if (mine) std::rethrow_exception(mine);
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void Loop(int index) {
    uint64_t seen = 0;
    while (true) {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      const auto* job = job_;
      lock.unlock();
      std::exception_ptr err;
      try {
        (*job)(index);
      } catch (...) {
        err = std::current_exception();
      }
      lock.lock();
      if (err && !error_) error_ = err;
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  int size_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* job_ = nullptr;
  uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

void CheckConfig(const ModelManifest& manifest, const ExecutionConfig& config) {
  if (config.window_k < 1 || config.window_k > manifest.n_layers) {
    throw UsageError("window_k must be in [1, " +
                     std::to_string(manifest.n_layers) + "], got " +
                     std::to_string(config.window_k));
  }
  if (config.io_threads < 1 || config.compute_threads < 1) {
    throw UsageError("io_threads and compute_threads must be >= 1");
  }
  if (config.tokens < 1) throw UsageError("tokens must be >= 1");
  if (!(config.compute_ns_per_byte >= 0.0)) {
    throw UsageError("compute_ns_per_byte must be non-negative");
  }
  if (config.page_bytes == 0) throw UsageError("page_bytes must be positive");
}

PreservationPlan EmptyPlan(const ModelManifest& manifest, uint64_t budget) {
  PreservationPlan plan;
  plan.strategy = PlanStrategy::kNone;
  plan.budget_bytes = budget;
  plan.embedding_bytes = manifest.embedding_bytes();
  plan.locked.resize(manifest.layers.size());
  for (const auto& l : manifest.layers) {
    plan.residual_bytes_per_layer.push_back(l.bytes());
  }
  return plan;
}

// State shared by all schedules: resident tensors, the compute kernel,
// memory accounting and the report under construction.
class Engine {
 public:
  Engine(const ModelManifest& manifest, const PreservationPlan& plan,
         TensorReader& store, const ExecutionConfig& config,
         ExecutionObserver* observer)
      : manifest_(manifest),
        plan_(plan),
        store_(store),
        config_(config),
        observer_(observer),
        compute_pool_(config.compute_threads) {
    CheckConfig(manifest, config);
    CheckPlanMatchesManifest(plan, manifest);
    const size_t n = manifest.layers.size();
    pending_.resize(n);
    pending_pos_.resize(n);
    resident_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& tensors = manifest.layers[i].tensors;
      pending_pos_[i].assign(tensors.size(), -1);
      resident_[i].resize(tensors.size());
      for (size_t t = 0; t < tensors.size(); ++t) {
        if (!plan.is_locked(static_cast<int>(i), tensors[t].role)) {
          pending_pos_[i][t] = static_cast<int>(pending_[i].size());
          pending_[i].push_back(static_cast<int>(t));
        }
      }
    }
    report_.strategy = plan.strategy ? std::string(StrategyName(*plan.strategy))
                                     : std::string(StrategyName(config.strategy));
    report_.budget_bytes = config.budget_bytes;
    report_.window_k = config.window_k;
    report_.io_threads = config.io_threads;
    report_.compute_threads = config.compute_threads;
    report_.read_mode = store.mode();
    report_.tokens = config.tokens;
    report_.per_layer.resize(n);
  }

  int n_layers() const { return manifest_.n_layers; }
  const std::vector<int>& pending(int layer) const {
    return pending_[static_cast<size_t>(layer)];
  }

  // Allocates `slots` sets of buffers, one buffer per pending position.
  void AllocateSlots(int slots) {
    size_t positions = 0;
    for (const auto& p : pending_) positions = std::max(positions, p.size());
    std::vector<uint64_t> capacity(positions, 0);
    for (size_t i = 0; i < pending_.size(); ++i) {
      for (size_t j = 0; j < pending_[i].size(); ++j) {
        const auto& t = manifest_.layers[i].tensors[static_cast<size_t>(pending_[i][j])];
        capacity[j] = std::max(capacity[j], store_.RequiredCapacity(t));
      }
    }
    slots_.clear();
    for (int s = 0; s < slots; ++s) {
      std::vector<AlignedBuffer> bufs;
      for (uint64_t cap : capacity) {
        bufs.emplace_back(static_cast<size_t>(std::max<uint64_t>(cap, 1)),
                          static_cast<size_t>(store_.io_alignment()));
      }
      slots_.push_back(std::move(bufs));
    }
  }

  std::span<std::byte> SlotBuffer(int slot, int position) {
    return slots_[static_cast<size_t>(slot)][static_cast<size_t>(position)].span();
  }

  void LoadResident() {
    auto start = Clock::now();
    auto load = [&](const TensorSpec& t) {
      AlignedBuffer buf(static_cast<size_t>(std::max<uint64_t>(store_.RequiredCapacity(t), 1)),
                        static_cast<size_t>(store_.io_alignment()));
      if (t.size_bytes > 0) store_.ReadTensor(t, buf.span());
      tracker_.Add(t.size_bytes);
      if (config_.verify_payloads) Verify(t, buf.span().first(t.size_bytes), -1);
      return buf;
    };
    for (const auto& e : manifest_.embeddings) embeddings_.push_back(load(e));
    for (size_t i = 0; i < manifest_.layers.size(); ++i) {
      for (size_t t = 0; t < manifest_.layers[i].tensors.size(); ++t) {
        if (pending_pos_[i][t] < 0) {
          resident_[i][t] = load(manifest_.layers[i].tensors[t]);
        }
      }
    }
    report_.warmup_ns = NsSince(start);
  }

  void Verify(const TensorSpec& t, std::span<const std::byte> data, int token) {
    size_t bad = FindPatternMismatch(PatternKey(config_.payload_seed, t.name), 0, data);
    if (bad != data.size()) {
      throw CorruptionError("payload mismatch in tensor " + t.name + " at byte " +
                            std::to_string(bad) +
                            (token >= 0 ? " (token " + std::to_string(token) + ")"
                                        : std::string(" (startup load)")));
    }
  }

  // Synthetic kernel: reads every byte of the layer, then paces to
  // compute_ns_per_byte * layer bytes of wall time.
  void ComputeLayer(int token, int layer, int slot) {
    auto start = Clock::now();
    const auto& spec = manifest_.layers[static_cast<size_t>(layer)];
    const auto deadline =
        start + std::chrono::nanoseconds(static_cast<int64_t>(
                    static_cast<double>(spec.bytes()) * config_.compute_ns_per_byte));

    struct Piece {
      const TensorSpec* tensor;
      std::span<const std::byte> data;
      bool prefetched;
    };
    std::vector<Piece> pieces;
    for (size_t t = 0; t < spec.tensors.size(); ++t) {
      const TensorSpec& ts = spec.tensors[t];
      int pos = pending_pos_[static_cast<size_t>(layer)][t];
      std::span<const std::byte> data =
          pos < 0 ? resident_[static_cast<size_t>(layer)][t].span()
                  : std::span<const std::byte>(SlotBuffer(slot, pos));
      pieces.push_back({&ts, data.first(ts.size_bytes), pos >= 0});
    }

    if (observer_) observer_->OnComputeStart(token, layer);
    const int shards = compute_pool_.size();
    compute_pool_.Run([&](int shard) {
      uint64_t acc = 0;
      for (size_t i = static_cast<size_t>(shard); i < pieces.size();
           i += static_cast<size_t>(shards)) {
        const Piece& p = pieces[i];
        if (config_.verify_payloads && p.prefetched) {
          Verify(*p.tensor, p.data, token);
          continue;
        }
        size_t k = 0;
        for (; k + 8 <= p.data.size(); k += 8) {
          uint64_t w;
          std::memcpy(&w, p.data.data() + k, 8);
          acc += w;
        }
        for (; k < p.data.size(); ++k) acc += static_cast<uint64_t>(p.data[k]);
      }
      g_touch_sink.fetch_add(acc, std::memory_order_relaxed);
    });
    std::this_thread::sleep_until(deadline);
    report_.per_layer[static_cast<size_t>(layer)].compute_ns += NsSince(start);
  }

  void ReleaseLayer(int layer) {
    tracker_.Sub(plan_.residual_bytes_per_layer[static_cast<size_t>(layer)]);
  }

  RunReport Pipeline(int window, bool lookahead_accounting);
  RunReport MmapLike();

 private:
  RunReport Finish(Clock::time_point start) {
    report_.wall_time_s = static_cast<double>(NsSince(start)) * 1e-9;
    report_.throughput_tps =
        report_.wall_time_s > 0 ? report_.tokens / report_.wall_time_s : 0.0;
    report_.peak_tracked_bytes = tracker_.peak();
    return std::move(report_);
  }

  const ModelManifest& manifest_;
  const PreservationPlan& plan_;
  TensorReader& store_;
  const ExecutionConfig& config_;
  ExecutionObserver* observer_;
  WorkerPool compute_pool_;
  MemoryTracker tracker_;
  RunReport report_;

  std::vector<std::vector<int>> pending_;      // layer -> tensor indices to read
  std::vector<std::vector<int>> pending_pos_;  // layer -> tensor -> position or -1
  std::vector<std::vector<AlignedBuffer>> resident_;
  std::vector<AlignedBuffer> embeddings_;
  std::vector<std::vector<AlignedBuffer>> slots_;
};

RunReport Engine::Pipeline(int window, bool lookahead_accounting) {
  LoadResident();
  AllocateSlots(window);

  const int n = n_layers();
  const int64_t total = static_cast<int64_t>(config_.tokens) * n;

  std::mutex mu;
  std::condition_variable window_cv;
  std::condition_variable loaded_cv;
  int64_t completed = 0;  // layers whose compute finished, in order
  int64_t cursor_layer = 0;
  size_t cursor_pos = 0;
  std::vector<size_t> loaded(static_cast<size_t>(window), 0);
  bool abort = false;
  std::exception_ptr failure;
  int64_t mem_stall = 0;
  uint64_t io_bytes = 0;
  uint64_t io_requests = 0;

  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(mu);
      if (!failure) failure = e;
      abort = true;
    }
    window_cv.notify_all();
    loaded_cv.notify_all();
  };

  auto io_worker = [&] {
    try {
      while (true) {
        std::unique_lock lock(mu);
        while (cursor_layer < total &&
               cursor_pos >= pending(static_cast<int>(cursor_layer % n)).size()) {
          ++cursor_layer;
          cursor_pos = 0;
        }
        if (abort || cursor_layer >= total) return;
        const int64_t g = cursor_layer;
        const int pos = static_cast<int>(cursor_pos++);
        if (g >= completed + window) {
          auto wait_start = Clock::now();
          window_cv.wait(lock, [&] { return abort || g < completed + window; });
          if (lookahead_accounting) mem_stall += NsSince(wait_start);
        }
        if (abort) return;
        lock.unlock();

        const int layer = static_cast<int>(g % n);
        const int token = static_cast<int>(g / n);
        const int slot = static_cast<int>(g % window);
        const int tensor_index = pending(layer)[static_cast<size_t>(pos)];
        const TensorSpec& t =
            manifest_.layers[static_cast<size_t>(layer)].tensors[static_cast<size_t>(tensor_index)];
        tracker_.Add(t.size_bytes);
        if (observer_) observer_->OnIoStart(token, layer, tensor_index);
        store_.ReadTensor(t, SlotBuffer(slot, pos));
        if (observer_) observer_->OnIoEnd(token, layer, tensor_index);

        lock.lock();
        io_bytes += t.size_bytes;
        ++io_requests;
        ++loaded[static_cast<size_t>(slot)];
        lock.unlock();
        loaded_cv.notify_all();
      }
    } catch (...) {
      fail(std::current_exception());
    }
  };

  const auto start = Clock::now();
  std::vector<std::thread> workers;
  for (int i = 0; i < config_.io_threads; ++i) workers.emplace_back(io_worker);

  int64_t io_stall = 0;
  for (int64_t g = 0; g < total; ++g) {
    const int layer = static_cast<int>(g % n);
    const int token = static_cast<int>(g / n);
    const int slot = static_cast<int>(g % window);
    const size_t expected = pending(layer).size();
    {
      std::unique_lock lock(mu);
      if (!abort && loaded[static_cast<size_t>(slot)] < expected) {
        auto wait_start = Clock::now();
        loaded_cv.wait(lock, [&] {
          return abort || loaded[static_cast<size_t>(slot)] >= expected;
        });
        int64_t waited = NsSince(wait_start);
        io_stall += waited;
        report_.per_layer[static_cast<size_t>(layer)].io_wait_ns += waited;
      }
      if (abort) break;
      if (loaded[static_cast<size_t>(slot)] != expected) {
        lock.unlock();
        fail(std::make_exception_ptr(std::logic_error(
            "layer " + std::to_string(layer) + " computed before its loads finished")));
        break;
      }
    }
    try {
      ComputeLayer(token, layer, slot);
      if (observer_) observer_->OnComputeEnd(token, layer);
    } catch (...) {
      fail(std::current_exception());
      break;
    }
    ReleaseLayer(layer);
    {
      std::lock_guard lock(mu);
      loaded[static_cast<size_t>(slot)] = 0;
      ++completed;
    }
    window_cv.notify_all();
  }

  {
    std::lock_guard lock(mu);
    abort = true;
  }
  window_cv.notify_all();
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);

  report_.io_stall_ns = io_stall;
  report_.mem_stall_ns = mem_stall;
  report_.io_bytes_total = io_bytes;
  report_.io_requests = io_requests;
  return Finish(start);
}

RunReport Engine::MmapLike() {
  LoadResident();
  AllocateSlots(1);
  const uint64_t align = store_.io_alignment();
  const uint64_t page = config_.page_bytes;
  if (store_.mode() == ReadMode::kBypass && page % align != 0) {
    throw UsageError("page size " + std::to_string(page) +
                     " must be a multiple of the direct-IO alignment " +
                     std::to_string(align));
  }

  const int n = n_layers();
  const auto start = Clock::now();
  for (int token = 0; token < config_.tokens; ++token) {
    for (int layer = 0; layer < n; ++layer) {
      auto io_start = Clock::now();
      const auto& spec = manifest_.layers[static_cast<size_t>(layer)];
      for (size_t j = 0; j < pending(layer).size(); ++j) {
        const int tensor_index = pending(layer)[j];
        const TensorSpec& t = spec.tensors[static_cast<size_t>(tensor_index)];
        auto buf = SlotBuffer(0, static_cast<int>(j));
        tracker_.Add(t.size_bytes);
        if (observer_) observer_->OnIoStart(token, layer, tensor_index);
        for (uint64_t off = 0; off < t.size_bytes; off += page) {
          uint64_t len = std::min(page, t.size_bytes - off);
          if (store_.mode() == ReadMode::kBypass) len = RoundUp(len, align);
          store_.ReadRange(t.blob_offset + off, buf.subspan(off, len));
          ++report_.io_requests;
        }
        if (observer_) observer_->OnIoEnd(token, layer, tensor_index);
        report_.io_bytes_total += t.size_bytes;
      }
      int64_t waited = NsSince(io_start);
      report_.io_stall_ns += waited;
      report_.per_layer[static_cast<size_t>(layer)].io_wait_ns += waited;
      ComputeLayer(token, layer, 0);
      if (observer_) observer_->OnComputeEnd(token, layer);
      ReleaseLayer(layer);
    }
  }
  return Finish(start);
}

}  // namespace

RunReport Run(const ModelManifest& manifest, const PreservationPlan& plan,
              TensorReader& store, const ExecutionConfig& config,
              ExecutionObserver* observer) {
  Engine engine(manifest, plan, store, config, observer);
  return engine.Pipeline(config.window_k, true);
}

RunReport RunSync(const ModelManifest& manifest, const PreservationPlan& plan,
                  TensorReader& store, const ExecutionConfig& config,
                  ExecutionObserver* observer) {
  // A one-layer inclusive window admits no lookahead: reads of layer i+1
  // start only after layer i's compute releases its slot.
  ExecutionConfig sync = config;
  sync.window_k = 1;  // the configured window does not apply
  Engine engine(manifest, plan, store, sync, observer);
  RunReport report = engine.Pipeline(1, false);
  report.window_k = 0;
  return report;
}

RunReport RunMmapLike(const ModelManifest& manifest, TensorReader& store,
                      const ExecutionConfig& config, ExecutionObserver* observer) {
  PreservationPlan plan = EmptyPlan(manifest, config.budget_bytes);
  ExecutionConfig single = config;
  single.io_threads = 1;
  single.window_k = 1;
  Engine engine(manifest, plan, store, single, observer);
  RunReport report = engine.MmapLike();
  report.strategy = "mmap";
  report.window_k = 0;
  return report;
}

RunReport RunStrategyOnStore(const ModelManifest& manifest,
                             const RunStrategy& strategy, TensorReader& store,
                             const ExecutionConfig& config,
                             ExecutionObserver* observer) {
  RunReport report;
  if (strategy.schedule == Schedule::kMmapLike) {
    report = RunMmapLike(manifest, store, config, observer);
  } else {
    PreservationPlan plan = Plan(manifest, config.budget_bytes, strategy.plan);
    report = strategy.schedule == Schedule::kSync
                 ? RunSync(manifest, plan, store, config, observer)
                 : Run(manifest, plan, store, config, observer);
  }
  report.strategy = strategy.name;
  return report;
}

}  // namespace flexoffload
