// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

// Shared test helpers: scratch directories, instrumented readers and an
// execution observer that checks ordering and window invariants online.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "flexoffload/error.hpp"
#include "flexoffload/executor.hpp"
#include "flexoffload/experiment.hpp"
#include "flexoffload/manifest.hpp"
#include "flexoffload/perf_model.hpp"
#include "flexoffload/storage.hpp"

namespace flexoffload::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = ScratchDirectory() /
            ("test-" + std::to_string(::getpid()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Manifest + blob written into a scratch directory.
struct OnDiskModel {
  TempDir dir;
  ModelManifest manifest;
  std::filesystem::path blob;
  uint64_t seed = 0;

  OnDiskModel(const ManifestParams& params, uint64_t seed_value)
      : manifest(GenerateManifest(params)), blob(dir / "model.blob"), seed(seed_value) {
    WriteBlob(manifest, blob, seed);
  }
};

/// The N=2 toy manifest (attn=1, ffn=3, no embeddings, alignment 1).
inline ModelManifest ToyManifest(int layers = 2) {
  ManifestParams p;
  p.n_layers = layers;
  p.attn_tensor_bytes = 1;
  p.ffn_tensor_bytes = 3;
  p.embed_bytes = 0;
  p.alignment = 1;
  return GenerateManifest(p);
}

/// Forwards to another reader, counting requests per tensor name and
/// optionally sleeping a random interval before each read.
class InstrumentedReader final : public TensorReader {
 public:
  explicit InstrumentedReader(TensorReader& inner, int64_t max_delay_us = 0,
                              uint64_t seed = 1)
      : inner_(inner), max_delay_us_(max_delay_us), rng_(seed) {}

  uint64_t ReadTensor(const TensorSpec& tensor, std::span<std::byte> dest) override {
    Delay();
    {
      std::lock_guard lock(mu_);
      ++tensor_reads_[tensor.name];
    }
    return inner_.ReadTensor(tensor, dest);
  }

  void ReadRange(uint64_t offset, std::span<std::byte> dest) override {
    Delay();
    {
      std::lock_guard lock(mu_);
      range_reads_.push_back({offset, dest.size()});
    }
    inner_.ReadRange(offset, dest);
  }

  uint64_t io_alignment() const override { return inner_.io_alignment(); }
  ReadMode mode() const override { return inner_.mode(); }

  std::map<std::string, int> tensor_reads() const {
    std::lock_guard lock(mu_);
    return tensor_reads_;
  }
  std::vector<std::pair<uint64_t, uint64_t>> range_reads() const {
    std::lock_guard lock(mu_);
    return range_reads_;
  }

 private:
  void Delay() {
    if (max_delay_us_ <= 0) return;
    int64_t us;
    {
      std::lock_guard lock(mu_);
      us = std::uniform_int_distribution<int64_t>(0, max_delay_us_)(rng_);
    }
    std::this_thread::sleep_for(std::chrono::microseconds(us));
  }

  TensorReader& inner_;
  int64_t max_delay_us_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, int> tensor_reads_;
  std::vector<std::pair<uint64_t, uint64_t>> range_reads_;
};

/// Fails a read of one named tensor on its n-th request.
class FailingReader final : public TensorReader {
 public:
  FailingReader(TensorReader& inner, std::string tensor, int fail_on)
      : inner_(inner), tensor_(std::move(tensor)), fail_on_(fail_on) {}

  uint64_t ReadTensor(const TensorSpec& t, std::span<std::byte> dest) override {
    if (t.name == tensor_ && ++seen_ == fail_on_) {
      throw StorageError("injected failure reading " + t.name);
    }
    return inner_.ReadTensor(t, dest);
  }
  void ReadRange(uint64_t offset, std::span<std::byte> dest) override {
    inner_.ReadRange(offset, dest);
  }
  uint64_t io_alignment() const override { return inner_.io_alignment(); }
  ReadMode mode() const override { return inner_.mode(); }

 private:
  TensorReader& inner_;
  std::string tensor_;
  int fail_on_;
  std::atomic<int> seen_{0};
};

/// Flips one byte of a named tensor after it is read.
class CorruptingReader final : public TensorReader {
 public:
  CorruptingReader(TensorReader& inner, std::string tensor)
      : inner_(inner), tensor_(std::move(tensor)) {}

  uint64_t ReadTensor(const TensorSpec& t, std::span<std::byte> dest) override {
    uint64_t n = inner_.ReadTensor(t, dest);
    if (t.name == tensor_ && n > 0) dest[n / 2] ^= std::byte{0x5a};
    return n;
  }
  void ReadRange(uint64_t offset, std::span<std::byte> dest) override {
    inner_.ReadRange(offset, dest);
  }
  uint64_t io_alignment() const override { return inner_.io_alignment(); }
  ReadMode mode() const override { return inner_.mode(); }

 private:
  TensorReader& inner_;
  std::string tensor_;
};

enum class Kind { kIoStart, kIoEnd, kComputeStart, kComputeEnd };

struct Event {
  Kind kind;
  int token;
  int layer;
  int tensor;
};

/// Records executor callbacks in a single global order and checks, as they
/// happen, that compute never starts before every pending read of its layer
/// has ended and that reads never run window_k or more layers ahead of the
/// oldest unfinished layer.
class CheckingObserver final : public ExecutionObserver {
 public:
  CheckingObserver(const ModelManifest& manifest, const PreservationPlan& plan,
                   int window)
      : n_(manifest.n_layers), window_(window) {
    for (const auto& layer : manifest.layers) {
      int count = 0;
      for (const auto& t : layer.tensors) {
        if (!plan.is_locked(layer.index, t.role)) ++count;
      }
      expected_.push_back(count);
    }
  }

  void OnIoStart(int token, int layer, int tensor) override {
    std::lock_guard lock(mu_);
    events_.push_back({Kind::kIoStart, token, layer, tensor});
    const int64_t g = static_cast<int64_t>(token) * n_ + layer;
    if (g < completed_ || g >= completed_ + window_) ++window_violations_;
    live_.insert(g);
    if (!live_.empty() && *live_.rbegin() - *live_.begin() >= window_) {
      ++window_violations_;
    }
  }
  void OnIoEnd(int token, int layer, int tensor) override {
    std::lock_guard lock(mu_);
    events_.push_back({Kind::kIoEnd, token, layer, tensor});
    ++ended_[{token, layer}];
  }
  void OnComputeStart(int token, int layer) override {
    std::lock_guard lock(mu_);
    events_.push_back({Kind::kComputeStart, token, layer, -1});
    const int64_t g = static_cast<int64_t>(token) * n_ + layer;
    if (g != completed_) ++order_violations_;
    if (ended_[{token, layer}] != expected_[static_cast<size_t>(layer)]) {
      ++compute_before_load_;
    }
  }
  void OnComputeEnd(int token, int layer) override {
    std::lock_guard lock(mu_);
    events_.push_back({Kind::kComputeEnd, token, layer, -1});
    live_.erase(static_cast<int64_t>(token) * n_ + layer);
    ++completed_;
  }

  int compute_before_load() const { return compute_before_load_; }
  int order_violations() const { return order_violations_; }
  int window_violations() const { return window_violations_; }
  int64_t completed() const { return completed_; }
  const std::vector<Event>& events() const { return events_; }

  /// Multiset of (token, layer, tensor) reads.
  std::map<std::tuple<int, int, int>, int> ReadMultiset() const {
    std::map<std::tuple<int, int, int>, int> m;
    for (const auto& e : events_) {
      if (e.kind == Kind::kIoEnd) ++m[{e.token, e.layer, e.tensor}];
    }
    return m;
  }

 private:
  int n_;
  int window_;
  std::vector<int> expected_;
  std::mutex mu_;
  std::vector<Event> events_;
  std::map<std::pair<int, int>, int> ended_;
  std::set<int64_t> live_;
  int64_t completed_ = 0;
  int compute_before_load_ = 0;
  int order_violations_ = 0;
  int window_violations_ = 0;
};

/// Expected per-token read multiset: every non-locked tensor once.
inline std::map<std::tuple<int, int, int>, int> ExpectedReads(
    const ModelManifest& manifest, const PreservationPlan& plan, int tokens) {
  std::map<std::tuple<int, int, int>, int> m;
  for (int tok = 0; tok < tokens; ++tok) {
    for (const auto& layer : manifest.layers) {
      for (size_t t = 0; t < layer.tensors.size(); ++t) {
        if (!plan.is_locked(layer.index, layer.tensors[t].role)) {
          ++m[{tok, layer.index, static_cast<int>(t)}];
        }
      }
    }
  }
  return m;
}

/// Feeds a simulated timeline through an observer, in event order.
inline void Replay(const SimTimeline& timeline, ExecutionObserver& observer) {
  for (const auto& e : timeline.events) {
    switch (e.kind) {
      case EventKind::kIoStart: observer.OnIoStart(e.token, e.layer, e.tensor); break;
      case EventKind::kIoEnd: observer.OnIoEnd(e.token, e.layer, e.tensor); break;
      case EventKind::kComputeStart: observer.OnComputeStart(e.token, e.layer); break;
      case EventKind::kComputeEnd: observer.OnComputeEnd(e.token, e.layer); break;
    }
  }
}

}  // namespace flexoffload::testing
