// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

#include "flexoffload/manifest.hpp"

namespace flexoffload {

enum class ReadMode { kCached, kBypass };

std::string_view ReadModeName(ReadMode mode);
std::optional<ReadMode> ParseReadMode(std::string_view name);

inline uint64_t RoundUp(uint64_t v, uint64_t multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

/// Heap buffer with a guaranteed start alignment, suitable for direct IO.
class AlignedBuffer {
 public:
  AlignedBuffer() = default;
  AlignedBuffer(size_t size, size_t alignment);
  ~AlignedBuffer();

  AlignedBuffer(AlignedBuffer&& other) noexcept;
  AlignedBuffer& operator=(AlignedBuffer&& other) noexcept;
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;

  std::byte* data() { return data_; }
  const std::byte* data() const { return data_; }
  size_t size() const { return size_; }
  std::span<std::byte> span() { return {data_, size_}; }
  std::span<const std::byte> span() const { return {data_, size_}; }

 private:
  std::byte* data_ = nullptr;
  size_t size_ = 0;
};

/// Where the executor gets tensor bytes from. BlobStore is the real one;
/// tests wrap it to count, delay, or fail requests.
class TensorReader {
 public:
  virtual ~TensorReader() = default;

  /// Reads the whole tensor into `dest`, whose size must be at least
  /// RequiredCapacity(tensor). Returns tensor.size_bytes.
  virtual uint64_t ReadTensor(const TensorSpec& tensor,
                              std::span<std::byte> dest) = 0;

  /// Raw read of dest.size() bytes at `offset`. Used for page-granular reads.
  virtual void ReadRange(uint64_t offset, std::span<std::byte> dest) = 0;

  /// Granularity of read offsets/lengths and of destination addresses.
  virtual uint64_t io_alignment() const = 0;
  virtual ReadMode mode() const = 0;

  uint64_t RequiredCapacity(const TensorSpec& tensor) const {
    return RoundUp(tensor.size_bytes, io_alignment());
  }
};

/// Read-only handle on a blob file. Concurrent ReadTensor calls on disjoint
/// destinations are safe. No caching layer: every call goes to the device.
class BlobStore final : public TensorReader {
 public:
  /// Called for every underlying pread with its offset and length.
  using ReadObserver = std::function<void(uint64_t offset, uint64_t length)>;

  /// Throws StorageError for a missing or short blob and CapabilityError when
  /// BYPASS cannot be honored for this file and alignment.
  static std::unique_ptr<BlobStore> Open(const std::filesystem::path& blob_path,
                                         const ModelManifest& manifest,
                                         ReadMode mode);
  ~BlobStore() override;

  BlobStore(const BlobStore&) = delete;
  BlobStore& operator=(const BlobStore&) = delete;

  uint64_t ReadTensor(const TensorSpec& tensor,
                      std::span<std::byte> dest) override;
  void ReadRange(uint64_t offset, std::span<std::byte> dest) override;
  uint64_t io_alignment() const override { return alignment_; }
  ReadMode mode() const override { return mode_; }

  /// Aggregate read throughput in bytes/s over the first `sample_bytes` of
  /// the blob, split across `threads` readers.
  double MeasureBandwidth(uint64_t sample_bytes, int threads);

  void Close();
  bool is_open() const { return fd_.load() >= 0; }
  uint64_t file_size() const { return file_size_; }
  const std::filesystem::path& path() const { return path_; }

  /// Install before any concurrent use.
  void set_read_observer(ReadObserver observer) { observer_ = std::move(observer); }

 private:
  BlobStore(std::filesystem::path path, int fd, ReadMode mode,
            uint64_t alignment, uint64_t file_size);

  int CheckedFd(std::string_view what) const;
  // Reads until `want` bytes or EOF; returns bytes read.
  uint64_t PreadFully(int fd, uint64_t offset, std::span<std::byte> dest,
                      std::string_view what);

  std::filesystem::path path_;
  std::atomic<int> fd_;
  ReadMode mode_;
  uint64_t alignment_;
  uint64_t file_size_;
  ReadObserver observer_;
};

}  // namespace flexoffload
