// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "flexoffload/error.hpp"

namespace flexoffload {
namespace {

constexpr uint64_t kBandwidthChunk = 1u << 20;
constexpr uint64_t kBandwidthRingBytes = 64u << 20;

std::string Errno() { return std::strerror(errno); }

bool IsAligned(uint64_t v, uint64_t alignment) { return v % alignment == 0; }

}  // namespace

std::string_view ReadModeName(ReadMode mode) {
  return mode == ReadMode::kBypass ? "bypass" : "cached";
}

std::optional<ReadMode> ParseReadMode(std::string_view name) {
  if (name == "cached") return ReadMode::kCached;
  if (name == "bypass" || name == "direct") return ReadMode::kBypass;
  return std::nullopt;
}

AlignedBuffer::AlignedBuffer(size_t size, size_t alignment) : size_(size) {
  if (size == 0) return;
  size_t alloc = static_cast<size_t>(RoundUp(size, alignment));
  data_ = static_cast<std::byte*>(std::aligned_alloc(alignment, alloc));
  if (data_ == nullptr) throw std::bad_alloc();
}

AlignedBuffer::~AlignedBuffer() { std::free(data_); }

AlignedBuffer::AlignedBuffer(AlignedBuffer&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)),
      size_(std::exchange(other.size_, 0)) {}

AlignedBuffer& AlignedBuffer::operator=(AlignedBuffer&& other) noexcept {
  if (this != &other) {
    std::free(data_);
    data_ = std::exchange(other.data_, nullptr);
    size_ = std::exchange(other.size_, 0);
  }
  return *this;
}

BlobStore::BlobStore(std::filesystem::path path, int fd, ReadMode mode,
                     uint64_t alignment, uint64_t file_size)
    : path_(std::move(path)),
      fd_(fd),
      mode_(mode),
      alignment_(alignment),
      file_size_(file_size) {}

BlobStore::~BlobStore() { Close(); }

std::unique_ptr<BlobStore> BlobStore::Open(const std::filesystem::path& blob_path,
                                           const ModelManifest& manifest,
                                           ReadMode mode) {
  if (manifest.alignment == 0 ||
      (manifest.alignment & (manifest.alignment - 1)) != 0) {
    throw InvalidParameterError("manifest alignment must be a power of two");
  }
  struct stat st {};
  if (::stat(blob_path.c_str(), &st) != 0) {
    throw StorageError("cannot stat blob " + blob_path.string() + ": " + Errno());
  }
  const auto size = static_cast<uint64_t>(st.st_size);
  const uint64_t expected = manifest.extent();
  if (size < expected) {
    throw StorageError("blob " + blob_path.string() + " is too short: expected " +
                       std::to_string(expected) + " bytes, found " +
                       std::to_string(size));
  }

  int flags = O_RDONLY | O_CLOEXEC;
  if (mode == ReadMode::kBypass) flags |= O_DIRECT;
  int fd = ::open(blob_path.c_str(), flags);
  if (fd < 0) {
    if (mode == ReadMode::kBypass && errno == EINVAL) {
      throw CapabilityError("page-cache bypass is not supported for " +
                            blob_path.string());
    }
    throw StorageError("cannot open blob " + blob_path.string() + ": " + Errno());
  }
  std::unique_ptr<BlobStore> store(
      new BlobStore(blob_path, fd, mode, manifest.alignment, size));

  if (mode == ReadMode::kBypass && size > 0) {
    // Probe one aligned block; the kernel rejects direct IO it cannot honor.
    AlignedBuffer probe(manifest.alignment, manifest.alignment);
    ssize_t n = ::pread(fd, probe.data(), probe.size(), 0);
    if (n < 0) {
      if (errno == EINVAL) {
        throw CapabilityError(
            "page-cache bypass rejected for " + blob_path.string() +
            " at alignment " + std::to_string(manifest.alignment));
      }
      throw StorageError("probe read failed on " + blob_path.string() + ": " +
                         Errno());
    }
  }
  return store;
}

void BlobStore::Close() {
  int fd = fd_.exchange(-1);
  if (fd >= 0) ::close(fd);
}

int BlobStore::CheckedFd(std::string_view what) const {
  int fd = fd_.load();
  if (fd < 0) {
    throw UsageError("read of " + std::string(what) + " on a closed blob store");
  }
  return fd;
}

uint64_t BlobStore::PreadFully(int fd, uint64_t offset, std::span<std::byte> dest,
                               std::string_view what) {
  if (observer_) observer_(offset, dest.size());
  uint64_t done = 0;
  while (done < dest.size()) {
    ssize_t n = ::pread(fd, dest.data() + done, dest.size() - done,
                        static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError("read of " + std::string(what) + " from " +
                         path_.string() + " failed: " + Errno());
    }
    if (n == 0) break;
    done += static_cast<uint64_t>(n);
    // Direct IO continues only on aligned boundaries; a short aligned read
    // means end of file.
    if (mode_ == ReadMode::kBypass && done % alignment_ != 0) break;
  }
  return done;
}

uint64_t BlobStore::ReadTensor(const TensorSpec& tensor,
                               std::span<std::byte> dest) {
  int fd = CheckedFd(tensor.name);
  const uint64_t length = RequiredCapacity(tensor);
  if (dest.size() < length) {
    throw UsageError("destination for " + tensor.name + " holds " +
                     std::to_string(dest.size()) + " bytes, needs " +
                     std::to_string(length));
  }
  if (tensor.size_bytes == 0) return 0;
  if (mode_ == ReadMode::kBypass &&
      (!IsAligned(tensor.blob_offset, alignment_) ||
       !IsAligned(reinterpret_cast<uintptr_t>(dest.data()), alignment_))) {
    throw UsageError("unaligned direct read of " + tensor.name);
  }
  uint64_t got = PreadFully(fd, tensor.blob_offset, dest.first(length), tensor.name);
  if (got < tensor.size_bytes) {
    throw StorageError("short read of " + tensor.name + ": got " +
                       std::to_string(got) + " of " +
                       std::to_string(tensor.size_bytes) + " bytes");
  }
  return tensor.size_bytes;
}

void BlobStore::ReadRange(uint64_t offset, std::span<std::byte> dest) {
  int fd = CheckedFd("range");
  if (mode_ == ReadMode::kBypass &&
      (!IsAligned(offset, alignment_) || !IsAligned(dest.size(), alignment_) ||
       !IsAligned(reinterpret_cast<uintptr_t>(dest.data()), alignment_))) {
    throw UsageError("unaligned direct range read at offset " +
                     std::to_string(offset));
  }
  uint64_t got = PreadFully(fd, offset, dest, "range");
  // Tail pages may legitimately run past EOF.
  if (got < dest.size() && offset + got < file_size_) {
    throw StorageError("short range read at offset " + std::to_string(offset));
  }
}

double BlobStore::MeasureBandwidth(uint64_t sample_bytes, int threads) {
  if (sample_bytes == 0) throw UsageError("bandwidth sample must be non-empty");
  if (threads < 1) throw UsageError("bandwidth measurement needs >= 1 thread");
  if (sample_bytes > file_size_) {
    throw UsageError("bandwidth sample of " + std::to_string(sample_bytes) +
                     " bytes exceeds blob size " + std::to_string(file_size_));
  }
  CheckedFd("bandwidth sample");
  const uint64_t chunk = RoundUp(kBandwidthChunk, alignment_);
  const uint64_t chunks = (sample_bytes + chunk - 1) / chunk;
  std::atomic<uint64_t> next{0};
  std::atomic<uint64_t> total{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  // Each reader cycles through a destination ring larger than the CPU caches,
  // as the executor's slot buffers are. A single reused chunk would stay
  // cache resident and overstate what cached reads deliver in a real run.
  const uint64_t ring_chunks =
      std::max<uint64_t>(1, std::min(chunks, kBandwidthRingBytes / chunk));
  std::vector<AlignedBuffer> rings;
  for (int i = 0; i < threads; ++i) {
    rings.emplace_back(static_cast<size_t>(ring_chunks * chunk), alignment_);
    std::memset(rings.back().data(), 0, rings.back().size());  // prefault
  }

  auto worker = [&](int id) {
    try {
      auto ring = rings[static_cast<size_t>(id)].span();
      uint64_t slot = 0;
      for (uint64_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
        uint64_t off = c * chunk;
        uint64_t len = std::min(chunk, sample_bytes - off);
        if (mode_ == ReadMode::kBypass) len = RoundUp(len, alignment_);
        auto dest = ring.subspan(static_cast<size_t>(slot * chunk), static_cast<size_t>(len));
        slot = (slot + 1) % ring_chunks;
        total += PreadFully(CheckedFd("bandwidth sample"), off, dest, "bandwidth sample");
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };

  auto start = std::chrono::steady_clock::now();
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker, i);
  worker(0);
  for (auto& t : pool) t.join();
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
  if (failure) std::rethrow_exception(failure);
  double seconds = std::max(elapsed.count(), 1e-9);
  return static_cast<double>(total.load()) / seconds;
}

}  // namespace flexoffload
