// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flexoffload {

enum class TensorRole {
  kAttnQ,
  kAttnK,
  kAttnV,
  kAttnO,
  kFfnUp,
  kFfnGate,
  kFfnDown,
  kEmbedIn,
  kEmbedOut,
};

inline constexpr int kAttentionTensorsPerLayer = 4;
inline constexpr int kFfnTensorsPerLayer = 3;
inline constexpr int kTensorsPerLayer =
    kAttentionTensorsPerLayer + kFfnTensorsPerLayer;
inline constexpr uint64_t kDefaultAlignment = 4096;

/// Canonical token used in manifest and plan files, e.g. "ATTN_Q".
std::string_view RoleName(TensorRole role);
std::optional<TensorRole> ParseRole(std::string_view name);
bool IsAttention(TensorRole role);
bool IsFfn(TensorRole role);
bool IsEmbedding(TensorRole role);

struct TensorSpec {
  std::string name;
  TensorRole role = TensorRole::kAttnQ;
  uint64_t size_bytes = 0;
  uint64_t blob_offset = 0;

  bool operator==(const TensorSpec&) const = default;
};

struct LayerSpec {
  int index = 0;
  std::vector<TensorSpec> tensors;

  uint64_t bytes() const;
  const TensorSpec* find(TensorRole role) const;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelManifest {
  int n_layers = 0;
  std::vector<LayerSpec> layers;
  std::vector<TensorSpec> embeddings;
  uint64_t alignment = kDefaultAlignment;
  uint64_t total_bytes = 0;

  uint64_t decoding_bytes() const;
  uint64_t embedding_bytes() const;
  /// One past the last byte any tensor occupies in the blob.
  uint64_t extent() const;
  /// Size of one tensor of the given role (layer 0; all layers are identical).
  uint64_t role_bytes(TensorRole role) const;

  bool operator==(const ModelManifest&) const = default;
};

struct ManifestParams {
  int n_layers = 1;
  int64_t attn_tensor_bytes = 0;
  int64_t ffn_tensor_bytes = 0;
  /// Size of K and V when they are smaller than Q and O (grouped-query attention).
  std::optional<int64_t> gqa_kv_bytes;
  int64_t embed_bytes = 0;
  int64_t alignment = static_cast<int64_t>(kDefaultAlignment);
};

/// Builds a synthetic manifest. Offsets are packed in model order, each rounded
/// up to the alignment. Throws InvalidParameterError on bad sizes.
ModelManifest GenerateManifest(const ManifestParams& params);

/// Returns one human-readable description per violated invariant; empty iff valid.
std::vector<std::string> ValidateManifest(const ModelManifest& manifest);

std::string SerializeManifest(const ModelManifest& manifest);
/// Throws InvalidParameterError on malformed text.
ModelManifest ParseManifest(std::string_view text);

void SaveManifest(const ModelManifest& manifest, const std::filesystem::path& path);
ModelManifest LoadManifest(const std::filesystem::path& path);

/// Writes the packed blob with every tensor region filled by its seed pattern.
void WriteBlob(const ModelManifest& manifest, const std::filesystem::path& path,
               uint64_t seed);

}  // namespace flexoffload
