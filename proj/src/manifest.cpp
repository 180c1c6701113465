// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/manifest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flexoffload/error.hpp"
#include "flexoffload/pattern.hpp"

namespace flexoffload {
namespace {

constexpr std::array<TensorRole, kTensorsPerLayer> kLayerRoleOrder = {
    TensorRole::kAttnQ,  TensorRole::kAttnK,    TensorRole::kAttnV,
    TensorRole::kAttnO,  TensorRole::kFfnUp,    TensorRole::kFfnGate,
    TensorRole::kFfnDown};

struct RoleEntry {
  TensorRole role;
  std::string_view token;
  std::string_view short_name;
};

constexpr std::array<RoleEntry, 9> kRoles = {{
    {TensorRole::kAttnQ, "ATTN_Q", "attn_q"},
    {TensorRole::kAttnK, "ATTN_K", "attn_k"},
    {TensorRole::kAttnV, "ATTN_V", "attn_v"},
    {TensorRole::kAttnO, "ATTN_O", "attn_o"},
    {TensorRole::kFfnUp, "FFN_UP", "ffn_up"},
    {TensorRole::kFfnGate, "FFN_GATE", "ffn_gate"},
    {TensorRole::kFfnDown, "FFN_DOWN", "ffn_down"},
    {TensorRole::kEmbedIn, "EMBED_IN", "embed_in"},
    {TensorRole::kEmbedOut, "EMBED_OUT", "embed_out"},
}};

const RoleEntry& Entry(TensorRole role) {
  return kRoles[static_cast<size_t>(role)];
}

bool IsPowerOfTwo(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

uint64_t AlignUp(uint64_t v, uint64_t alignment) {
  return (v + alignment - 1) / alignment * alignment;
}

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

template <typename T>
T ParseNumber(std::string_view field, size_t line_no, const char* what) {
  T value{};
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidParameterError("manifest line " + std::to_string(line_no) +
                                ": bad " + what + " '" + std::string(field) +
                                "'");
  }
  return value;
}

std::string Describe(const TensorSpec& t) {
  return t.name + " [" + std::to_string(t.blob_offset) + ", " +
         std::to_string(t.blob_offset + t.size_bytes) + ")";
}

}  // namespace

std::string_view RoleName(TensorRole role) { return Entry(role).token; }

std::optional<TensorRole> ParseRole(std::string_view name) {
  for (const auto& e : kRoles) {
    if (e.token == name) return e.role;
  }
  return std::nullopt;
}

bool IsAttention(TensorRole role) {
  return role == TensorRole::kAttnQ || role == TensorRole::kAttnK ||
         role == TensorRole::kAttnV || role == TensorRole::kAttnO;
}

bool IsFfn(TensorRole role) {
  return role == TensorRole::kFfnUp || role == TensorRole::kFfnGate ||
         role == TensorRole::kFfnDown;
}

bool IsEmbedding(TensorRole role) {
  return role == TensorRole::kEmbedIn || role == TensorRole::kEmbedOut;
}

uint64_t LayerSpec::bytes() const {
  uint64_t sum = 0;
  for (const auto& t : tensors) sum += t.size_bytes;
  return sum;
}

const TensorSpec* LayerSpec::find(TensorRole role) const {
  for (const auto& t : tensors) {
    if (t.role == role) return &t;
  }
  return nullptr;
}

uint64_t ModelManifest::decoding_bytes() const {
  uint64_t sum = 0;
  for (const auto& l : layers) sum += l.bytes();
  return sum;
}

uint64_t ModelManifest::embedding_bytes() const {
  uint64_t sum = 0;
  for (const auto& t : embeddings) sum += t.size_bytes;
  return sum;
}

uint64_t ModelManifest::extent() const {
  uint64_t end = 0;
  auto visit = [&](const TensorSpec& t) {
    // Empty tensors occupy no bytes, wherever their offset points.
    if (t.size_bytes > 0) end = std::max(end, t.blob_offset + t.size_bytes);
  };
  for (const auto& t : embeddings) visit(t);
  for (const auto& l : layers) {
    for (const auto& t : l.tensors) visit(t);
  }
  return end;
}

uint64_t ModelManifest::role_bytes(TensorRole role) const {
  if (layers.empty()) return 0;
  const TensorSpec* t = layers.front().find(role);
  return t ? t->size_bytes : 0;
}

ModelManifest GenerateManifest(const ManifestParams& p) {
  if (p.n_layers < 1) {
    throw InvalidParameterError("n_layers must be >= 1, got " +
                                std::to_string(p.n_layers));
  }
  if (p.attn_tensor_bytes <= 0 || p.ffn_tensor_bytes <= 0) {
    throw InvalidParameterError(
        "attention and FFN tensor sizes must be positive");
  }
  // Zero-sized embeddings are allowed; negative ones are not.
  if (p.embed_bytes < 0) {
    throw InvalidParameterError("embed_bytes must be non-negative");
  }
  if (p.alignment <= 0 || !IsPowerOfTwo(static_cast<uint64_t>(p.alignment))) {
    throw InvalidParameterError("alignment must be a power of two, got " +
                                std::to_string(p.alignment));
  }
  if (p.gqa_kv_bytes) {
    if (*p.gqa_kv_bytes <= 0) {
      throw InvalidParameterError("gqa_kv_bytes must be positive");
    }
    if (*p.gqa_kv_bytes > p.attn_tensor_bytes) {
      throw InvalidParameterError(
          "gqa_kv_bytes (" + std::to_string(*p.gqa_kv_bytes) +
          ") exceeds attn_tensor_bytes (" +
          std::to_string(p.attn_tensor_bytes) + ")");
    }
  }

  const auto align = static_cast<uint64_t>(p.alignment);
  ModelManifest m;
  m.n_layers = p.n_layers;
  m.alignment = align;

  uint64_t cursor = 0;
  auto place = [&](std::string name, TensorRole role, uint64_t size) {
    TensorSpec t{std::move(name), role, size, cursor};
    cursor = AlignUp(cursor + size, align);
    m.total_bytes += size;
    return t;
  };

  const auto embed = static_cast<uint64_t>(p.embed_bytes);
  m.embeddings.push_back(place("embed_in", TensorRole::kEmbedIn, embed));

  for (int i = 0; i < p.n_layers; ++i) {
    LayerSpec layer;
    layer.index = i;
    for (TensorRole role : kLayerRoleOrder) {
      uint64_t size = 0;
      if (IsFfn(role)) {
        size = static_cast<uint64_t>(p.ffn_tensor_bytes);
      } else if (p.gqa_kv_bytes &&
                 (role == TensorRole::kAttnK || role == TensorRole::kAttnV)) {
        size = static_cast<uint64_t>(*p.gqa_kv_bytes);
      } else {
        size = static_cast<uint64_t>(p.attn_tensor_bytes);
      }
      std::string name =
          "layers." + std::to_string(i) + "." + std::string(Entry(role).short_name);
      layer.tensors.push_back(place(std::move(name), role, size));
    }
    m.layers.push_back(std::move(layer));
  }

  m.embeddings.push_back(place("embed_out", TensorRole::kEmbedOut, embed));
  return m;
}

std::vector<std::string> ValidateManifest(const ModelManifest& m) {
  std::vector<std::string> violations;

  if (m.n_layers < 1) violations.push_back("n_layers must be >= 1");
  if (static_cast<size_t>(std::max(m.n_layers, 0)) != m.layers.size()) {
    violations.push_back("n_layers (" + std::to_string(m.n_layers) +
                         ") != number of layers (" +
                         std::to_string(m.layers.size()) + ")");
  }
  if (!IsPowerOfTwo(m.alignment)) {
    violations.push_back("alignment " + std::to_string(m.alignment) +
                         " is not a power of two");
  }

  std::vector<const TensorSpec*> all;
  std::set<std::string> names;
  uint64_t total = 0;
  auto check_tensor = [&](const TensorSpec& t, const std::string& where) {
    all.push_back(&t);
    total += t.size_bytes;
    if (!names.insert(t.name).second) {
      violations.push_back(where + ": duplicate tensor name " + t.name);
    }
    if (!IsEmbedding(t.role) && t.size_bytes == 0) {
      violations.push_back(where + ": tensor " + t.name + " has zero size");
    }
    if (IsPowerOfTwo(m.alignment) && t.blob_offset % m.alignment != 0) {
      violations.push_back(where + ": tensor " + t.name + " offset " +
                           std::to_string(t.blob_offset) +
                           " is not a multiple of alignment " +
                           std::to_string(m.alignment));
    }
  };

  for (const auto& t : m.embeddings) {
    check_tensor(t, "embeddings");
    if (!IsEmbedding(t.role)) {
      violations.push_back("embeddings: tensor " + t.name + " has role " +
                           std::string(RoleName(t.role)));
    }
  }

  std::multiset<std::pair<TensorRole, uint64_t>> reference_shape;
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& layer = m.layers[li];
    const std::string where = "layer " + std::to_string(li);
    if (layer.index != static_cast<int>(li)) {
      violations.push_back(where + ": index " + std::to_string(layer.index) +
                           " out of sequence");
    }
    std::map<TensorRole, int> counts;
    std::multiset<std::pair<TensorRole, uint64_t>> shape;
    for (const auto& t : layer.tensors) {
      check_tensor(t, where);
      counts[t.role]++;
      shape.insert({t.role, t.size_bytes});
    }
    bool roles_ok = counts.size() == kLayerRoleOrder.size();
    for (TensorRole role : kLayerRoleOrder) {
      auto it = counts.find(role);
      if (it == counts.end() || it->second != 1) roles_ok = false;
    }
    if (!roles_ok) {
      violations.push_back(where +
                           ": layer shape mismatch (roles must be exactly "
                           "Q,K,V,O,UP,GATE,DOWN, found " +
                           std::to_string(layer.tensors.size()) + " tensors)");
    } else if (li == 0) {
      reference_shape = shape;
    } else if (shape != reference_shape) {
      violations.push_back(where +
                           ": layer shape mismatch (sizes differ from layer 0)");
    }
  }

  // Overlap: sweep in offset order against the furthest end seen so far.
  std::sort(all.begin(), all.end(), [](const TensorSpec* a, const TensorSpec* b) {
    return a->blob_offset < b->blob_offset;
  });
  const TensorSpec* furthest = nullptr;
  for (const TensorSpec* t : all) {
    if (t->size_bytes == 0) continue;
    if (furthest &&
        furthest->blob_offset + furthest->size_bytes > t->blob_offset) {
      violations.push_back("tensors " + Describe(*furthest) + " and " +
                           Describe(*t) + " overlap");
    }
    if (!furthest || t->blob_offset + t->size_bytes >
                         furthest->blob_offset + furthest->size_bytes) {
      furthest = t;
    }
  }

  if (total != m.total_bytes) {
    violations.push_back("total_bytes " + std::to_string(m.total_bytes) +
                         " != sum of tensor sizes " + std::to_string(total));
  }
  return violations;
}

std::string SerializeManifest(const ModelManifest& m) {
  std::ostringstream out;
  out << "FLEXMODEL\t1\t" << m.n_layers << '\t' << m.alignment << '\n';
  auto line = [&](int layer, const TensorSpec& t) {
    out << "TENSOR\t" << layer << '\t' << t.name << '\t' << RoleName(t.role)
        << '\t' << t.size_bytes << '\t' << t.blob_offset << '\n';
  };
  for (const auto& t : m.embeddings) line(-1, t);
  for (const auto& l : m.layers) {
    for (const auto& t : l.tensors) line(l.index, t);
  }
  return out.str();
}

ModelManifest ParseManifest(std::string_view text) {
  ModelManifest m;
  bool have_header = false;
  size_t line_no = 0;
  while (!text.empty()) {
    size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    auto fields = SplitTabs(line);
    if (!have_header) {
      if (fields.size() != 4 || fields[0] != "FLEXMODEL") {
        throw InvalidParameterError("manifest: missing FLEXMODEL header");
      }
      if (fields[1] != "1") {
        throw InvalidParameterError("manifest: unsupported version " +
                                    std::string(fields[1]));
      }
      m.n_layers = ParseNumber<int>(fields[2], line_no, "layer count");
      m.alignment = ParseNumber<uint64_t>(fields[3], line_no, "alignment");
      if (m.n_layers < 0 || m.n_layers > (1 << 24)) {
        throw InvalidParameterError("manifest: implausible layer count");
      }
      m.layers.resize(static_cast<size_t>(m.n_layers));
      for (int i = 0; i < m.n_layers; ++i) m.layers[static_cast<size_t>(i)].index = i;
      have_header = true;
      continue;
    }
    if (fields.size() != 6 || fields[0] != "TENSOR") {
      throw InvalidParameterError("manifest line " + std::to_string(line_no) +
                                  ": expected TENSOR record with 6 fields");
    }
    int layer = ParseNumber<int>(fields[1], line_no, "layer");
    auto role = ParseRole(fields[3]);
    if (!role) {
      throw InvalidParameterError("manifest line " + std::to_string(line_no) +
                                  ": unknown role '" + std::string(fields[3]) +
                                  "'");
    }
    TensorSpec t{std::string(fields[2]), *role,
                 ParseNumber<uint64_t>(fields[4], line_no, "size"),
                 ParseNumber<uint64_t>(fields[5], line_no, "offset")};
    m.total_bytes += t.size_bytes;
    if (layer == -1) {
      m.embeddings.push_back(std::move(t));
    } else if (layer >= 0 && layer < m.n_layers) {
      m.layers[static_cast<size_t>(layer)].tensors.push_back(std::move(t));
    } else {
      throw InvalidParameterError("manifest line " + std::to_string(line_no) +
                                  ": layer " + std::to_string(layer) +
                                  " out of range");
    }
  }
  if (!have_header) throw InvalidParameterError("manifest: empty input");
  return m;
}

void SaveManifest(const ModelManifest& manifest,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open " + path.string() + " for writing");
  out << SerializeManifest(manifest);
  if (!out.flush()) throw StorageError("write failed: " + path.string());
}

ModelManifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseManifest(buf.str());
}

void WriteBlob(const ModelManifest& manifest, const std::filesystem::path& path,
               uint64_t seed) {
  std::vector<const TensorSpec*> order;
  for (const auto& t : manifest.embeddings) order.push_back(&t);
  for (const auto& l : manifest.layers) {
    for (const auto& t : l.tensors) order.push_back(&t);
  }
  std::sort(order.begin(), order.end(),
            [](const TensorSpec* a, const TensorSpec* b) {
              return a->blob_offset < b->blob_offset;
            });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open blob " + path.string() + " for writing");

  constexpr size_t kChunk = 8u << 20;
  std::vector<std::byte> chunk(kChunk);
  uint64_t written = 0;
  auto emit = [&](std::span<const std::byte> bytes) {
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StorageError("write failed: " + path.string());
    written += bytes.size();
  };

  for (const TensorSpec* t : order) {
    if (t->size_bytes == 0) continue;
    if (t->blob_offset < written) {
      throw InvalidParameterError("blob layout overlaps at tensor " + t->name);
    }
    while (written < t->blob_offset) {
      size_t n = static_cast<size_t>(std::min<uint64_t>(kChunk, t->blob_offset - written));
      std::fill_n(chunk.begin(), n, std::byte{0});
      emit(std::span(chunk).first(n));
    }
    const uint64_t key = PatternKey(seed, t->name);
    for (uint64_t done = 0; done < t->size_bytes;) {
      size_t n = static_cast<size_t>(std::min<uint64_t>(kChunk, t->size_bytes - done));
      FillPattern(key, done, std::span(chunk).first(n));
      emit(std::span(chunk).first(n));
      done += n;
    }
  }
  if (!out.flush()) throw StorageError("flush failed: " + path.string());
}

}  // namespace flexoffload
