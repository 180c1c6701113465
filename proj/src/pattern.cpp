// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/pattern.hpp"

#include <cstring>

namespace flexoffload {
namespace {

constexpr uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t Word(uint64_t key, uint64_t word_index) {
  return SplitMix64(key ^ (word_index * 0xd1b54a32d192ed03ULL));
}

inline std::byte WordByte(uint64_t word, uint64_t i) {
  return static_cast<std::byte>((word >> (8 * i)) & 0xff);
}

}  // namespace

uint64_t PatternKey(uint64_t seed, std::string_view tensor_name) {
  // FNV-1a over the name, mixed with the seed.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tensor_name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return SplitMix64(h ^ SplitMix64(seed));
}

void FillPattern(uint64_t key, uint64_t first_byte, std::span<std::byte> out) {
  size_t pos = 0;
  uint64_t abs = first_byte;
  // Unaligned head.
  while (pos < out.size() && abs % 8 != 0) {
    out[pos++] = WordByte(Word(key, abs / 8), abs % 8);
    ++abs;
  }
  while (out.size() - pos >= 8) {
    uint64_t w = Word(key, abs / 8);
    std::memcpy(out.data() + pos, &w, 8);
    pos += 8;
    abs += 8;
  }
  while (pos < out.size()) {
    out[pos++] = WordByte(Word(key, abs / 8), abs % 8);
    ++abs;
  }
}

size_t FindPatternMismatch(uint64_t key, uint64_t first_byte,
                           std::span<const std::byte> data) {
  size_t pos = 0;
  uint64_t abs = first_byte;
  while (pos < data.size() && abs % 8 != 0) {
    if (data[pos] != WordByte(Word(key, abs / 8), abs % 8)) return pos;
    ++pos;
    ++abs;
  }
  while (data.size() - pos >= 8) {
    uint64_t w = Word(key, abs / 8);
    if (std::memcmp(data.data() + pos, &w, 8) != 0) {
      for (size_t i = 0; i < 8; ++i) {
        if (data[pos + i] != WordByte(w, i)) return pos + i;
      }
    }
    pos += 8;
    abs += 8;
  }
  while (pos < data.size()) {
    if (data[pos] != WordByte(Word(key, abs / 8), abs % 8)) return pos;
    ++pos;
    ++abs;
  }
  return data.size();
}

}  // namespace flexoffload
