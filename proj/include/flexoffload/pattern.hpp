// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace flexoffload {

// Deterministic tensor payloads. Byte i of a tensor depends only on
// (seed, tensor name, i), so any sub-range can be produced or checked alone.

uint64_t PatternKey(uint64_t seed, std::string_view tensor_name);

/// Fills `out` with pattern bytes [first_byte, first_byte + out.size()).
void FillPattern(uint64_t key, uint64_t first_byte, std::span<std::byte> out);

/// Index of the first mismatching byte, or data.size() if all match.
size_t FindPatternMismatch(uint64_t key, uint64_t first_byte,
                           std::span<const std::byte> data);

}  // namespace flexoffload
