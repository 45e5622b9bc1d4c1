// Copyright 2026 The RelScore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relscore {

/// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// FNV-1a, used only for seeding and mock determinism (not for content addressing).
std::uint64_t stable_hash64(std::string_view text);

/// SplitMix64 finalizer; combines a seed with a salt into a well-mixed 64-bit value.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace relscore
