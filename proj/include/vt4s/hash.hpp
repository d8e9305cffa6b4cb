// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace vt4s {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// 64-bit FNV-1a; used to derive per-clip seeds from ids.
std::uint64_t fnv1a64(std::string_view bytes);

/// SplitMix64 finalizer for mixing seeds.
std::uint64_t mix64(std::uint64_t x);

/// Reads a whole file as bytes. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Removes every `"created":"..."` JSON member so timestamps never enter a hash.
std::string strip_timestamps(std::string_view text);

/// Content hash of an artifact file, insensitive to creation timestamps.
std::string artifact_hash(const std::filesystem::path& path);

}  // namespace vt4s
