// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace treeloss {

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// FNV-1a 64-bit digest as lowercase hex, used for manifest input fingerprints.
std::string fnv1a64_hex(std::string_view bytes);

void write_f32_le(const std::string& path, std::span<const float> values);
void write_i32_le(const std::string& path, std::span<const std::int32_t> values);
std::vector<float> read_f32_le(const std::string& path, std::size_t expected);
std::vector<std::int32_t> read_i32_le(const std::string& path, std::size_t expected);

/// Directory part of a path ("." when none).
std::string parent_dir(const std::string& path);
void ensure_dir(const std::string& dir);

}  // namespace treeloss
