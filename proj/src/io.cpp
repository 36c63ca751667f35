// SPDX-License-Identifier: Apache-2.0
#include "treeloss/io.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace treeloss {

static_assert(std::endian::native == std::endian::little,
              "raw cube/label files are little-endian; byte swapping is not implemented");

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
static void write_raw(const std::string& path, std::span<const T> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (!out) throw std::runtime_error("short write: " + path);
}

template <typename T>
static std::vector<T> read_raw(const std::string& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<T> values(expected);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(expected * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(T))
    throw std::runtime_error("file shorter than expected: " + path);
  return values;
}

void write_f32_le(const std::string& path, std::span<const float> values) {
  write_raw(path, values);
}
void write_i32_le(const std::string& path, std::span<const std::int32_t> values) {
  write_raw(path, values);
}
std::vector<float> read_f32_le(const std::string& path, std::size_t expected) {
  return read_raw<float>(path, expected);
}
std::vector<std::int32_t> read_i32_le(const std::string& path, std::size_t expected) {
  return read_raw<std::int32_t>(path, expected);
}

std::string parent_dir(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return dir.empty() ? std::string(".") : dir.string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace treeloss
