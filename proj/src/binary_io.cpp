// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "wealy/error.hpp"

namespace wealy::io {

namespace {

void put(std::ostream& out, const unsigned char* bytes, std::size_t n) {
  out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!out) {
    throw StorageError("write failed");
  }
}

void get(std::istream& in, unsigned char* bytes, std::size_t n) {
  in.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw CorruptionError("unexpected end of file");
  }
}

}  // namespace

void write_u16(std::ostream& out, std::uint16_t v) {
  const std::array<unsigned char, 2> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  put(out, b.data(), b.size());
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put(out, b.data(), b.size());
}

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

void write_f32s(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    put(out, reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes());
  } else {
    for (float v : values) {
      write_f32(out, v);
    }
  }
}

void write_magic(std::ostream& out, const char (&magic)[5]) {
  put(out, reinterpret_cast<const unsigned char*>(magic), 4);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  put(out, reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

std::uint16_t read_u16(std::istream& in) {
  std::array<unsigned char, 2> b{};
  get(in, b.data(), b.size());
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  get(in, b.data(), b.size());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_f32s(std::istream& in, std::span<float> out) {
  get(in, reinterpret_cast<unsigned char*>(out.data()), out.size_bytes());
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : out) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      v = std::bit_cast<float>(u);
    }
  }
}

void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  std::array<char, 4> b{};
  in.read(b.data(), 4);
  if (in.gcount() != 4 || std::memcmp(b.data(), magic, 4) != 0) {
    throw FormatError(what + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
  }
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  return read_bytes(in, n);
}

std::string read_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  get(in, reinterpret_cast<unsigned char*>(s.data()), n);
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw StorageError("cannot open for writing: " + path.string());
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StorageError("cannot open for reading: " + path.string());
  }
  return in;
}

}  // namespace wealy::io
