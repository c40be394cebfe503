// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace wealy::io {

// Little-endian primitives shared by the WLAT, WCKP and WDST formats. Writers
// throw StorageError on stream failure; readers throw CorruptionError when the
// stream ends early.

void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f32s(std::ostream& out, std::span<const float> values);
void write_magic(std::ostream& out, const char (&magic)[5]);
/// u32 byte length followed by the raw bytes.
void write_string(std::ostream& out, const std::string& s);

std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
void read_f32s(std::istream& in, std::span<float> out);
/// Reads 4 magic bytes and throws FormatError if they differ from `magic`.
void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what);
std::string read_string(std::istream& in);
std::string read_bytes(std::istream& in, std::size_t n);

/// Opens for binary writing, creating parent directories.
std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

}  // namespace wealy::io
