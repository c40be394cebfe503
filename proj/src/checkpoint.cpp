// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/checkpoint.hpp"

#include <fstream>
#include <map>

#include "wealy/binary_io.hpp"
#include "wealy/error.hpp"

namespace wealy {

using nlohmann::json;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  io::write_magic(out, "WCKP");
  io::write_u32(out, kCheckpointVersion);
  const json header{{"encoder", ckpt.config.to_json()}, {"metadata", ckpt.metadata}};
  io::write_string(out, header.dump());
  for (const auto& arr : ckpt.params.arrays()) {
    io::write_u16(out, static_cast<std::uint16_t>(arr.name.size()));
    out.write(arr.name.data(), static_cast<std::streamsize>(arr.name.size()));
    io::write_u32(out, static_cast<std::uint32_t>(arr.shape.size()));
    for (auto dim : arr.shape) {
      io::write_u32(out, static_cast<std::uint32_t>(dim));
    }
    io::write_f32s(out, arr.values);
  }
  out.flush();
  if (!out) {
    throw StorageError("failed writing checkpoint " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "WCKP", path.string());
  const auto version = io::read_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    const json header = json::parse(io::read_string(in));
    ckpt.config = EncoderConfig::from_json(header.at("encoder"));
    ckpt.metadata = header.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }

  // Shapes come from the config; the file must supply exactly those arrays.
  ckpt.params = init_params<float>(ckpt.config, 0);
  std::map<std::string, ParamArray<float>> expected;
  for (auto& arr : ckpt.params.arrays()) {
    expected.emplace(arr.name, arr);
  }
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = io::read_u16(in);
    const std::string name = io::read_bytes(in, name_len);
    const auto rank = io::read_u32(in);
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) {
      dim = io::read_u32(in);
    }
    const auto it = expected.find(name);
    if (it == expected.end()) {
      throw FormatError(path.string() + ": unexpected array \"" + name + "\"");
    }
    if (it->second.shape != shape) {
      throw FormatError(path.string() + ": shape mismatch for \"" + name + "\"");
    }
    io::read_f32s(in, it->second.values);
    expected.erase(it);
  }
  if (!expected.empty()) {
    throw CorruptionError(path.string() + ": missing array \"" + expected.begin()->first + "\"");
  }
  return ckpt;
}

}  // namespace wealy
