// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "wealy/encoder.hpp"

namespace wealy {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderConfig config;
  EncoderParams<float> params;
  /// Free-form extras stored next to the config (training metadata).
  nlohmann::json metadata = nlohmann::json::object();
};

/// WCKP layout: magic, u32 version, u32-length-prefixed JSON blob holding
/// {"encoder": config, "metadata": ...}, then one record per array until EOF:
/// u16 name length, UTF-8 name, u32 rank, rank x u32 dims, float32 payload.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wealy
