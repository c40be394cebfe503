// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "wealy/feature_store.hpp"

namespace wealy {

/// Parameters of the synthetic version-identification dataset.
///
/// Every clique owns a random unit "lyrics signature". A version's latent rows
/// are the signature mapped into R^d by a shared random linear map, plus a
/// per-version offset, per-row noise, and instrumental stretches (random
/// high-energy rows carrying no signature) laid out differently in each
/// version. noise_sigma scales every nuisance term.
struct SynthSpec {
  std::size_t n_cliques = 200;
  std::size_t versions_min = 2;
  std::size_t versions_max = 4;
  std::size_t d = 32;
  std::size_t m_min = 160;
  std::size_t m_max = 400;
  std::size_t signature_dim = 8;
  std::size_t nuisance_dim = 8;  // shared subspace of version offsets and instrumental stretches
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  double instrumental_fraction = 0.3;   // expected share of instrumental rows
  double burst_scale = 1.0;              // norm of instrumental rows
  double row_noise = 0.5;               // per-row noise relative to noise_sigma
  std::size_t lyric_words = 40;
  std::size_t vocabulary_size = 600;
  double transcript_noise = 0.6;        // per-word substitution probability
  double invalid_transcript_rate = 0.0; // share of versions given an instrumental transcription

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

/// Writes out_dir/manifest.jsonl and out_dir/latents/<track>.wlat; returns the
/// manifest (base_dir = out_dir, d set). Deterministic given spec.seed.
DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace wealy
