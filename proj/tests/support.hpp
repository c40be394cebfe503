// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "wealy/feature_store.hpp"
#include "wealy/random.hpp"

namespace wealy::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("wealy_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LatentSequence random_sequence(std::size_t m, std::size_t d, Rng& rng) {
  std::vector<float> v(m * d);
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
  }
  return LatentSequence(m, d, std::move(v));
}

/// Row i of the sequence holds the value i in every column.
inline LatentSequence ramp_sequence(std::size_t m, std::size_t d) {
  std::vector<float> v(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      v[i * d + j] = static_cast<float>(i);
    }
  }
  return LatentSequence(m, d, std::move(v));
}

struct ToyTrack {
  std::string id;
  std::string clique;
  Split split;
  LatentSequence seq;
  std::optional<std::string> text;
};

/// Writes latents and a manifest for the given tracks; returns the manifest path.
inline std::filesystem::path write_toy_dataset(const std::filesystem::path& dir, const std::vector<ToyTrack>& tracks) {
  DatasetManifest m;
  m.base_dir = dir;
  for (const auto& t : tracks) {
    TrackRecord r;
    r.track_id = t.id;
    r.clique_id = t.clique;
    r.split = t.split;
    r.latent_path = "lat/" + t.id + ".wlat";
    r.transcription = t.text;
    write_latents(t.seq, m.latent_file(r));
    m.records.push_back(r);
  }
  const auto path = dir / "manifest.jsonl";
  write_manifest(m, path);
  return path;
}

}  // namespace wealy::test
