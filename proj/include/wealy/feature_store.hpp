// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wealy/random.hpp"

namespace wealy {

/// One track's decoder-latent matrix, m rows of dimension d, row-major.
struct LatentSequence {
  std::size_t m = 0;
  std::size_t d = 0;
  std::vector<float> data;

  LatentSequence() = default;
  LatentSequence(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
  /// Throws ValidationError unless m, d >= 1, the payload is m*d and every value is finite.
  void validate() const;

  bool operator==(const LatentSequence&) const = default;
};

enum class Split { train, val, test };

const char* to_string(Split s);
/// Throws ValidationError for anything but "train", "val", "test".
Split parse_split(const std::string& s);

struct TrackRecord {
  std::string track_id;
  std::string clique_id;
  Split split = Split::train;
  std::string latent_path;  // relative to the manifest directory
  std::optional<std::string> transcription;
  std::optional<std::string> language;
  std::optional<double> duration_s;

  bool operator==(const TrackRecord&) const = default;
};

struct DatasetManifest {
  std::string dataset_name;
  std::size_t d = 0;  // 0 until probed from the latent files
  std::vector<TrackRecord> records;
  std::filesystem::path base_dir;

  std::filesystem::path latent_file(const TrackRecord& r) const { return base_dir / r.latent_path; }
  const TrackRecord& find(const std::string& track_id) const;
  std::vector<TrackRecord> split(Split s) const;
  std::vector<std::string> track_ids(Split s) const;
  /// track_id -> clique_id for every record.
  std::unordered_map<std::string, std::string> clique_map() const;
  /// Cliques of the train split with at least two members, each with its member
  /// track ids, sorted by clique id. Singleton train cliques are left out.
  std::vector<std::pair<std::string, std::vector<std::string>>> trainable_cliques() const;
};

/// A fixed-length slice (or cyclic tiling) of a latent sequence.
struct Window {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<float> data;
  std::string source_track;
  std::size_t start_index = 0;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
  bool operator==(const Window&) const = default;
};

// --- WLAT latent files -------------------------------------------------------

inline constexpr std::uint32_t kLatentFormatVersion = 1;

void write_latents(const LatentSequence& seq, const std::filesystem::path& path);
LatentSequence read_latents(const std::filesystem::path& path);
/// Reads just (m, d) from the header.
std::pair<std::size_t, std::size_t> read_latent_shape(const std::filesystem::path& path);

// --- manifests ---------------------------------------------------------------

/// Reads a JSON-lines manifest. base_dir is the manifest's directory and
/// dataset_name its file stem; d is left at 0.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct ValidationIssue {
  enum class Severity { error, warning };
  Severity severity;
  std::string track_id;  // or clique id for clique-level warnings
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  std::size_t error_count() const;
  std::size_t warning_count() const;
  bool ok() const { return error_count() == 0; }
};

/// Checks file presence, common dimension, unique ids and train-clique sizes.
/// Sets manifest.d when a consistent dimension was found.
ValidationReport validate_manifest(DatasetManifest& manifest);

// --- windowing -----------------------------------------------------------------

Window sample_train_window(const LatentSequence& seq, std::size_t k, Rng& rng, const std::string& track_id = {});
Window first_window(const LatentSequence& seq, std::size_t k, const std::string& track_id = {});
std::vector<Window> test_windows(const LatentSequence& seq, std::size_t k, double overlap,
                                 const std::string& track_id = {});
/// Start offsets used by test_windows; empty when m < k (single tiled window).
std::vector<std::size_t> test_window_starts(std::size_t m, std::size_t k, double overlap);

/// Read-through cache of latent sequences for a manifest. Safe for concurrent readers.
class FeatureStore {
 public:
  explicit FeatureStore(DatasetManifest manifest);

  const DatasetManifest& manifest() const { return manifest_; }
  std::shared_ptr<const LatentSequence> get(const std::string& track_id) const;

 private:
  DatasetManifest manifest_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const LatentSequence>> cache_;
};

}  // namespace wealy
