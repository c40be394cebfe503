// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wealy/encoder.hpp"
#include "wealy/feature_store.hpp"

namespace wealy {

/// Query x candidate distances, row-major float32. The shared currency of
/// evaluation, baselines, the oracle and fusion.
struct DistanceMatrix {
  std::vector<std::string> query_ids;
  std::vector<std::string> candidate_ids;
  std::vector<float> values;

  DistanceMatrix() = default;
  DistanceMatrix(std::vector<std::string> queries, std::vector<std::string> candidates, float fill = 0.0f);

  std::size_t rows() const { return query_ids.size(); }
  std::size_t cols() const { return candidate_ids.size(); }
  float& at(std::size_t q, std::size_t c) { return values[q * cols() + c]; }
  float at(std::size_t q, std::size_t c) const { return values[q * cols() + c]; }
  std::span<const float> row(std::size_t q) const { return {values.data() + q * cols(), cols()}; }

  /// Throws ValidationError on size mismatch or non-finite / negative values.
  void validate() const;
  bool operator==(const DistanceMatrix&) const = default;
};

inline constexpr std::uint32_t kDistanceFormatVersion = 1;

/// WDST: magic, u32 version, u32 nq, u32 nc, nq + nc length-prefixed UTF-8 ids
/// (queries first), then nq*nc float32 little-endian.
void write_distances(const DistanceMatrix& dm, const std::filesystem::path& path);
DistanceMatrix read_distances(const std::filesystem::path& path);

using EmbeddingSet = std::map<std::string, std::vector<Embedding>>;

/// One eval-mode embedding per test window, in window order.
std::vector<Embedding> embed_track(const EncoderParams<float>& params, const EncoderConfig& config,
                                   const LatentSequence& seq, std::size_t k, double overlap,
                                   const std::string& track_id = {});

/// embed_track over many tracks of a store, parallel across tracks.
EmbeddingSet embed_tracks(const EncoderParams<float>& params, const EncoderConfig& config, const FeatureStore& store,
                          const std::vector<std::string>& track_ids, std::size_t k, double overlap);

/// Best-match similarity: max pairwise cosine over the two chunk lists.
double track_similarity(const std::vector<Embedding>& a, const std::vector<Embedding>& b);

/// value[q][c] = 1 - track_similarity(q, c).
DistanceMatrix distance_matrix(const EmbeddingSet& embs, const std::vector<std::string>& queries,
                               const std::vector<std::string>& candidates);

/// Plain cosine distances between one vector per id.
DistanceMatrix cosine_distance_matrix(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& vectors);

/// AP of one ranked row. The query is dropped from the candidates, ties are
/// broken by ascending candidate id. Throws DomainError when no relevant
/// candidate remains.
double average_precision(std::span<const float> distances, const std::vector<std::string>& candidate_ids,
                         const std::unordered_set<std::string>& relevant, const std::string& query_id);

struct EvalReport {
  double map = 0.0;
  double ci_halfwidth = 0.0;
  std::vector<std::string> query_ids;
  std::vector<double> per_query_ap;
  std::size_t n_queries = 0;
};

struct BootstrapOptions {
  std::size_t n_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// MAP over queries that have at least one same-clique candidate besides
/// themselves. `clique_of` must cover every query and candidate id.
EvalReport map_eval(const DistanceMatrix& dm, const std::unordered_map<std::string, std::string>& clique_of,
                    const BootstrapOptions& bootstrap = {});
EvalReport map_eval(const DistanceMatrix& dm, const DatasetManifest& manifest, const BootstrapOptions& bootstrap = {});

/// Percentile-bootstrap half-width of the mean of `values`.
double bootstrap_ci(std::span<const double> values, std::size_t n_resamples = 1000, double level = 0.95,
                    std::uint64_t seed = 0);

/// Square i.i.d. uniform(0,1) matrix over `ids`, symmetrized from the upper triangle.
DistanceMatrix random_baseline(const std::vector<std::string>& ids, std::uint64_t seed);

}  // namespace wealy
