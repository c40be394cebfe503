// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wealy/feature_store.hpp"
#include "wealy/retrieval.hpp"
#include "wealy/trainer.hpp"

namespace wealy {

/// Sparse bag-of-words model over cleaned transcriptions.
struct TfIdfModel {
  std::map<std::string, std::size_t> vocabulary;
  std::vector<double> idf;
  /// (term index, weight) sorted by index, L2-normalized; empty for empty text.
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, double>>> doc_vectors;
};

using Corpus = std::vector<std::pair<std::string, std::optional<std::string>>>;

/// Raw term counts, smooth idf = ln((1 + D) / (1 + df)) + 1, unit-length rows.
TfIdfModel tfidf_fit(const Corpus& corpus);
Corpus corpus_from(const DatasetManifest& manifest, const std::vector<std::string>& track_ids);

/// 1 - cosine over sparse vectors; any pair touching an empty vector gets 1.
DistanceMatrix tfidf_distance_matrix(const TfIdfModel& model, const std::vector<std::string>& queries,
                                     const std::vector<std::string>& candidates);

/// Column mean over all latent rows of a track.
std::vector<double> mean_latent(const LatentSequence& seq);

/// Cosine distance between whole-track mean latents (no windowing, no training).
DistanceMatrix avgemb_distance_matrix(const FeatureStore& store, const std::vector<std::string>& track_ids);

/// Trains the window-average + two-layer MLP head with the standard trainer.
TrainResult avg_mlp_pipeline(TrainConfig config, const FeatureStore& store, const TrainOptions& options = {});

}  // namespace wealy
