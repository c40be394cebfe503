// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "wealy/error.hpp"
#include "wealy/oracle.hpp"
#include "wealy/parallel.hpp"

namespace wealy {

TfIdfModel tfidf_fit(const Corpus& corpus) {
  if (corpus.empty()) {
    throw DomainError("tfidf_fit: empty corpus");
  }
  TfIdfModel model;
  std::vector<std::map<std::size_t, double>> counts(corpus.size());
  std::vector<std::size_t> df;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto tokens = tokenize(clean_text(corpus[d].second.value_or("")));
    for (const auto& t : tokens) {
      auto [it, inserted] = model.vocabulary.try_emplace(t, model.vocabulary.size());
      if (inserted) {
        df.push_back(0);
      }
      auto& c = counts[d][it->second];
      if (c == 0.0) {
        ++df[it->second];
      }
      c += 1.0;
    }
  }
  const double n_docs = static_cast<double>(corpus.size());
  model.idf.resize(df.size());
  for (std::size_t t = 0; t < df.size(); ++t) {
    model.idf[t] = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    std::vector<std::pair<std::size_t, double>> vec;
    double norm2 = 0.0;
    for (const auto& [term, tf] : counts[d]) {
      const double w = tf * model.idf[term];
      vec.emplace_back(term, w);
      norm2 += w * w;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& [_, w] : vec) {
        w *= inv;
      }
    }
    model.doc_vectors[corpus[d].first] = std::move(vec);
  }
  return model;
}

Corpus corpus_from(const DatasetManifest& manifest, const std::vector<std::string>& track_ids) {
  Corpus corpus;
  for (const auto& id : track_ids) {
    corpus.emplace_back(id, manifest.find(id).transcription);
  }
  return corpus;
}

DistanceMatrix tfidf_distance_matrix(const TfIdfModel& model, const std::vector<std::string>& queries,
                                     const std::vector<std::string>& candidates) {
  auto vec = [&](const std::string& id) -> const std::vector<std::pair<std::size_t, double>>& {
    const auto it = model.doc_vectors.find(id);
    if (it == model.doc_vectors.end()) {
      throw LookupError("track not in TF-IDF model: " + id);
    }
    return it->second;
  };
  for (const auto& id : queries) vec(id);
  for (const auto& id : candidates) vec(id);

  DistanceMatrix dm(queries, candidates, 1.0f);
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto& a = vec(queries[q]);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto& b = vec(candidates[c]);
      if (a.empty() || b.empty()) {
        continue;
      }
      double dot = 0.0;
      for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        if (a[i].first == b[j].first) {
          dot += a[i++].second * b[j++].second;
        } else if (a[i].first < b[j].first) {
          ++i;
        } else {
          ++j;
        }
      }
      dm.at(q, c) = static_cast<float>(std::max(0.0, 1.0 - std::min(dot, 1.0)));
    }
  });
  return dm;
}

std::vector<double> mean_latent(const LatentSequence& seq) {
  std::vector<double> mean(seq.d, 0.0);
  for (std::size_t i = 0; i < seq.m; ++i) {
    const auto row = seq.row(i);
    for (std::size_t j = 0; j < seq.d; ++j) {
      mean[j] += row[j];
    }
  }
  for (auto& v : mean) {
    v /= static_cast<double>(seq.m);
  }
  return mean;
}

DistanceMatrix avgemb_distance_matrix(const FeatureStore& store, const std::vector<std::string>& track_ids) {
  std::vector<std::vector<double>> means(track_ids.size());
  parallel_for(track_ids.size(), [&](std::size_t i) { means[i] = mean_latent(*store.get(track_ids[i])); });
  return cosine_distance_matrix(track_ids, means);
}

TrainResult avg_mlp_pipeline(TrainConfig config, const FeatureStore& store, const TrainOptions& options) {
  config.encoder.variant = Variant::avg_mlp;
  return train(config, store, options);
}

}  // namespace wealy
