// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/retrieval.hpp"

#include <fstream>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "wealy/binary_io.hpp"
#include "wealy/error.hpp"
#include "wealy/losses.hpp"
#include "wealy/parallel.hpp"
#include "wealy/random.hpp"

namespace wealy {

DistanceMatrix::DistanceMatrix(std::vector<std::string> queries, std::vector<std::string> candidates, float fill)
    : query_ids(std::move(queries)), candidate_ids(std::move(candidates)), values(query_ids.size() * candidate_ids.size(), fill) {}

void DistanceMatrix::validate() const {
  if (values.size() != rows() * cols()) {
    throw ValidationError("distance matrix payload does not match its id lists");
  }
  for (float v : values) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw ValidationError("distance matrix holds a negative or non-finite value");
    }
  }
}

void write_distances(const DistanceMatrix& dm, const std::filesystem::path& path) {
  if (dm.values.size() != dm.rows() * dm.cols()) {
    throw ValidationError("distance matrix payload does not match its id lists");
  }
  auto out = io::open_out(path);
  io::write_magic(out, "WDST");
  io::write_u32(out, kDistanceFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(dm.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(dm.cols()));
  for (const auto& id : dm.query_ids) {
    io::write_string(out, id);
  }
  for (const auto& id : dm.candidate_ids) {
    io::write_string(out, id);
  }
  io::write_f32s(out, dm.values);
  out.flush();
  if (!out) {
    throw StorageError("failed writing " + path.string());
  }
}

DistanceMatrix read_distances(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "WDST", path.string());
  const auto version = io::read_u32(in);
  if (version != kDistanceFormatVersion) {
    throw FormatError(path.string() + ": unsupported WDST version " + std::to_string(version));
  }
  const auto nq = io::read_u32(in);
  const auto nc = io::read_u32(in);
  DistanceMatrix dm;
  dm.query_ids.reserve(nq);
  dm.candidate_ids.reserve(nc);
  for (std::uint32_t i = 0; i < nq; ++i) {
    dm.query_ids.push_back(io::read_string(in));
  }
  for (std::uint32_t i = 0; i < nc; ++i) {
    dm.candidate_ids.push_back(io::read_string(in));
  }
  dm.values.resize(static_cast<std::size_t>(nq) * nc);
  io::read_f32s(in, dm.values);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError(path.string() + ": trailing bytes after payload");
  }
  return dm;
}

// --- embeddings --------------------------------------------------------------

std::vector<Embedding> embed_track(const EncoderParams<float>& params, const EncoderConfig& config,
                                   const LatentSequence& seq, std::size_t k, double overlap,
                                   const std::string& track_id) {
  std::vector<Embedding> out;
  for (const auto& w : test_windows(seq, k, overlap, track_id)) {
    out.push_back(embed_window(params, config, w));
  }
  return out;
}

EmbeddingSet embed_tracks(const EncoderParams<float>& params, const EncoderConfig& config, const FeatureStore& store,
                          const std::vector<std::string>& track_ids, std::size_t k, double overlap) {
  std::vector<std::vector<Embedding>> results(track_ids.size());
  parallel_for(track_ids.size(), [&](std::size_t i) {
    results[i] = embed_track(params, config, *store.get(track_ids[i]), k, overlap, track_ids[i]);
  });
  EmbeddingSet set;
  for (std::size_t i = 0; i < track_ids.size(); ++i) {
    set[track_ids[i]] = std::move(results[i]);
  }
  return set;
}

double track_similarity(const std::vector<Embedding>& a, const std::vector<Embedding>& b) {
  if (a.empty() || b.empty()) {
    throw DomainError("track_similarity: empty embedding list");
  }
  double best = -1.0;
  for (const auto& x : a) {
    for (const auto& y : b) {
      best = std::max(best, cosine_sim(std::span<const float>(x.values), std::span<const float>(y.values)));
    }
  }
  return best;
}

namespace {

using UnitRows = std::vector<std::vector<double>>;

UnitRows unit_rows(const std::vector<Embedding>& embs) {
  UnitRows out;
  for (const auto& e : embs) {
    double n2 = 0;
    for (float v : e.values) {
      n2 += static_cast<double>(v) * v;
    }
    if (n2 == 0.0) {
      throw DomainError("zero embedding for track " + e.source_track);
    }
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<double> u(e.values.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = e.values[i] * inv;
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

DistanceMatrix distance_matrix(const EmbeddingSet& embs, const std::vector<std::string>& queries,
                               const std::vector<std::string>& candidates) {
  std::map<std::string, UnitRows> units;
  auto unit = [&](const std::string& id) -> const UnitRows& {
    auto it = units.find(id);
    if (it == units.end()) {
      const auto src = embs.find(id);
      if (src == embs.end()) {
        throw LookupError("no embeddings for track " + id);
      }
      if (src->second.empty()) {
        throw DomainError("track_similarity: empty embedding list for " + id);
      }
      it = units.emplace(id, unit_rows(src->second)).first;
    }
    return it->second;
  };
  for (const auto& id : queries) unit(id);
  for (const auto& id : candidates) unit(id);

  DistanceMatrix dm(queries, candidates);
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto& a = units.at(queries[q]);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto& b = units.at(candidates[c]);
      double best = -1.0;
      for (const auto& x : a) {
        for (const auto& y : b) {
          best = std::max(best, std::inner_product(x.begin(), x.end(), y.begin(), 0.0));
        }
      }
      dm.at(q, c) = static_cast<float>(1.0 - std::clamp(best, -1.0, 1.0));
    }
  });
  return dm;
}

DistanceMatrix cosine_distance_matrix(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& vectors) {
  if (ids.size() != vectors.size()) {
    throw ShapeError("cosine_distance_matrix: ids and vectors differ in length");
  }
  DistanceMatrix dm(ids, ids);
  parallel_for(ids.size(), [&](std::size_t q) {
    for (std::size_t c = 0; c < ids.size(); ++c) {
      dm.at(q, c) = static_cast<float>(1.0 - cosine_sim(std::span<const double>(vectors[q]), std::span<const double>(vectors[c])));
    }
  });
  return dm;
}

// --- metrics -----------------------------------------------------------------

double average_precision(std::span<const float> distances, const std::vector<std::string>& candidate_ids,
                         const std::unordered_set<std::string>& relevant, const std::string& query_id) {
  if (distances.size() != candidate_ids.size()) {
    throw ShapeError("average_precision: row length differs from candidate count");
  }
  std::vector<std::size_t> order;
  order.reserve(candidate_ids.size());
  std::size_t n_relevant = 0;
  for (std::size_t c = 0; c < candidate_ids.size(); ++c) {
    if (candidate_ids[c] == query_id) {
      continue;
    }
    order.push_back(c);
    n_relevant += relevant.count(candidate_ids[c]);
  }
  if (n_relevant == 0) {
    throw DomainError("average_precision: no relevant candidate for query " + query_id);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distances[a] != distances[b]) {
      return distances[a] < distances[b];
    }
    return candidate_ids[a] < candidate_ids[b];
  });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size() && hits < n_relevant; ++r) {
    if (relevant.count(candidate_ids[order[r]])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(n_relevant);
}

double bootstrap_ci(std::span<const double> values, std::size_t n_resamples, double level, std::uint64_t seed) {
  if (values.empty()) {
    throw DomainError("bootstrap_ci: empty input");
  }
  if (n_resamples == 0 || !(level > 0.0 && level < 1.0)) {
    throw DomainError("bootstrap_ci: need n_resamples >= 1 and level in (0, 1)");
  }
  Rng rng(seed);
  std::vector<double> means(n_resamples);
  const auto n = values.size();
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += values[rng.below(n)];
    }
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  // linearly interpolated empirical quantile
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double alpha = (1.0 - level) / 2.0;
  return std::max(0.0, (quantile(1.0 - alpha) - quantile(alpha)) / 2.0);
}

EvalReport map_eval(const DistanceMatrix& dm, const std::unordered_map<std::string, std::string>& clique_of,
                    const BootstrapOptions& bootstrap) {
  if (dm.values.size() != dm.rows() * dm.cols()) {
    throw ValidationError("distance matrix payload does not match its id lists");
  }
  auto clique = [&](const std::string& id) -> const std::string& {
    const auto it = clique_of.find(id);
    if (it == clique_of.end()) {
      throw LookupError("no clique label for track " + id);
    }
    return it->second;
  };
  std::unordered_map<std::string, std::unordered_set<std::string>> members;
  for (const auto& c : dm.candidate_ids) {
    members[clique(c)].insert(c);
  }

  EvalReport report;
  for (std::size_t q = 0; q < dm.rows(); ++q) {
    const auto& qid = dm.query_ids[q];
    const auto it = members.find(clique(qid));
    if (it == members.end()) {
      continue;
    }
    const auto& rel = it->second;
    if (rel.size() - rel.count(qid) == 0) {
      continue;
    }
    report.query_ids.push_back(qid);
    report.per_query_ap.push_back(average_precision(dm.row(q), dm.candidate_ids, rel, qid));
  }
  if (report.per_query_ap.empty()) {
    throw DomainError("map_eval: no query has a same-clique candidate");
  }
  report.n_queries = report.per_query_ap.size();
  report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) /
               static_cast<double>(report.n_queries);
  report.ci_halfwidth = bootstrap_ci(report.per_query_ap, bootstrap.n_resamples, bootstrap.level, bootstrap.seed);
  return report;
}

EvalReport map_eval(const DistanceMatrix& dm, const DatasetManifest& manifest, const BootstrapOptions& bootstrap) {
  return map_eval(dm, manifest.clique_map(), bootstrap);
}

DistanceMatrix random_baseline(const std::vector<std::string>& ids, std::uint64_t seed) {
  Rng rng(seed);
  DistanceMatrix dm(ids, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i; j < ids.size(); ++j) {
      float u;
      do {
        u = static_cast<float>(rng.uniform_open());
      } while (u >= 1.0f);  // rounding to float can reach 1
      dm.at(i, j) = u;
      dm.at(j, i) = u;
    }
  }
  return dm;
}

}  // namespace wealy
