// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/fusion.hpp"

#include <cmath>
#include <map>
#include <set>

#include "wealy/error.hpp"

namespace wealy {

DistanceMatrix fuse(const DistanceMatrix& d_audio, const DistanceMatrix& d_lyrics, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw DomainError("fusion alpha must be finite and >= 0");
  }
  if (d_audio.query_ids != d_lyrics.query_ids || d_audio.candidate_ids != d_lyrics.candidate_ids) {
    throw AlignmentError("fuse: id lists differ; align the matrices first");
  }
  DistanceMatrix out = d_audio;
  if (alpha == 0.0) {
    // -0.0 + 0 * x would come out as +0.0
    return out;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(d_audio.values[i]) +
                                       alpha * static_cast<double>(d_lyrics.values[i]));
  }
  return out;
}

namespace {

std::vector<std::size_t> permutation(const std::vector<std::string>& target, const std::vector<std::string>& source,
                                     const char* axis) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < source.size(); ++i) {
    index.emplace(source[i], i);
  }
  const std::set<std::string> a(target.begin(), target.end());
  const std::set<std::string> b(source.begin(), source.end());
  if (a != b || a.size() != target.size() || b.size() != source.size()) {
    std::string diff;
    for (const auto& id : a) {
      if (!b.count(id)) diff += " " + id;
    }
    for (const auto& id : b) {
      if (!a.count(id)) diff += " " + id;
    }
    if (diff.empty()) {
      diff = " (duplicate ids)";
    }
    throw AlignmentError(std::string("align_matrices: ") + axis + " ids differ:" + diff);
  }
  std::vector<std::size_t> perm(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    perm[i] = index.at(target[i]);
  }
  return perm;
}

}  // namespace

std::pair<DistanceMatrix, DistanceMatrix> align_matrices(const DistanceMatrix& a, const DistanceMatrix& b) {
  const auto rows = permutation(a.query_ids, b.query_ids, "query");
  const auto cols = permutation(a.candidate_ids, b.candidate_ids, "candidate");
  DistanceMatrix out(a.query_ids, a.candidate_ids);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out.at(q, c) = b.at(rows[q], cols[c]);
    }
  }
  return {a, std::move(out)};
}

std::vector<AlphaPoint> sweep_alpha(const DistanceMatrix& d_audio, const DistanceMatrix& d_lyrics,
                                    const std::unordered_map<std::string, std::string>& clique_of, double lo,
                                    double hi, double step) {
  if (!(step > 0.0) || !(lo >= 0.0) || hi < lo) {
    throw DomainError("sweep_alpha: need 0 <= lo <= hi and step > 0");
  }
  std::vector<AlphaPoint> out;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = lo + static_cast<double>(i) * step;
    out.push_back({alpha, map_eval(fuse(d_audio, d_lyrics, alpha), clique_of, BootstrapOptions{1, 0.95, 0}).map});
  }
  return out;
}

}  // namespace wealy
