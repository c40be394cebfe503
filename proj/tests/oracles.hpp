// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

// Naive reference implementations used as test oracles. They follow the
// textbook formulas directly, with no shared code from the library.

#pragma once

#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace wealy::test {

inline long double naive_cos(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return dot / std::sqrt(na * nb);
}

/// Mean over anchors of -log(exp(s(i,p)/t) / sum_{k != i} exp(s(i,k)/t)).
inline double naive_nt_xent(const std::vector<std::vector<double>>& z, const std::vector<std::size_t>& pair_of,
                            double t) {
  long double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    long double denom = 0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k != i) denom += std::exp(naive_cos(z[i], z[k]) / t);
    }
    total += -std::log(std::exp(naive_cos(z[i], z[pair_of[i]]) / t) / denom);
  }
  return static_cast<double>(total / z.size());
}

/// AP by definition: mean over relevant items of precision at their rank.
/// `ranking` lists relevance flags in ranked order.
inline double naive_ap(const std::vector<bool>& ranking) {
  double hits = 0, sum = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (ranking[r]) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / hits;
}

/// AP of one query: sort candidates (excluding the query) by (distance, id)
/// and apply the definition.
inline double naive_query_ap(const std::vector<double>& dist, const std::vector<std::string>& ids,
                             const std::vector<std::string>& cliques, std::size_t q) {
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < ids.size(); ++c) {
    if (c != q) order.push_back(c);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : ids[a] < ids[b];
  });
  std::vector<bool> rel;
  for (auto c : order) rel.push_back(cliques[c] == cliques[q]);
  return naive_ap(rel);
}

/// Expected AP of a query with R relevant among N candidates under a
/// uniformly random ranking.
inline double expected_random_ap(std::size_t n, std::size_t r) {
  double h = 0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  if (n == 1) return 1.0;
  const double nn = static_cast<double>(n);
  const double rr = static_cast<double>(r);
  return (h + (rr - 1) / (nn - 1) * (nn - h)) / nn;
}

}  // namespace wealy::test
