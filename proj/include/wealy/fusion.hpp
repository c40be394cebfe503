// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <unordered_map>
#include <utility>
#include <vector>

#include "wealy/retrieval.hpp"

namespace wealy {

struct FusionConfig {
  double alpha = 1.5;
};

/// d_audio + alpha * d_lyrics, elementwise. Both matrices must already share
/// query and candidate id lists in the same order (see align_matrices).
DistanceMatrix fuse(const DistanceMatrix& d_audio, const DistanceMatrix& d_lyrics, double alpha);

/// Returns (a, b') where b' is b with rows and columns permuted to a's id order.
/// Throws AlignmentError naming the symmetric difference when the id sets differ.
std::pair<DistanceMatrix, DistanceMatrix> align_matrices(const DistanceMatrix& a, const DistanceMatrix& b);

struct AlphaPoint {
  double alpha = 0.0;
  double map = 0.0;
};

/// MAP of fuse(audio, lyrics, alpha) for alpha = lo, lo + step, ..., hi.
std::vector<AlphaPoint> sweep_alpha(const DistanceMatrix& d_audio, const DistanceMatrix& d_lyrics,
                                    const std::unordered_map<std::string, std::string>& clique_of, double lo,
                                    double hi, double step);

}  // namespace wealy
