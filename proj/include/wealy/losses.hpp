// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wealy/encoder.hpp"

namespace wealy {

struct LossConfig {
  double temperature = 0.1;
  double triplet_margin = 0.3;

  void validate() const;
};

/// u.v / (|u| |v|) clamped to [-1, 1]. Throws DomainError on a zero vector.
double cosine_sim(std::span<const double> u, std::span<const double> v);
double cosine_sim(std::span<const float> u, std::span<const float> v);

/// pair_of[i] is the positive partner of item i; must be a fixed-point-free involution.
void validate_pairing(const std::vector<std::size_t>& pair_of);

/// Pairing for batches laid out as consecutive positive pairs (0,1), (2,3), ...
std::vector<std::size_t> adjacent_pairs(std::size_t batch_size);

/// Symmetric NT-Xent averaged over all 2N anchors. When `grad` is non-null it
/// receives d(loss)/d(embedding) for every item.
template <typename T>
T nt_xent(const std::vector<RowVector<T>>& embeddings, const std::vector<std::size_t>& pair_of, double temperature,
          std::vector<RowVector<T>>* grad = nullptr);

/// max(0, d(a,p) - d(a,n) + margin) with cosine distance d = 1 - cos.
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

/// Batch triplet loss: every item is an anchor with its partner as positive and
/// the most similar non-partner as negative; averaged over anchors.
template <typename T>
T batch_triplet(const std::vector<RowVector<T>>& embeddings, const std::vector<std::size_t>& pair_of, double margin,
                std::vector<RowVector<T>>* grad = nullptr);

}  // namespace wealy
