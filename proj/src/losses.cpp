// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wealy/error.hpp"

namespace wealy {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be > 0");
  }
  if (!(triplet_margin >= 0.0)) {
    throw ConfigError("triplet_margin must be >= 0");
  }
}

namespace {

template <typename U>
double cosine_impl(std::span<const U> u, std::span<const U> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine_sim: length mismatch");
  }
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    uu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
    vv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }
  if (uu == 0.0 || vv == 0.0) {
    throw DomainError("cosine_sim: zero vector");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

template <typename T>
struct Normalized {
  std::vector<RowVector<T>> unit;
  std::vector<T> norm;
  Matrix<T> sim;
};

template <typename T>
Normalized<T> normalize(const std::vector<RowVector<T>>& z) {
  Normalized<T> out;
  const auto n = z.size();
  out.unit.reserve(n);
  for (const auto& v : z) {
    const T len = v.norm();
    if (!(len > T(0)) || !std::isfinite(static_cast<double>(len))) {
      throw DomainError("embedding with zero or non-finite norm");
    }
    out.norm.push_back(len);
    out.unit.push_back(v / len);
  }
  out.sim.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      out.sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = out.unit[i].dot(out.unit[k]);
    }
  }
  return out;
}

// Chain rule from d(loss)/d(sim) to d(loss)/d(z) through the normalization.
template <typename T>
void sim_grad_to_embeddings(const Normalized<T>& nz, const Matrix<T>& dsim, std::vector<RowVector<T>>& grad) {
  const auto n = nz.unit.size();
  grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    RowVector<T> dunit = RowVector<T>::Zero(nz.unit[i].size());
    for (std::size_t k = 0; k < n; ++k) {
      const T g = dsim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) +
                  dsim(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
      if (g != T(0)) {
        dunit += g * nz.unit[k];
      }
    }
    grad[i] = (dunit - dunit.dot(nz.unit[i]) * nz.unit[i]) / nz.norm[i];
  }
}

}  // namespace

double cosine_sim(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }
double cosine_sim(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }

void validate_pairing(const std::vector<std::size_t>& pair_of) {
  const auto n = pair_of.size();
  if (n % 2 != 0) {
    throw DomainError("contrastive batch size must be even");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = pair_of[i];
    if (j >= n || j == i || pair_of[j] != i) {
      throw DomainError("pair_of is not a perfect matching at index " + std::to_string(i));
    }
  }
}

std::vector<std::size_t> adjacent_pairs(std::size_t batch_size) {
  std::vector<std::size_t> p(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    p[i] = i ^ 1u;
  }
  return p;
}

template <typename T>
T nt_xent(const std::vector<RowVector<T>>& z, const std::vector<std::size_t>& pair_of, double temperature,
          std::vector<RowVector<T>>* grad) {
  if (z.size() < 2) {
    throw DomainError("nt_xent needs at least 2 items");
  }
  if (z.size() != pair_of.size()) {
    throw ShapeError("nt_xent: pairing size differs from batch size");
  }
  if (!(temperature > 0.0)) {
    throw DomainError("nt_xent: temperature must be > 0");
  }
  validate_pairing(pair_of);
  const auto nz = normalize(z);
  const auto n = z.size();
  const T inv_tau = static_cast<T>(1.0 / temperature);
  const T inv_n = T(1) / static_cast<T>(n);

  T total = 0;
  Matrix<T> dsim = Matrix<T>::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<T> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) {
        continue;
      }
      logits[k] = nz.sim(ii, static_cast<Eigen::Index>(k)) * inv_tau;
      mx = std::max(mx, logits[k]);
    }
    T denom = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) {
        denom += std::exp(logits[k] - mx);
      }
    }
    const T lse = mx + std::log(denom);
    total += lse - logits[pair_of[i]];
    if (grad) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i) {
          continue;
        }
        const T softmax = std::exp(logits[k] - lse);
        const T target = k == pair_of[i] ? T(1) : T(0);
        dsim(ii, static_cast<Eigen::Index>(k)) = inv_n * inv_tau * (softmax - target);
      }
    }
  }
  if (grad) {
    sim_grad_to_embeddings(nz, dsim, *grad);
  }
  return total * inv_n;
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  const double d_ap = 1.0 - cosine_sim(anchor, positive);
  const double d_an = 1.0 - cosine_sim(anchor, negative);
  return std::max(0.0, d_ap - d_an + margin);
}

template <typename T>
T batch_triplet(const std::vector<RowVector<T>>& z, const std::vector<std::size_t>& pair_of, double margin,
                std::vector<RowVector<T>>* grad) {
  if (z.size() < 4) {
    throw DomainError("batch triplet loss needs at least 4 items (two pairs)");
  }
  if (z.size() != pair_of.size()) {
    throw ShapeError("batch_triplet: pairing size differs from batch size");
  }
  validate_pairing(pair_of);
  const auto nz = normalize(z);
  const auto n = z.size();
  const T inv_n = T(1) / static_cast<T>(n);
  Matrix<T> dsim = Matrix<T>::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto pos = static_cast<Eigen::Index>(pair_of[i]);
    // hardest negative = most similar non-partner; lowest index wins ties
    Eigen::Index neg = -1;
    for (std::size_t k = 0; k < n; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (k == i || kk == pos) {
        continue;
      }
      if (neg < 0 || nz.sim(ii, kk) > nz.sim(ii, neg)) {
        neg = kk;
      }
    }
    // (1 - s_ap) - (1 - s_an) + margin
    const T hinge = nz.sim(ii, neg) - nz.sim(ii, pos) + static_cast<T>(margin);
    if (hinge > T(0)) {
      total += hinge;
      dsim(ii, neg) += inv_n;
      dsim(ii, pos) -= inv_n;
    }
  }
  if (grad) {
    sim_grad_to_embeddings(nz, dsim, *grad);
  }
  return total * inv_n;
}

template float nt_xent<float>(const std::vector<RowVector<float>>&, const std::vector<std::size_t>&, double,
                              std::vector<RowVector<float>>*);
template double nt_xent<double>(const std::vector<RowVector<double>>&, const std::vector<std::size_t>&, double,
                                std::vector<RowVector<double>>*);
template float batch_triplet<float>(const std::vector<RowVector<float>>&, const std::vector<std::size_t>&, double,
                                    std::vector<RowVector<float>>*);
template double batch_triplet<double>(const std::vector<RowVector<double>>&, const std::vector<std::size_t>&, double,
                                      std::vector<RowVector<double>>*);

}  // namespace wealy
