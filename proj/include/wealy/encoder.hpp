// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wealy/feature_store.hpp"

namespace wealy {

enum class Pooling { gem, mean, cls };
enum class Variant { transformer, avg_mlp };

const char* to_string(Pooling p);
const char* to_string(Variant v);
Pooling parse_pooling(const std::string& s);
Variant parse_variant(const std::string& s);

/// Architecture hyperparameters. Defaults are the full-size model; tests and
/// the synthetic pipeline use much smaller settings.
struct EncoderConfig {
  std::size_t d_in = 1280;
  std::size_t d_h = 768;
  std::size_t n_blocks = 4;
  std::size_t n_heads = 12;
  std::size_t d_ffn = 1024;
  double dropout_p = 0.1;
  std::size_t d_e = 512;
  Pooling pooling = Pooling::gem;
  Variant variant = Variant::transformer;
  double gem_p_init = 3.0;
  double gem_eps = 1e-6;
  // Fixed sinusoidal encodings after the input projection. Off only for ablations.
  bool positional_encoding = true;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);

  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// y = x * weight + bias, weight stored (in, out).
template <typename T>
struct Linear {
  Matrix<T> weight;
  RowVector<T> bias;
};

template <typename T>
struct LayerNorm {
  RowVector<T> gain;
  RowVector<T> bias;
};

template <typename T>
struct EncoderBlock {
  LayerNorm<T> norm1;
  Linear<T> query, key, value, attn_out;
  LayerNorm<T> norm2;
  Linear<T> ffn_in, ffn_out;
};

/// Named view of one learnable array.
template <typename T>
struct ParamArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<T> values;
};

template <typename T>
struct EncoderParams {
  // variant = transformer
  Linear<T> input_proj;
  std::vector<EncoderBlock<T>> blocks;
  LayerNorm<T> final_norm;
  RowVector<T> gem_p;      // 1 element, pooling = gem only
  RowVector<T> cls_token;  // d_h, pooling = cls only
  Linear<T> output_proj;
  // variant = avg_mlp
  Linear<T> mlp_hidden, mlp_out;

  /// Every non-empty array in a fixed canonical order.
  std::vector<ParamArray<T>> arrays();
  std::vector<ParamArray<const T>> arrays() const;

  std::size_t parameter_count() const;
  /// Same shapes, all zeros.
  EncoderParams zeros_like() const;

  template <typename U>
  EncoderParams<U> cast() const;
};

/// Glorot-uniform weights, zero biases, unit norm gains, gem_p = gem_p_init.
template <typename T>
EncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed);

/// Dropout is active only for train mode, with masks drawn from `seed`.
struct ForwardMode {
  bool train = false;
  std::uint64_t seed = 0;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(std::uint64_t s) { return {true, s}; }
};

/// Per-column generalized mean ((1/k) sum max(x, eps)^p)^(1/p). Throws DomainError for p < 1.
template <typename T>
RowVector<T> gem_pool(const Matrix<T>& seq, T p, T eps);

template <typename T>
Matrix<T> window_matrix(const Window& w);

/// Encodes one k x d_in window into a d_e embedding.
template <typename T>
RowVector<T> forward(const EncoderParams<T>& params, const EncoderConfig& config, const Matrix<T>& window,
                     ForwardMode mode = ForwardMode::eval());

/// Replays forward for `window` and accumulates d(loss)/d(params) into `grads`
/// given d(loss)/d(embedding).
template <typename T>
void backward(const EncoderParams<T>& params, const EncoderConfig& config, const Matrix<T>& window,
              ForwardMode mode, const RowVector<T>& grad_embedding, EncoderParams<T>& grads);

/// Loss over a batch of embeddings: returns the value and fills `grad` (same
/// layout as `embeddings`) with d(loss)/d(embedding).
template <typename T>
using BatchLossFn = std::function<T(const std::vector<RowVector<T>>& embeddings, std::vector<RowVector<T>>& grad)>;

template <typename T>
struct GradientResult {
  T loss = 0;
  EncoderParams<T> grads;
};

/// Reverse-mode gradients of loss_fn(encoder(windows)) with respect to every
/// learnable array. Items are processed in fixed shards and reduced in shard
/// order, so the result does not depend on the worker count.
template <typename T>
GradientResult<T> compute_gradients(const EncoderParams<T>& params, const EncoderConfig& config,
                                    const BatchLossFn<T>& loss_fn, const std::vector<Matrix<T>>& windows,
                                    const std::vector<ForwardMode>& modes);

struct Embedding {
  std::vector<float> values;
  std::string source_track;
  std::size_t window_start = 0;
};

/// Eval-mode encoding of a window with production (32-bit) parameters.
Embedding embed_window(const EncoderParams<float>& params, const EncoderConfig& config, const Window& window);

}  // namespace wealy
