// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wealy/checkpoint.hpp"
#include "wealy/encoder.hpp"
#include "wealy/feature_store.hpp"
#include "wealy/random.hpp"

namespace wealy {

enum class LossKind { nt_xent, triplet };

const char* to_string(LossKind k);
LossKind parse_loss(const std::string& s);

struct TrainConfig {
  double lr_base = 1e-4;
  double weight_decay = 1e-3;
  std::size_t warmup_epochs = 50;
  double lr_min = 1e-6;
  std::size_t max_epochs = 1000;
  std::size_t batch_size = 64;
  std::size_t patience = 20;
  std::size_t k = 1500;
  double temperature = 0.1;
  double triplet_margin = 0.3;
  LossKind loss = LossKind::nt_xent;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // An epoch counts as an improvement only if validation MAP rises by more than this.
  double min_improvement = 1e-6;
  EncoderConfig encoder;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
};

/// A contrastive batch: windows[2i] and windows[2i + 1] are two versions of cliques[i].
struct TrainingBatch {
  std::vector<Window> windows;
  std::vector<std::size_t> pair_of;
  std::vector<std::string> cliques;
};

using CliqueList = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// batch_size / 2 distinct cliques without replacement, two distinct versions
/// each, one random training window per version.
TrainingBatch build_batch(const CliqueList& trainable, const FeatureStore& store, std::size_t batch_size,
                          std::size_t k, Rng& rng);

/// Linear warmup to lr_base, then cosine decay reaching lr_min at the last epoch.
double lr_at_epoch(std::size_t epoch, const TrainConfig& config);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const EncoderParams<T>& params);
};

/// One AdamW update with bias correction and decoupled weight decay, followed
/// by clamping gem_p to >= 1.
template <typename T>
void adamw_step(EncoderParams<T>& params, const EncoderParams<T>& grads, OptimizerState<T>& state, double lr,
                const TrainConfig& config);

/// Patience-based stopping on a metric that should increase.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_improvement) : patience_(patience), min_improvement_(min_improvement) {}

  /// Records the metric for `epoch` (1-based); returns true if it is a new best.
  bool update(std::size_t epoch, double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  std::size_t patience_;
  double min_improvement_;
  double best_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_map = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_map = 0.0;
  std::string stopped_reason;

  bool operator==(const TrainHistory&) const = default;
};

struct TrainOptions {
  std::filesystem::path checkpoint_path;  // best checkpoint, rewritten on improvement
  std::filesystem::path history_path;     // JSON-lines, one epoch per line
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

/// Validation MAP from one first-k window embedding per val track.
double validation_map(const EncoderParams<float>& params, const EncoderConfig& config, const FeatureStore& store,
                      std::size_t k);

TrainResult train(const TrainConfig& config, const FeatureStore& store, const TrainOptions& options = {});

}  // namespace wealy
