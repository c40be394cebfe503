// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "wealy/binary_io.hpp"
#include "wealy/error.hpp"
#include "wealy/losses.hpp"
#include "wealy/parallel.hpp"
#include "wealy/retrieval.hpp"

namespace wealy {

using nlohmann::json;

const char* to_string(LossKind k) { return k == LossKind::nt_xent ? "nt_xent" : "triplet"; }

LossKind parse_loss(const std::string& s) {
  if (s == "nt_xent") return LossKind::nt_xent;
  if (s == "triplet") return LossKind::triplet;
  throw ConfigError("unknown loss \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and >= 2");
  }
  if (loss == LossKind::triplet && batch_size < 4) {
    throw ConfigError("triplet loss needs batch_size >= 4");
  }
  if (max_epochs < 1 || warmup_epochs >= max_epochs) {
    throw ConfigError("need warmup_epochs < max_epochs");
  }
  if (!(lr_base > 0) || !(lr_min > 0) || !(temperature > 0) || !(adam_eps > 0)) {
    throw ConfigError("learning rates, temperature and adam_eps must be > 0");
  }
  if (lr_min > lr_base) {
    throw ConfigError("lr_min must not exceed lr_base");
  }
  if (!(weight_decay >= 0) || !(triplet_margin >= 0)) {
    throw ConfigError("weight_decay and triplet_margin must be >= 0");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (k < 1) {
    throw ConfigError("k must be >= 1");
  }
  encoder.validate();
}

json TrainConfig::to_json() const {
  return json{{"lr_base", lr_base},
              {"weight_decay", weight_decay},
              {"warmup_epochs", warmup_epochs},
              {"lr_min", lr_min},
              {"max_epochs", max_epochs},
              {"batch_size", batch_size},
              {"patience", patience},
              {"k", k},
              {"temperature", temperature},
              {"triplet_margin", triplet_margin},
              {"loss", to_string(loss)},
              {"seed", seed},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"adam_eps", adam_eps},
              {"min_improvement", min_improvement},
              {"encoder", encoder.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> known{"lr_base",    "weight_decay", "warmup_epochs", "lr_min",  "max_epochs",
                                           "batch_size", "patience",     "k",             "temperature", "tau",
                                           "triplet_margin", "loss",     "seed",          "adam_beta1", "adam_beta2",
                                           "adam_eps",   "min_improvement", "encoder"};
  if (!j.is_object()) {
    throw ConfigError("train config must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError("unknown train config field \"" + key + "\"");
    }
  }
  TrainConfig c;
  try {
    c.lr_base = j.value("lr_base", c.lr_base);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.k = j.value("k", c.k);
    c.temperature = j.value("temperature", j.value("tau", c.temperature));
    c.triplet_margin = j.value("triplet_margin", c.triplet_margin);
    c.loss = parse_loss(j.value("loss", std::string(to_string(c.loss))));
    c.seed = j.value("seed", c.seed);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.min_improvement = j.value("min_improvement", c.min_improvement);
    if (j.contains("encoder")) {
      c.encoder = EncoderConfig::from_json(j.at("encoder"));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot open train config " + path.string());
  }
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// --- batches -------------------------------------------------------------------

TrainingBatch build_batch(const CliqueList& trainable, const FeatureStore& store, std::size_t batch_size,
                          std::size_t k, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and >= 2");
  }
  const std::size_t n_cliques = batch_size / 2;
  if (trainable.size() < n_cliques) {
    throw ConfigError("need " + std::to_string(n_cliques) + " trainable cliques, have " +
                      std::to_string(trainable.size()));
  }
  // partial Fisher-Yates: the first n_cliques entries are a uniform sample
  std::vector<std::size_t> idx(trainable.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n_cliques; ++i) {
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  }

  TrainingBatch batch;
  batch.pair_of = adjacent_pairs(batch_size);
  for (std::size_t c = 0; c < n_cliques; ++c) {
    const auto& [clique, members] = trainable[idx[c]];
    const auto first = rng.below(members.size());
    auto second = rng.below(members.size() - 1);
    if (second >= first) {
      ++second;
    }
    batch.cliques.push_back(clique);
    for (auto m : {first, second}) {
      const auto& id = members[m];
      batch.windows.push_back(sample_train_window(*store.get(id), k, rng, id));
    }
  }
  return batch;
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& c) {
  if (epoch >= c.max_epochs) {
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, max_epochs)");
  }
  if (epoch < c.warmup_epochs) {
    return c.lr_base * static_cast<double>(epoch + 1) / static_cast<double>(c.warmup_epochs);
  }
  const double progress =
      static_cast<double>(epoch - c.warmup_epochs) / static_cast<double>(c.max_epochs - c.warmup_epochs);
  return c.lr_min + (c.lr_base - c.lr_min) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

// --- optimizer -----------------------------------------------------------------

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(const EncoderParams<T>& params) {
  OptimizerState<T> s;
  for (const auto& a : params.arrays()) {
    s.first_moment.emplace_back(a.values.size(), T(0));
    s.second_moment.emplace_back(a.values.size(), T(0));
  }
  return s;
}

template <typename T>
void adamw_step(EncoderParams<T>& params, const EncoderParams<T>& grads, OptimizerState<T>& state, double lr,
                const TrainConfig& config) {
  auto p_arrays = params.arrays();
  const auto g_arrays = grads.arrays();
  if (p_arrays.size() != g_arrays.size() || p_arrays.size() != state.first_moment.size()) {
    throw ShapeError("adamw_step: parameter, gradient and state layouts differ");
  }
  for (std::size_t a = 0; a < g_arrays.size(); ++a) {
    if (g_arrays[a].values.size() != p_arrays[a].values.size()) {
      throw ShapeError("adamw_step: shape mismatch for " + p_arrays[a].name);
    }
    for (T g : g_arrays[a].values) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in " + g_arrays[a].name);
      }
    }
  }

  state.step += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const T bc1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(state.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(state.step)));
  const T decay = static_cast<T>(1.0 - lr * config.weight_decay);
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(config.adam_eps);
  for (std::size_t a = 0; a < p_arrays.size(); ++a) {
    auto p = p_arrays[a].values;
    const auto g = g_arrays[a].values;
    auto& m = state.first_moment[a];
    auto& v = state.second_moment[a];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1.0 - b1) * g[i];
      v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1.0 - b2) * g[i] * g[i];
      p[i] *= decay;
      p[i] -= step * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
  if (params.gem_p.size() > 0) {
    params.gem_p(0) = std::max(params.gem_p(0), T(1));
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adamw_step<float>(EncoderParams<float>&, const EncoderParams<float>&, OptimizerState<float>&, double,
                                const TrainConfig&);
template void adamw_step<double>(EncoderParams<double>&, const EncoderParams<double>&, OptimizerState<double>&,
                                 double, const TrainConfig&);

// --- early stopping / history ---------------------------------------------------

bool EarlyStopping::update(std::size_t epoch, double metric) {
  if (best_epoch_ == 0 || metric > best_ + min_improvement_) {
    best_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

json EpochRecord::to_json() const {
  return json{{"epoch", epoch}, {"train_loss", train_loss}, {"val_map", val_map}, {"lr", lr}};
}

// --- training loop -------------------------------------------------------------

double validation_map(const EncoderParams<float>& params, const EncoderConfig& config, const FeatureStore& store,
                      std::size_t k) {
  const auto ids = store.manifest().track_ids(Split::val);
  std::vector<Embedding> firsts(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    firsts[i] = embed_window(params, config, first_window(*store.get(ids[i]), k, ids[i]));
  });
  EmbeddingSet set;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    set[ids[i]] = {std::move(firsts[i])};
  }
  return map_eval(distance_matrix(set, ids, ids), store.manifest(), BootstrapOptions{1, 0.95, 0}).map;
}

namespace {

bool has_eval_query(const DatasetManifest& manifest, Split split) {
  std::map<std::string, std::size_t> sizes;
  for (const auto& r : manifest.records) {
    if (r.split == split && ++sizes[r.clique_id] >= 2) {
      return true;
    }
  }
  return false;
}

}  // namespace

TrainResult train(const TrainConfig& config, const FeatureStore& store, const TrainOptions& options) {
  config.validate();
  const auto& manifest = store.manifest();
  if (!has_eval_query(manifest, Split::val)) {
    throw ConfigError("validation split needs at least one clique with two or more members");
  }
  const auto trainable = manifest.trainable_cliques();
  if (trainable.size() < config.batch_size / 2) {
    throw ConfigError("need " + std::to_string(config.batch_size / 2) + " trainable cliques, have " +
                      std::to_string(trainable.size()));
  }
  const std::size_t per_batch = config.batch_size / 2;
  const std::size_t batches_per_epoch = (trainable.size() + per_batch - 1) / per_batch;

  TrainResult result;
  result.best.config = config.encoder;
  result.best.metadata = json{{"train_config", config.to_json()}};
  auto params = init_params<float>(config.encoder, config.seed);
  auto state = OptimizerState<float>::zeros_like(params);
  Rng rng(Rng::splitmix(config.seed ^ 0x7261696eULL));
  EarlyStopping stopper(config.patience, config.min_improvement);

  std::ofstream history_out;
  if (!options.history_path.empty()) {
    history_out = io::open_out(options.history_path);
  }
  auto save_best = [&] {
    if (!options.checkpoint_path.empty()) {
      save_checkpoint(result.best, options.checkpoint_path);
    }
  };
  result.best.params = params;

  const BatchLossFn<float> loss_fn = [&](const std::vector<RowVector<float>>& z, std::vector<RowVector<float>>& dz) {
    const auto pairs = adjacent_pairs(z.size());
    return config.loss == LossKind::nt_xent ? nt_xent(z, pairs, config.temperature, &dz)
                                            : batch_triplet(z, pairs, config.triplet_margin, &dz);
  };

  try {
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
      const double lr = lr_at_epoch(epoch - 1, config);
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < batches_per_epoch; ++b) {
        const auto batch = build_batch(trainable, store, config.batch_size, config.k, rng);
        std::vector<Matrix<float>> windows;
        std::vector<ForwardMode> modes;
        for (const auto& w : batch.windows) {
          windows.push_back(window_matrix<float>(w));
          modes.push_back(ForwardMode::training(rng.fork()));
        }
        auto grads = compute_gradients(params, config.encoder, loss_fn, windows, modes);
        adamw_step(params, grads.grads, state, lr, config);
        loss_sum += static_cast<double>(grads.loss);
      }
      EpochRecord rec{epoch, loss_sum / static_cast<double>(batches_per_epoch),
                      validation_map(params, config.encoder, store, config.k), lr};
      result.history.epochs.push_back(rec);
      if (history_out.is_open()) {
        history_out << rec.to_json().dump() << '\n' << std::flush;
      }
      if (options.on_epoch) {
        options.on_epoch(rec);
      }
      if (stopper.update(epoch, rec.val_map)) {
        result.best.params = params;
        result.best.metadata["best_epoch"] = epoch;
        result.best.metadata["best_val_map"] = rec.val_map;
        save_best();
      }
      if (stopper.should_stop()) {
        result.history.stopped_reason = "patience";
        break;
      }
    }
  } catch (const Error&) {
    if (stopper.best_epoch() > 0) {
      save_best();
    }
    throw;
  }
  if (result.history.stopped_reason.empty()) {
    result.history.stopped_reason = "max_epochs";
  }
  result.history.best_epoch = stopper.best_epoch();
  result.history.best_val_map = stopper.best_value();
  return result;
}

}  // namespace wealy
