// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "wealy/checkpoint.hpp"
#include "wealy/error.hpp"
#include "wealy/losses.hpp"
#include "wealy/parallel.hpp"
#include "wealy/synth.hpp"
#include "wealy/trainer.hpp"

using namespace wealy;
using wealy::test::TempDir;

namespace {

EncoderConfig tiny_encoder(std::size_t d_in) {
  EncoderConfig c;
  c.d_in = d_in;
  c.d_h = 8;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.d_e = 8;
  return c;
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_cliques = 20;
  s.versions_min = 2;
  s.versions_max = 3;
  s.d = 8;
  s.m_min = 20;
  s.m_max = 40;
  s.signature_dim = 4;
  s.nuisance_dim = 2;
  s.noise_sigma = 0.3;
  s.lyric_words = 12;
  s.seed = seed;
  return s;
}

TrainConfig tiny_train(std::size_t d_in) {
  TrainConfig c;
  c.encoder = tiny_encoder(d_in);
  c.k = 8;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.warmup_epochs = 1;
  c.lr_base = 1e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("lr schedule reference points") {
  TrainConfig c;
  CHECK(lr_at_epoch(49, c) == 1e-4);
  CHECK(std::abs(lr_at_epoch(999, c) - 1e-6) <= 1e-9);
  CHECK(lr_at_epoch(525, c) == doctest::Approx(5.05e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(0, c) == doctest::Approx(2e-6));
  CHECK_THROWS_AS(lr_at_epoch(1000, c), DomainError);
}

TEST_CASE("property: lr rises during warmup and falls afterwards") {
  TrainConfig c;
  for (std::size_t e = 1; e < c.max_epochs; ++e) {
    const double prev = lr_at_epoch(e - 1, c);
    const double cur = lr_at_epoch(e, c);
    if (e < c.warmup_epochs) {
      CHECK(cur > prev);
    } else {
      CHECK(cur <= prev);
    }
    CHECK(cur >= c.lr_min);
    CHECK(cur <= c.lr_base);
  }
}

TEST_CASE("TrainConfig json") {
  TrainConfig c = tiny_train(8);
  c.loss = LossKind::triplet;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"lr_bsae", 1.0}}), ConfigError);
  CHECK(TrainConfig::from_json({{"tau", 0.2}}).temperature == 0.2);
  CHECK_THROWS_AS(TrainConfig::from_json({{"batch_size", 7}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"loss", "hinge"}}), ConfigError);
}

TEST_CASE("EarlyStopping patience rule") {
  EarlyStopping es(20, 1e-6);
  std::vector<double> metrics{0.5, 0.6};
  for (int i = 0; i < 20; ++i) metrics.push_back(i % 2 == 0 ? 0.6 : 0.55);
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= metrics.size() + 5; ++e) {
    es.update(e, e <= metrics.size() ? metrics[e - 1] : 0.1);
    if (es.should_stop()) {
      stopped = e;
      break;
    }
  }
  CHECK(stopped == 22);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_value() == 0.6);
}

TEST_CASE("AdamW step") {
  auto cfg = tiny_encoder(4);
  TrainConfig tc;
  tc.weight_decay = 0.01;
  const double lr = 0.1;

  SUBCASE("zero gradient applies decoupled decay only") {
    auto p = init_params<double>(cfg, 1);
    const auto before = p;
    auto state = OptimizerState<double>::zeros_like(p);
    adamw_step(p, p.zeros_like(), state, lr, tc);
    const auto a = p.arrays();
    const auto b = before.arrays();
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a[i].values.size(); ++j) {
        if (a[i].name == "pool.gem_p") continue;
        CHECK(a[i].values[j] == b[i].values[j] * (1.0 - lr * tc.weight_decay));
      }
    }
  }
  SUBCASE("no decay and zero gradient leaves params unchanged") {
    tc.weight_decay = 0.0;
    auto p = init_params<double>(cfg, 1);
    const auto before = p;
    auto state = OptimizerState<double>::zeros_like(p);
    adamw_step(p, p.zeros_like(), state, lr, tc);
    CHECK(p.input_proj.weight == before.input_proj.weight);
    CHECK(p.gem_p == before.gem_p);
  }
  SUBCASE("matches a scalar reference over several steps") {
    auto p = init_params<double>(cfg, 2);
    auto state = OptimizerState<double>::zeros_like(p);
    auto ref = p;
    std::vector<std::vector<double>> m, v;
    for (const auto& a : ref.arrays()) {
      m.emplace_back(a.values.size(), 0.0);
      v.emplace_back(a.values.size(), 0.0);
    }
    Rng rng(3);
    for (int step = 1; step <= 5; ++step) {
      auto g = p.zeros_like();
      for (auto& a : g.arrays())
        for (auto& x : a.values) x = rng.normal();
      adamw_step(p, g, state, lr, tc);
      auto ra = ref.arrays();
      const auto ga = g.arrays();
      for (std::size_t i = 0; i < ra.size(); ++i) {
        for (std::size_t j = 0; j < ra[i].values.size(); ++j) {
          double& w = ra[i].values[j];
          const double gj = ga[i].values[j];
          w *= 1.0 - lr * tc.weight_decay;
          m[i][j] = tc.adam_beta1 * m[i][j] + (1 - tc.adam_beta1) * gj;
          v[i][j] = tc.adam_beta2 * v[i][j] + (1 - tc.adam_beta2) * gj * gj;
          const double mh = m[i][j] / (1 - std::pow(tc.adam_beta1, step));
          const double vh = v[i][j] / (1 - std::pow(tc.adam_beta2, step));
          w -= lr * mh / (std::sqrt(vh) + tc.adam_eps);
          if (ra[i].name == "pool.gem_p") w = std::max(w, 1.0);
        }
      }
    }
    const auto pa = p.arrays();
    const auto ra = ref.arrays();
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t j = 0; j < pa[i].values.size(); ++j)
        CHECK(pa[i].values[j] == doctest::Approx(ra[i].values[j]).epsilon(1e-12));
  }
  SUBCASE("constant gradient: update approaches lr * sign(g)") {
    tc.weight_decay = 0.0;
    auto p = init_params<double>(cfg, 2);
    auto state = OptimizerState<double>::zeros_like(p);
    auto g = p.zeros_like();
    for (auto& a : g.arrays())
      for (auto& x : a.values) x = -0.5;
    for (int i = 0; i < 200; ++i) adamw_step(p, g, state, 1e-3, tc);
    const double w0 = p.input_proj.weight(0, 0);
    adamw_step(p, g, state, 1e-3, tc);
    CHECK(p.input_proj.weight(0, 0) - w0 == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("gem_p is clamped to 1") {
    auto p = init_params<double>(cfg, 2);
    p.gem_p(0) = 1.0001;
    auto state = OptimizerState<double>::zeros_like(p);
    auto g = p.zeros_like();
    g.gem_p(0) = 10.0;
    adamw_step(p, g, state, 0.5, tc);
    CHECK(p.gem_p(0) == 1.0);
  }
  SUBCASE("non-finite gradient") {
    auto p = init_params<double>(cfg, 2);
    auto state = OptimizerState<double>::zeros_like(p);
    auto g = p.zeros_like();
    g.output_proj.bias(0) = std::nan("");
    CHECK_THROWS_AS(adamw_step(p, g, state, 0.5, tc), NumericError);
  }
}

TEST_CASE("build_batch") {
  TempDir tmp;
  const auto manifest = synth_dataset(small_spec(1), tmp.path());
  FeatureStore store(manifest);
  const auto trainable = store.manifest().trainable_cliques();
  REQUIRE(trainable.size() >= 4);
  const auto clique_of = store.manifest().clique_map();

  Rng rng(7);
  const auto b = build_batch(trainable, store, 8, 8, rng);
  REQUIRE(b.windows.size() == 8);
  CHECK_NOTHROW(validate_pairing(b.pair_of));
  std::set<std::string> cliques;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto j = b.pair_of[i];
    CHECK(clique_of.at(b.windows[i].source_track) == clique_of.at(b.windows[j].source_track));
    CHECK(b.windows[i].source_track != b.windows[j].source_track);
    CHECK(b.windows[i].k == 8);
    cliques.insert(clique_of.at(b.windows[i].source_track));
  }
  CHECK(cliques.size() == 4);

  Rng r1(9), r2(9);
  const auto x = build_batch(trainable, store, 8, 8, r1);
  const auto y = build_batch(trainable, store, 8, 8, r2);
  CHECK(x.windows == y.windows);
  CHECK(x.pair_of == y.pair_of);

  SUBCASE("a two-version clique contributes both versions") {
    CliqueList one_pair{{trainable[0].first, {trainable[0].second[0], trainable[0].second[1]}}};
    const auto only = build_batch(one_pair, store, 2, 8, rng);
    std::set<std::string> tracks{only.windows[0].source_track, only.windows[1].source_track};
    CHECK(tracks == std::set<std::string>{trainable[0].second[0], trainable[0].second[1]});
  }
  SUBCASE("too few cliques") {
    CHECK_THROWS_AS(build_batch(trainable, store, 2 * (trainable.size() + 1), 8, rng), ConfigError);
  }
}

TEST_CASE("train: history, checkpoint, determinism") {
  TempDir tmp;
  const auto manifest = synth_dataset(small_spec(2), tmp / "data");
  FeatureStore store(manifest);
  const auto config = tiny_train(8);

  set_worker_count(1);
  TrainOptions opts;
  opts.checkpoint_path = tmp / "run1" / "best.wckp";
  opts.history_path = tmp / "run1" / "history.jsonl";
  std::size_t callbacks = 0;
  opts.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  const auto r1 = train(config, store, opts);
  const auto r2 = train(config, store, {tmp / "run2" / "best.wckp", tmp / "run2" / "history.jsonl", {}});
  set_worker_count(0);

  REQUIRE(r1.history.epochs.size() == 3);
  CHECK(callbacks == 3);
  CHECK(r1.history.stopped_reason == "max_epochs");
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(r1.history.epochs[e].epoch == e + 1);
    CHECK(r1.history.epochs[e].lr == lr_at_epoch(e, config));
    CHECK(r1.history.epochs[e].to_json() == r2.history.epochs[e].to_json());
    CHECK(std::isfinite(r1.history.epochs[e].train_loss));
  }
  CHECK(r1.history.best_epoch == r2.history.best_epoch);
  CHECK(test::slurp(tmp / "run1" / "history.jsonl") == test::slurp(tmp / "run2" / "history.jsonl"));
  CHECK(test::slurp(tmp / "run1" / "best.wckp") == test::slurp(tmp / "run2" / "best.wckp"));

  const auto loaded = load_checkpoint(opts.checkpoint_path);
  CHECK(loaded.config == config.encoder);
  CHECK(loaded.params.input_proj.weight == r1.best.params.input_proj.weight);
  CHECK(validation_map(loaded.params, loaded.config, store, config.k) ==
        doctest::Approx(r1.history.best_val_map).epsilon(1e-12));
}

TEST_CASE("train: triplet loss runs") {
  TempDir tmp;
  FeatureStore store(synth_dataset(small_spec(3), tmp.path()));
  auto config = tiny_train(8);
  config.loss = LossKind::triplet;
  config.max_epochs = 2;
  const auto r = train(config, store);
  CHECK(r.history.epochs.size() == 2);
}
