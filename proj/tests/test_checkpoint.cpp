// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include <doctest.h>

#include "support.hpp"
#include "wealy/checkpoint.hpp"
#include "wealy/error.hpp"

using namespace wealy;
using wealy::test::TempDir;

TEST_CASE("checkpoint round-trip of the default config is bit exact") {
  TempDir tmp;
  Checkpoint c{EncoderConfig{}, init_params<float>(EncoderConfig{}, 3), {{"note", "x"}}};
  save_checkpoint(c, tmp / "a.wckp");
  const auto back = load_checkpoint(tmp / "a.wckp");
  CHECK(back.config == c.config);
  CHECK(back.metadata == c.metadata);
  const auto a = c.params.arrays();
  const auto b = back.params.arrays();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].shape == b[i].shape);
    CHECK(std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size_bytes()) == 0);
  }
  save_checkpoint(back, tmp / "b.wckp");
  CHECK(test::slurp(tmp / "a.wckp") == test::slurp(tmp / "b.wckp"));
}

TEST_CASE("avg_mlp checkpoint reproduces embeddings after reload") {
  TempDir tmp;
  EncoderConfig cfg;
  cfg.d_in = 6;
  cfg.d_h = 10;
  cfg.d_e = 4;
  cfg.variant = Variant::avg_mlp;
  const Checkpoint c{cfg, init_params<float>(cfg, 1), {}};
  save_checkpoint(c, tmp / "m.wckp");
  const auto back = load_checkpoint(tmp / "m.wckp");
  Rng rng(2);
  const auto w = first_window(test::random_sequence(12, 6, rng), 12);
  CHECK(embed_window(c.params, cfg, w).values == embed_window(back.params, back.config, w).values);
}

TEST_CASE("checkpoint errors") {
  TempDir tmp;
  EncoderConfig cfg;
  cfg.d_in = 4;
  cfg.d_h = 4;
  cfg.n_blocks = 1;
  cfg.n_heads = 2;
  cfg.d_ffn = 4;
  cfg.d_e = 2;
  save_checkpoint({cfg, init_params<float>(cfg, 0), {}}, tmp / "c.wckp");
  const auto bytes = test::slurp(tmp / "c.wckp");

  SUBCASE("version 99") {
    auto b = bytes;
    b[4] = 99;
    test::spit(tmp / "v.wckp", b);
    CHECK_THROWS_AS(load_checkpoint(tmp / "v.wckp"), FormatError);
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[1] = 'Z';
    test::spit(tmp / "m.wckp", b);
    CHECK_THROWS_AS(load_checkpoint(tmp / "m.wckp"), FormatError);
  }
  SUBCASE("truncated array") {
    auto b = bytes;
    b.resize(b.size() - 3);
    test::spit(tmp / "t.wckp", b);
    CHECK_THROWS_AS(load_checkpoint(tmp / "t.wckp"), StorageError);
  }
  SUBCASE("shape mismatch against the stored config") {
    Checkpoint c{cfg, init_params<float>(cfg, 0), {}};
    cfg.d_e = 3;
    c.config = cfg;
    save_checkpoint(c, tmp / "s.wckp");
    CHECK_THROWS_AS(load_checkpoint(tmp / "s.wckp"), FormatError);
  }
}
