// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include <doctest.h>

#include "oracles.hpp"
#include "wealy/error.hpp"
#include "wealy/fusion.hpp"
#include "wealy/random.hpp"
#include "wealy/retrieval.hpp"

using namespace wealy;

namespace {

DistanceMatrix make(std::vector<std::string> q, std::vector<std::string> c, std::vector<float> v) {
  DistanceMatrix dm;
  dm.query_ids = std::move(q);
  dm.candidate_ids = std::move(c);
  dm.values = std::move(v);
  return dm;
}

}  // namespace

TEST_CASE("fuse arithmetic") {
  const auto a = make({"x"}, {"x", "y"}, {0.2f, 0.5f});
  const auto b = make({"x"}, {"x", "y"}, {0.4f, 0.1f});
  const auto f = fuse(a, b, 1.5);
  CHECK(f.values[0] == doctest::Approx(0.8f));
  CHECK(f.values[1] == doctest::Approx(0.65f));
  const auto zero = fuse(a, b, 0.0);
  CHECK(std::memcmp(zero.values.data(), a.values.data(), 8) == 0);
  CHECK_THROWS_AS(fuse(a, b, -1.0), DomainError);
  CHECK_THROWS_AS(fuse(a, make({"x"}, {"y", "x"}, {0.1f, 0.4f}), 1.0), AlignmentError);
}

TEST_CASE("property: fuse with alpha 0 reproduces the audio matrix bit for bit") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    std::vector<float> va(12), vb(12);
    for (auto& x : va) x = static_cast<float>(rng.normal());
    for (auto& x : vb) x = static_cast<float>(rng.normal());
    va[0] = -0.0f;
    const auto a = make({"1", "2", "3"}, {"a", "b", "c", "d"}, va);
    const auto f = fuse(a, make({"1", "2", "3"}, {"a", "b", "c", "d"}, vb), 0.0);
    CHECK(std::memcmp(f.values.data(), va.data(), va.size() * 4) == 0);
  }
}

TEST_CASE("align_matrices") {
  const auto a = make({"p", "q"}, {"x", "y", "z"}, {1, 2, 3, 4, 5, 6});
  SUBCASE("already aligned") {
    const auto [a2, b2] = align_matrices(a, a);
    CHECK(b2.values == a.values);
    CHECK(b2.candidate_ids == a.candidate_ids);
  }
  SUBCASE("reversed order") {
    const auto b = make({"q", "p"}, {"z", "y", "x"}, {6, 5, 4, 3, 2, 1});
    const auto [a2, b2] = align_matrices(a, b);
    CHECK(a2.values == a.values);
    CHECK(b2.query_ids == a.query_ids);
    CHECK(b2.candidate_ids == a.candidate_ids);
    CHECK(b2.values == a.values);
  }
  SUBCASE("missing id is named") {
    const auto b = make({"p", "q"}, {"x", "y"}, {1, 2, 4, 5});
    try {
      align_matrices(a, b);
      FAIL("expected AlignmentError");
    } catch (const AlignmentError& e) {
      CHECK(std::string(e.what()).find("z") != std::string::npos);
    }
  }
}

TEST_CASE("fused ranking matches exhaustive recomputation") {
  // Audio ranks a1's partner second, lyrics ranks it third; their sum ranks it first.
  const std::vector<std::string> ids{"a1", "a2", "b1", "b2"};
  const std::vector<std::string> cliques{"A", "A", "B", "B"};
  const std::unordered_map<std::string, std::string> clique_of{{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}};
  const auto audio = make(ids, ids, {0, 0.4f, 0.3f, 0.9f,  //
                                     0.4f, 0, 0.9f, 0.9f,  //
                                     0.3f, 0.9f, 0, 0.5f,  //
                                     0.9f, 0.9f, 0.5f, 0});
  const auto lyrics = make(ids, ids, {0, 0.5f, 0.6f, 0.2f,  //
                                      0.5f, 0, 0.2f, 0.9f,  //
                                      0.6f, 0.2f, 0, 0.3f,  //
                                      0.2f, 0.9f, 0.3f, 0});
  const auto fused = fuse(audio, lyrics, 1.5);
  const auto r = map_eval(fused, clique_of);
  double sum = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    std::vector<double> row(4);
    for (std::size_t c = 0; c < 4; ++c) {
      row[c] = static_cast<double>(audio.at(q, c)) + 1.5 * static_cast<double>(lyrics.at(q, c));
    }
    sum += test::naive_query_ap(row, ids, cliques, q);
  }
  CHECK(r.map == doctest::Approx(sum / 4.0).epsilon(1e-12));
  CHECK(r.map > map_eval(audio, clique_of).map);
  CHECK(r.map > map_eval(lyrics, clique_of).map);

  const auto sweep = sweep_alpha(audio, lyrics, clique_of, 0.0, 2.0, 0.5);
  REQUIRE(sweep.size() == 5);
  CHECK(sweep[0].map == map_eval(audio, clique_of).map);
  CHECK(sweep[3].alpha == doctest::Approx(1.5));
  CHECK(sweep[3].map == r.map);
}
