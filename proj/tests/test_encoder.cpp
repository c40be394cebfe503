// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wealy/encoder.hpp"
#include "wealy/error.hpp"
#include "wealy/gradcheck.hpp"
#include "wealy/losses.hpp"
#include "wealy/parallel.hpp"

using namespace wealy;

namespace {

EncoderConfig tiny_config(Pooling pooling = Pooling::gem) {
  EncoderConfig c;
  c.d_in = 5;
  c.d_h = 8;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.d_ffn = 12;
  c.d_e = 6;
  c.dropout_p = 0.1;
  c.pooling = pooling;
  return c;
}

// Shape walk written out from the architecture description, independent of
// EncoderParams::arrays().
std::size_t expected_parameter_count(const EncoderConfig& c) {
  const auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  if (c.variant == Variant::avg_mlp) {
    return linear(c.d_in, c.d_h) + linear(c.d_h, c.d_e);
  }
  const std::size_t block = 2 * (2 * c.d_h) + 4 * linear(c.d_h, c.d_h) + linear(c.d_h, c.d_ffn) + linear(c.d_ffn, c.d_h);
  std::size_t n = linear(c.d_in, c.d_h) + c.n_blocks * block + 2 * c.d_h + linear(c.d_h, c.d_e);
  if (c.pooling == Pooling::gem) n += 1;
  if (c.pooling == Pooling::cls) n += c.d_h;
  return n;
}

// Moves every parameter away from its structured initial value so the
// gradient check exercises biases, gains and the pooling exponent.
void jitter(EncoderParams<double>& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& a : p.arrays()) {
    for (auto& v : a.values) {
      if (a.name == "pool.gem_p") {
        v = 2.5;
      } else if (a.name.find("gain") != std::string::npos) {
        v = 1.0 + 0.3 * rng.normal();
      } else {
        v += 0.2 * rng.normal();
      }
    }
  }
}

std::vector<Matrix<double>> random_windows(std::size_t n, std::size_t k, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix<double>> w;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix<double> m(k, d);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
    w.push_back(m);
  }
  return w;
}

BatchLossFn<double> ntxent_loss() {
  return [](const std::vector<RowVector<double>>& z, std::vector<RowVector<double>>& g) {
    return nt_xent<double>(z, adjacent_pairs(z.size()), 0.5, &g);
  };
}

}  // namespace

TEST_CASE("EncoderConfig validation") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  c.d_h = 65;
  c.n_heads = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.gem_p_init = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(init_params<float>(EncoderConfig{.d_h = 65}, 0), ConfigError);
}

TEST_CASE("EncoderConfig json round-trip") {
  auto c = tiny_config(Pooling::cls);
  c.variant = Variant::transformer;
  c.positional_encoding = false;
  CHECK(EncoderConfig::from_json(c.to_json()) == c);
  CHECK(EncoderConfig::from_json(nlohmann::json::object()) == EncoderConfig{});
}

TEST_CASE("init_params: determinism and parameter count") {
  const EncoderConfig full;
  const auto a = init_params<float>(full, 42);
  const auto b = init_params<float>(full, 42);
  const auto aa = a.arrays();
  const auto ba = b.arrays();
  REQUIRE(aa.size() == ba.size());
  for (std::size_t i = 0; i < aa.size(); ++i) {
    CHECK(aa[i].name == ba[i].name);
    CHECK(std::memcmp(aa[i].values.data(), ba[i].values.data(), aa[i].values.size_bytes()) == 0);
  }
  CHECK(a.parameter_count() == expected_parameter_count(full));
  // 1280*768+768 + 4*(4*768 + 4*(768*768+768) + 768*1024+1024 + 1024*768+768)
  //   + 2*768 + 1 + 768*512+512
  CHECK(a.parameter_count() == 17'139'457);

  const auto c = init_params<float>(full, 43);
  CHECK(c.input_proj.weight != a.input_proj.weight);

  for (auto pooling : {Pooling::gem, Pooling::mean, Pooling::cls}) {
    for (auto variant : {Variant::transformer, Variant::avg_mlp}) {
      auto cfg = tiny_config(pooling);
      cfg.variant = variant;
      const auto p = init_params<double>(cfg, 1);
      CHECK(p.parameter_count() == expected_parameter_count(cfg));
      std::size_t sum = 0;
      for (const auto& arr : p.arrays()) {
        std::size_t n = 1;
        for (auto s : arr.shape) n *= s;
        CHECK(n == arr.values.size());
        sum += n;
      }
      CHECK(sum == p.parameter_count());
    }
  }
}

TEST_CASE("init_params: Glorot bounds, zero biases, unit gains") {
  const auto cfg = tiny_config();
  const auto p = init_params<double>(cfg, 5);
  for (const auto& a : p.arrays()) {
    if (a.shape.size() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(a.shape[0] + a.shape[1]));
      for (double v : a.values) CHECK(std::abs(v) <= bound);
    } else if (a.name.find("bias") != std::string::npos) {
      for (double v : a.values) CHECK(v == 0.0);
    } else if (a.name.find("gain") != std::string::npos) {
      for (double v : a.values) CHECK(v == 1.0);
    }
  }
  CHECK(p.gem_p(0) == 3.0);
}

TEST_CASE("gem_pool values") {
  Matrix<double> col(2, 1);
  col << 1, 2;
  CHECK(gem_pool<double>(col, 3.0, 1e-6)(0) == doctest::Approx(std::cbrt(4.5)).epsilon(1e-12));
  CHECK(gem_pool<double>(col, 3.0, 1e-6)(0) == doctest::Approx(1.65096).epsilon(1e-5));

  Matrix<double> mx(2, 1);
  mx << 0.1, 0.9;
  CHECK(std::abs(gem_pool<double>(mx, 64.0, 1e-6)(0) - 0.9) < 0.01);

  CHECK_THROWS_AS(gem_pool<double>(col, 0.5, 1e-6), DomainError);
}

TEST_CASE("property: gem_pool identities and bounds") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto k = static_cast<Eigen::Index>(rng.range(1, 20));
    const auto d = static_cast<Eigen::Index>(rng.range(1, 6));
    Matrix<double> x(k, d);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < d; ++c) x(r, c) = rng.uniform(-1.0, 3.0);
    const double eps = 1e-6;
    const double p = rng.uniform(1.0, 64.0);
    const auto g = gem_pool<double>(x, p, eps);
    const Matrix<double> clamped = x.cwiseMax(eps);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double lo = clamped.col(c).minCoeff();
      const double hi = clamped.col(c).maxCoeff();
      CHECK(g(c) >= lo * (1 - 1e-12));
      CHECK(g(c) <= hi * (1 + 1e-12));
    }
    const Matrix<double> pos = x.cwiseAbs().array() + 0.01;
    const auto mean = gem_pool<double>(pos, 1.0, eps);
    for (Eigen::Index c = 0; c < d; ++c) {
      CHECK(mean(c) == doctest::Approx(pos.col(c).mean()).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward: shapes, purity, dropout") {
  for (auto pooling : {Pooling::gem, Pooling::mean, Pooling::cls}) {
    const auto cfg = tiny_config(pooling);
    const auto p = init_params<double>(cfg, 2);
    const auto w = random_windows(1, 7, cfg.d_in, 3)[0];
    const auto z1 = forward(p, cfg, w);
    const auto z2 = forward(p, cfg, w);
    CHECK(z1.size() == static_cast<Eigen::Index>(cfg.d_e));
    CHECK(z1 == z2);
    const auto t1 = forward(p, cfg, w, ForwardMode::training(11));
    const auto t2 = forward(p, cfg, w, ForwardMode::training(11));
    const auto t3 = forward(p, cfg, w, ForwardMode::training(12));
    CHECK(t1 == t2);
    CHECK(t1 != t3);
    CHECK(t1 != z1);
  }
  const auto cfg = tiny_config();
  const auto p = init_params<double>(cfg, 2);
  CHECK_THROWS_AS(forward(p, cfg, random_windows(1, 7, cfg.d_in + 1, 3)[0]), ShapeError);
  Matrix<double> bad = random_windows(1, 4, cfg.d_in, 3)[0];
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(forward(p, cfg, bad), NumericError);
}

TEST_CASE("forward: avg_mlp depends only on the column mean") {
  auto cfg = tiny_config();
  cfg.variant = Variant::avg_mlp;
  const auto p = init_params<double>(cfg, 4);
  auto w = random_windows(1, 6, cfg.d_in, 1)[0];
  const auto z = forward(p, cfg, w);
  w.row(0).swap(w.row(5));
  CHECK((forward(p, cfg, w) - z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(z.size() == static_cast<Eigen::Index>(cfg.d_e));
}

TEST_CASE("forward: mean pooling without positional encoding is order invariant") {
  auto cfg = tiny_config(Pooling::mean);
  cfg.positional_encoding = false;
  const auto p = init_params<double>(cfg, 4);
  auto w = random_windows(1, 6, cfg.d_in, 1)[0];
  const auto z = forward(p, cfg, w);
  w.row(1).swap(w.row(4));
  CHECK((forward(p, cfg, w) - z).cwiseAbs().maxCoeff() < 1e-12);
  cfg.positional_encoding = true;
  CHECK((forward(p, cfg, w) - forward(p, cfg, random_windows(1, 6, cfg.d_in, 1)[0])).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("float and double forward agree") {
  const auto cfg = tiny_config();
  const auto pd = init_params<double>(cfg, 8);
  const auto pf = pd.cast<float>();
  const auto wd = random_windows(1, 9, cfg.d_in, 2)[0];
  const Matrix<float> wf = wd.cast<float>();
  const auto zd = forward(pd, cfg, wd);
  const auto zf = forward(pf, cfg, wf);
  CHECK((zd - zf.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("compute_gradients: constant loss gives zero gradients") {
  const auto cfg = tiny_config();
  const auto p = init_params<double>(cfg, 1);
  const BatchLossFn<double> constant = [](const auto& z, auto& g) {
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = RowVector<double>::Zero(z[i].size());
    return 3.0;
  };
  const auto r = compute_gradients(p, cfg, constant, random_windows(4, 4, cfg.d_in, 0),
                                   std::vector<ForwardMode>(4, ForwardMode::eval()));
  CHECK(r.loss == 3.0);
  for (const auto& a : r.grads.arrays()) {
    for (double v : a.values) CHECK(v == 0.0);
  }
  const BatchLossFn<double> nan_loss = [](const auto&, auto&) { return std::nan(""); };
  CHECK_THROWS_AS(compute_gradients(p, cfg, nan_loss, random_windows(2, 4, cfg.d_in, 0),
                                    std::vector<ForwardMode>(2, ForwardMode::eval())),
                  NumericError);
}

TEST_CASE("compute_gradients is independent of the worker count") {
  const auto cfg = tiny_config();
  auto p = init_params<double>(cfg, 1);
  jitter(p, 2);
  const auto windows = random_windows(8, 5, cfg.d_in, 3);
  std::vector<ForwardMode> modes;
  for (int i = 0; i < 8; ++i) modes.push_back(ForwardMode::training(100 + i));
  set_worker_count(1);
  const auto one = compute_gradients(p, cfg, ntxent_loss(), windows, modes);
  set_worker_count(4);
  const auto four = compute_gradients(p, cfg, ntxent_loss(), windows, modes);
  set_worker_count(0);
  CHECK(one.loss == four.loss);
  const auto a = one.grads.arrays();
  const auto b = four.grads.arrays();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size_bytes()) == 0);
  }
}

TEST_CASE("gradient check against central differences") {
  const auto windows = random_windows(4, 4, 5, 21);
  for (auto pooling : {Pooling::gem, Pooling::mean, Pooling::cls}) {
    for (bool train : {false, true}) {
      const std::string pooling_name = to_string(pooling);
      CAPTURE(pooling_name);
      CAPTURE(train);
      const auto cfg = tiny_config(pooling);
      auto p = init_params<double>(cfg, 3);
      jitter(p, 4);
      std::vector<ForwardMode> modes;
      for (int i = 0; i < 4; ++i) modes.push_back(train ? ForwardMode::training(70 + i) : ForwardMode::eval());
      const auto report = check_gradients(p, cfg, ntxent_loss(), windows, modes);
      CHECK(report.entries.size() == p.arrays().size());
      for (const auto& e : report.entries) {
        CAPTURE(e.name);
        CHECK(e.rel_error <= 1e-4);
      }
      if (pooling == Pooling::gem) {
        CHECK(std::any_of(report.entries.begin(), report.entries.end(),
                          [](const auto& e) { return e.name == "pool.gem_p"; }));
      }
    }
  }
  SUBCASE("avg_mlp") {
    auto cfg = tiny_config();
    cfg.variant = Variant::avg_mlp;
    auto p = init_params<double>(cfg, 3);
    jitter(p, 4);
    std::vector<ForwardMode> modes;
    for (int i = 0; i < 4; ++i) modes.push_back(ForwardMode::training(70 + i));
    const auto report = check_gradients(p, cfg, ntxent_loss(), windows, modes);
    CHECK(report.entries.size() == 4);
    CHECK(report.max_rel_error() <= 1e-6);
  }
}

TEST_CASE("embed_window matches forward in eval mode") {
  const auto cfg = tiny_config();
  const auto p = init_params<float>(cfg, 1);
  Rng rng(2);
  const auto seq = test::random_sequence(10, cfg.d_in, rng);
  const auto w = first_window(seq, 10, "t");
  const auto e = embed_window(p, cfg, w);
  const auto z = forward(p, cfg, window_matrix<float>(w));
  REQUIRE(e.values.size() == cfg.d_e);
  for (std::size_t i = 0; i < cfg.d_e; ++i) CHECK(e.values[i] == z(static_cast<Eigen::Index>(i)));
  CHECK(e.source_track == "t");
}
