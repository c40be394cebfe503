// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "wealy/error.hpp"
#include "wealy/parallel.hpp"
#include "wealy/random.hpp"

namespace wealy {

using nlohmann::json;

const char* to_string(Pooling p) {
  switch (p) {
    case Pooling::gem: return "gem";
    case Pooling::mean: return "mean";
    case Pooling::cls: return "cls";
  }
  return "?";
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::transformer: return "transformer";
    case Variant::avg_mlp: return "avg_mlp";
  }
  return "?";
}

Pooling parse_pooling(const std::string& s) {
  if (s == "gem") return Pooling::gem;
  if (s == "mean") return Pooling::mean;
  if (s == "cls") return Pooling::cls;
  throw ConfigError("unknown pooling \"" + s + "\"");
}

Variant parse_variant(const std::string& s) {
  if (s == "transformer") return Variant::transformer;
  if (s == "avg_mlp") return Variant::avg_mlp;
  throw ConfigError("unknown variant \"" + s + "\"");
}

void EncoderConfig::validate() const {
  if (d_in < 1 || d_h < 1 || n_heads < 1 || d_ffn < 1 || d_e < 1) {
    throw ConfigError("encoder dimensions must all be >= 1");
  }
  if (variant == Variant::transformer && n_blocks < 1) {
    throw ConfigError("transformer variant needs n_blocks >= 1");
  }
  if (variant == Variant::transformer && d_h % n_heads != 0) {
    throw ConfigError("d_h = " + std::to_string(d_h) + " is not divisible by n_heads = " + std::to_string(n_heads));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("dropout_p must lie in [0, 1)");
  }
  if (!(gem_p_init >= 1.0) || !std::isfinite(gem_p_init)) {
    throw ConfigError("gem_p_init must be >= 1");
  }
  if (!(gem_eps > 0.0)) {
    throw ConfigError("gem_eps must be > 0");
  }
}

json EncoderConfig::to_json() const {
  return json{{"d_in", d_in},
              {"d_h", d_h},
              {"n_blocks", n_blocks},
              {"n_heads", n_heads},
              {"d_ffn", d_ffn},
              {"dropout_p", dropout_p},
              {"d_e", d_e},
              {"pooling", to_string(pooling)},
              {"variant", to_string(variant)},
              {"gem_p_init", gem_p_init},
              {"gem_eps", gem_eps},
              {"positional_encoding", positional_encoding}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  try {
    c.d_in = j.value("d_in", c.d_in);
    c.d_h = j.value("d_h", c.d_h);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.d_e = j.value("d_e", c.d_e);
    c.pooling = parse_pooling(j.value("pooling", std::string(to_string(c.pooling))));
    c.variant = parse_variant(j.value("variant", std::string(to_string(c.variant))));
    c.gem_p_init = j.value("gem_p_init", c.gem_p_init);
    c.gem_eps = j.value("gem_eps", c.gem_eps);
    c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- parameter bookkeeping ---------------------------------------------------

namespace {

template <typename T, typename P, typename F>
void visit_arrays(P& p, F&& f) {
  auto linear = [&](const std::string& name, auto& lin) {
    f(name + ".weight", std::vector<std::size_t>{static_cast<std::size_t>(lin.weight.rows()),
                                                 static_cast<std::size_t>(lin.weight.cols())},
      lin.weight.data(), static_cast<std::size_t>(lin.weight.size()));
    f(name + ".bias", std::vector<std::size_t>{static_cast<std::size_t>(lin.bias.size())}, lin.bias.data(),
      static_cast<std::size_t>(lin.bias.size()));
  };
  auto vec = [&](const std::string& name, auto& v) {
    f(name, std::vector<std::size_t>{static_cast<std::size_t>(v.size())}, v.data(), static_cast<std::size_t>(v.size()));
  };
  auto norm = [&](const std::string& name, auto& ln) {
    vec(name + ".gain", ln.gain);
    vec(name + ".bias", ln.bias);
  };
  auto present = [](const auto& lin) { return lin.weight.size() > 0; };

  if (present(p.input_proj)) {
    linear("input_proj", p.input_proj);
  }
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    norm(pre + "norm1", b.norm1);
    linear(pre + "attn.query", b.query);
    linear(pre + "attn.key", b.key);
    linear(pre + "attn.value", b.value);
    linear(pre + "attn.out", b.attn_out);
    norm(pre + "norm2", b.norm2);
    linear(pre + "ffn.in", b.ffn_in);
    linear(pre + "ffn.out", b.ffn_out);
  }
  if (p.final_norm.gain.size() > 0) {
    norm("final_norm", p.final_norm);
  }
  if (p.gem_p.size() > 0) {
    vec("pool.gem_p", p.gem_p);
  }
  if (p.cls_token.size() > 0) {
    vec("cls_token", p.cls_token);
  }
  if (present(p.output_proj)) {
    linear("output_proj", p.output_proj);
  }
  if (present(p.mlp_hidden)) {
    linear("mlp.hidden", p.mlp_hidden);
    linear("mlp.out", p.mlp_out);
  }
}

template <typename T>
Linear<T> make_linear(std::size_t in, std::size_t out) {
  return {Matrix<T>::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)),
          RowVector<T>::Zero(static_cast<Eigen::Index>(out))};
}

template <typename T>
LayerNorm<T> make_norm(std::size_t d) {
  return {RowVector<T>::Ones(static_cast<Eigen::Index>(d)), RowVector<T>::Zero(static_cast<Eigen::Index>(d))};
}

template <typename T, typename U>
Linear<U> cast_linear(const Linear<T>& l) {
  return {l.weight.template cast<U>(), l.bias.template cast<U>()};
}

template <typename T, typename U>
LayerNorm<U> cast_norm(const LayerNorm<T>& l) {
  return {l.gain.template cast<U>(), l.bias.template cast<U>()};
}

}  // namespace

template <typename T>
std::vector<ParamArray<T>> EncoderParams<T>::arrays() {
  std::vector<ParamArray<T>> out;
  visit_arrays<T>(*this, [&](std::string name, std::vector<std::size_t> shape, T* data, std::size_t n) {
    out.push_back({std::move(name), std::move(shape), std::span<T>(data, n)});
  });
  return out;
}

template <typename T>
std::vector<ParamArray<const T>> EncoderParams<T>::arrays() const {
  std::vector<ParamArray<const T>> out;
  visit_arrays<T>(*this, [&](std::string name, std::vector<std::size_t> shape, const T* data, std::size_t n) {
    out.push_back({std::move(name), std::move(shape), std::span<const T>(data, n)});
  });
  return out;
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& a : arrays()) {
    n += a.values.size();
  }
  return n;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::zeros_like() const {
  EncoderParams<T> z = *this;
  for (auto& a : z.arrays()) {
    std::fill(a.values.begin(), a.values.end(), T(0));
  }
  return z;
}

template <typename T>
template <typename U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out;
  out.input_proj = cast_linear<T, U>(input_proj);
  for (const auto& b : blocks) {
    out.blocks.push_back({cast_norm<T, U>(b.norm1), cast_linear<T, U>(b.query), cast_linear<T, U>(b.key),
                          cast_linear<T, U>(b.value), cast_linear<T, U>(b.attn_out), cast_norm<T, U>(b.norm2),
                          cast_linear<T, U>(b.ffn_in), cast_linear<T, U>(b.ffn_out)});
  }
  out.final_norm = cast_norm<T, U>(final_norm);
  out.gem_p = gem_p.template cast<U>();
  out.cls_token = cls_token.template cast<U>();
  out.output_proj = cast_linear<T, U>(output_proj);
  out.mlp_hidden = cast_linear<T, U>(mlp_hidden);
  out.mlp_out = cast_linear<T, U>(mlp_out);
  return out;
}

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderParams<T> p;
  if (config.variant == Variant::avg_mlp) {
    p.mlp_hidden = make_linear<T>(config.d_in, config.d_h);
    p.mlp_out = make_linear<T>(config.d_h, config.d_e);
  } else {
    p.input_proj = make_linear<T>(config.d_in, config.d_h);
    for (std::size_t i = 0; i < config.n_blocks; ++i) {
      p.blocks.push_back({make_norm<T>(config.d_h), make_linear<T>(config.d_h, config.d_h),
                          make_linear<T>(config.d_h, config.d_h), make_linear<T>(config.d_h, config.d_h),
                          make_linear<T>(config.d_h, config.d_h), make_norm<T>(config.d_h),
                          make_linear<T>(config.d_h, config.d_ffn), make_linear<T>(config.d_ffn, config.d_h)});
    }
    p.final_norm = make_norm<T>(config.d_h);
    if (config.pooling == Pooling::gem) {
      p.gem_p = RowVector<T>::Constant(1, static_cast<T>(config.gem_p_init));
    }
    if (config.pooling == Pooling::cls) {
      p.cls_token = RowVector<T>::Zero(static_cast<Eigen::Index>(config.d_h));
    }
    p.output_proj = make_linear<T>(config.d_h, config.d_e);
  }

  Rng rng(seed);
  auto glorot = [&](std::span<T> values, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (T& v : values) {
      v = static_cast<T>(rng.uniform(-a, a));
    }
  };
  for (auto& arr : p.arrays()) {
    if (arr.shape.size() == 2) {
      glorot(arr.values, arr.shape[0], arr.shape[1]);
    } else if (arr.name == "cls_token") {
      glorot(arr.values, 1, arr.shape[0]);
    }
  }
  return p;
}

// --- forward / backward ------------------------------------------------------

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
const Matrix<T>& positional_table(std::size_t len, std::size_t dim) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, Matrix<T>> cache;
  auto [it, inserted] = cache.try_emplace({len, dim});
  if (inserted) {
    Matrix<T>& pe = it->second;
    pe.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(dim));
    for (std::size_t pos = 0; pos < len; ++pos) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
        const double angle = static_cast<double>(pos) * freq;
        pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
            static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
  }
  return it->second;
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
struct NormCache {
  Matrix<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <typename T>
Matrix<T> norm_forward(const LayerNorm<T>& ln, const Matrix<T>& x, NormCache<T>* cache) {
  const auto n = x.cols();
  Matrix<T> xhat(x.rows(), n);
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().sum() / static_cast<T>(n);
    rstd(r) = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  Matrix<T> y = (xhat.array().rowwise() * ln.gain.array()).rowwise() + ln.bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Matrix<T> norm_backward(const LayerNorm<T>& ln, const NormCache<T>& c, const Matrix<T>& dy, LayerNorm<T>& g) {
  g.gain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.bias += dy.colwise().sum();
  const Matrix<T> dxhat = dy.array().rowwise() * ln.gain.array();
  const auto n = static_cast<T>(dy.cols());
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T m1 = dxhat.row(r).sum() / n;
    const T m2 = dxhat.row(r).dot(c.xhat.row(r)) / n;
    dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
  }
  return dx;
}

template <typename T>
Matrix<T> linear_forward(const Linear<T>& l, const Matrix<T>& x) {
  Matrix<T> y(x.rows(), l.weight.cols());
  y.noalias() = x * l.weight;
  y.rowwise() += l.bias;
  return y;
}

template <typename T>
Matrix<T> linear_backward(const Linear<T>& l, const Matrix<T>& x, const Matrix<T>& dy, Linear<T>& g) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  Matrix<T> dx(dy.rows(), l.weight.rows());
  dx.noalias() = dy * l.weight.transpose();
  return dx;
}

/// Inverted-dropout mask (entries 0 or 1/(1-p)); empty when dropout is off.
template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (!rng || p <= 0.0) {
    return {};
  }
  Matrix<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng->bernoulli(p) ? T(0) : keep;
  }
  return m;
}

template <typename T>
struct BlockTape {
  Matrix<T> x_in;
  NormCache<T> n1;
  Matrix<T> a;  // norm1 output
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;  // per head, pre-dropout
  std::vector<Matrix<T>> masks;  // per head, empty when dropout is off
  Matrix<T> ctx;
  Matrix<T> x_mid;
  NormCache<T> n2;
  Matrix<T> b;  // norm2 output
  Matrix<T> h_pre;
  Matrix<T> ffn_mask;
  Matrix<T> h_drop;
};

template <typename T>
struct GemCache {
  Matrix<T> clamped;
  RowVector<T> pooled;
};

template <typename T>
struct Tape {
  // transformer
  Matrix<T> seq0;  // after projection, cls prepend and positional encoding
  std::vector<BlockTape<T>> blocks;
  NormCache<T> final_cache;
  Matrix<T> final_out;
  GemCache<T> gem;
  RowVector<T> pooled;
  // avg_mlp
  RowVector<T> mean_in;
  RowVector<T> mlp_pre;
  RowVector<T> mlp_mask;
  RowVector<T> mlp_drop;
};

template <typename T>
Matrix<T> block_forward(const EncoderBlock<T>& blk, const EncoderConfig& cfg, const Matrix<T>& x, Rng* rng,
                        BlockTape<T>* tape) {
  const auto L = x.rows();
  const auto H = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dh = static_cast<Eigen::Index>(cfg.d_h / cfg.n_heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  NormCache<T> n1;
  Matrix<T> a = norm_forward(blk.norm1, x, tape ? &n1 : nullptr);
  Matrix<T> q = linear_forward(blk.query, a);
  Matrix<T> k = linear_forward(blk.key, a);
  Matrix<T> v = linear_forward(blk.value, a);
  Matrix<T> ctx(L, x.cols());
  std::vector<Matrix<T>> probs, masks;
  for (Eigen::Index h = 0; h < H; ++h) {
    Matrix<T> s(L, L);
    s.noalias() = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    s *= scale;
    for (Eigen::Index r = 0; r < L; ++r) {
      const T mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    Matrix<T> mask = dropout_mask<T>(L, L, cfg.dropout_p, rng);
    if (mask.size() > 0) {
      ctx.middleCols(h * dh, dh).noalias() = (s.array() * mask.array()).matrix() * v.middleCols(h * dh, dh);
    } else {
      ctx.middleCols(h * dh, dh).noalias() = s * v.middleCols(h * dh, dh);
    }
    if (tape) {
      probs.push_back(std::move(s));
      masks.push_back(std::move(mask));
    }
  }
  Matrix<T> x_mid = x + linear_forward(blk.attn_out, ctx);

  NormCache<T> n2;
  Matrix<T> b = norm_forward(blk.norm2, x_mid, tape ? &n2 : nullptr);
  Matrix<T> h_pre = linear_forward(blk.ffn_in, b);
  Matrix<T> h_act = h_pre.unaryExpr([](T t) { return gelu(t); });
  Matrix<T> fmask = dropout_mask<T>(h_act.rows(), h_act.cols(), cfg.dropout_p, rng);
  Matrix<T> h_drop = fmask.size() > 0 ? Matrix<T>(h_act.array() * fmask.array()) : std::move(h_act);
  Matrix<T> out = x_mid + linear_forward(blk.ffn_out, h_drop);

  if (tape) {
    tape->x_in = x;
    tape->n1 = std::move(n1);
    tape->a = std::move(a);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->probs = std::move(probs);
    tape->masks = std::move(masks);
    tape->ctx = std::move(ctx);
    tape->x_mid = std::move(x_mid);
    tape->n2 = std::move(n2);
    tape->b = std::move(b);
    tape->h_pre = std::move(h_pre);
    tape->ffn_mask = std::move(fmask);
    tape->h_drop = std::move(h_drop);
  }
  return out;
}

template <typename T>
Matrix<T> block_backward(const EncoderBlock<T>& blk, const EncoderConfig& cfg, const BlockTape<T>& t,
                         const Matrix<T>& dout, EncoderBlock<T>& g) {
  const auto L = t.x_in.rows();
  const auto H = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dh = static_cast<Eigen::Index>(cfg.d_h / cfg.n_heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  // FFN branch: out = x_mid + ffn_out(drop(gelu(ffn_in(norm2(x_mid)))))
  Matrix<T> dh_drop = linear_backward(blk.ffn_out, t.h_drop, dout, g.ffn_out);
  if (t.ffn_mask.size() > 0) {
    dh_drop.array() *= t.ffn_mask.array();
  }
  const Matrix<T> dh_pre = dh_drop.array() * t.h_pre.unaryExpr([](T x) { return gelu_grad(x); }).array();
  const Matrix<T> db = linear_backward(blk.ffn_in, t.b, dh_pre, g.ffn_in);
  Matrix<T> dx_mid = dout + norm_backward(blk.norm2, t.n2, db, g.norm2);

  // attention branch: x_mid = x_in + attn_out(ctx)
  const Matrix<T> dctx = linear_backward(blk.attn_out, t.ctx, dx_mid, g.attn_out);
  Matrix<T> dq(L, t.q.cols()), dk(L, t.k.cols()), dv(L, t.v.cols());
  for (Eigen::Index h = 0; h < H; ++h) {
    const auto& p = t.probs[static_cast<std::size_t>(h)];
    const auto& mask = t.masks[static_cast<std::size_t>(h)];
    const auto dctx_h = dctx.middleCols(h * dh, dh);
    Matrix<T> dp(L, L);
    dp.noalias() = dctx_h * t.v.middleCols(h * dh, dh).transpose();
    if (mask.size() > 0) {
      dv.middleCols(h * dh, dh).noalias() = (p.array() * mask.array()).matrix().transpose() * dctx_h;
      dp.array() *= mask.array();
    } else {
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * dctx_h;
    }
    // softmax: ds = p * (dp - rowsum(dp * p))
    const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
    Matrix<T> ds = p.array() * (dp.array().colwise() - rs.array());
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() = ds * t.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * t.q.middleCols(h * dh, dh);
  }
  Matrix<T> da = linear_backward(blk.query, t.a, dq, g.query);
  da += linear_backward(blk.key, t.a, dk, g.key);
  da += linear_backward(blk.value, t.a, dv, g.value);
  return dx_mid + norm_backward(blk.norm1, t.n1, da, g.norm1);
}

template <typename T>
RowVector<T> gem_forward(const Matrix<T>& seq, T p, T eps, GemCache<T>* cache) {
  const auto L = seq.rows();
  Matrix<T> c = seq.cwiseMax(eps);
  RowVector<T> out(seq.cols());
  for (Eigen::Index j = 0; j < seq.cols(); ++j) {
    const T cmax = c.col(j).maxCoeff();
    const T s = (c.col(j).array() / cmax).pow(p).sum() / static_cast<T>(L);
    out(j) = cmax * std::pow(s, T(1) / p);
  }
  if (cache) {
    cache->clamped = std::move(c);
    cache->pooled = out;
  }
  return out;
}

template <typename T>
void check_finite(const RowVector<T>& z) {
  if (!z.allFinite()) {
    throw NumericError("non-finite value in encoder output");
  }
}

template <typename T>
RowVector<T> run_forward(const EncoderParams<T>& params, const EncoderConfig& cfg, const Matrix<T>& x,
                         ForwardMode mode, Tape<T>* tape) {
  if (static_cast<std::size_t>(x.cols()) != cfg.d_in) {
    throw ShapeError("window width " + std::to_string(x.cols()) + " != d_in " + std::to_string(cfg.d_in));
  }
  if (x.rows() < 1) {
    throw ShapeError("window has no rows");
  }
  Rng rng(mode.seed);
  Rng* drop = mode.train ? &rng : nullptr;

  if (cfg.variant == Variant::avg_mlp) {
    const RowVector<T> mean = x.colwise().mean();
    RowVector<T> pre = mean * params.mlp_hidden.weight + params.mlp_hidden.bias;
    RowVector<T> act = pre.unaryExpr([](T t) { return gelu(t); });
    Matrix<T> mask = dropout_mask<T>(1, act.cols(), cfg.dropout_p, drop);
    if (mask.size() > 0) {
      act.array() *= mask.row(0).array();
    }
    RowVector<T> z = act * params.mlp_out.weight + params.mlp_out.bias;
    check_finite(z);
    if (tape) {
      tape->mean_in = mean;
      tape->mlp_pre = std::move(pre);
      tape->mlp_mask = mask.size() > 0 ? RowVector<T>(mask.row(0)) : RowVector<T>();
      tape->mlp_drop = std::move(act);
    }
    return z;
  }

  Matrix<T> proj = linear_forward(params.input_proj, x);
  Matrix<T> seq;
  if (cfg.pooling == Pooling::cls) {
    seq.resize(proj.rows() + 1, proj.cols());
    seq.row(0) = params.cls_token;
    seq.bottomRows(proj.rows()) = proj;
  } else {
    seq = std::move(proj);
  }
  if (cfg.positional_encoding) {
    seq += positional_table<T>(static_cast<std::size_t>(seq.rows()), cfg.d_h);
  }
  if (tape) {
    tape->seq0 = seq;
    tape->blocks.resize(params.blocks.size());
  }
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    seq = block_forward(params.blocks[i], cfg, seq, drop, tape ? &tape->blocks[i] : nullptr);
  }
  Matrix<T> y = norm_forward(params.final_norm, seq, tape ? &tape->final_cache : nullptr);

  RowVector<T> pooled;
  switch (cfg.pooling) {
    case Pooling::gem:
      pooled = gem_forward(y, params.gem_p(0), static_cast<T>(cfg.gem_eps), tape ? &tape->gem : nullptr);
      break;
    case Pooling::mean:
      pooled = y.colwise().mean();
      break;
    case Pooling::cls:
      pooled = y.row(0);
      break;
  }
  RowVector<T> z = pooled * params.output_proj.weight + params.output_proj.bias;
  check_finite(z);
  if (tape) {
    tape->final_out = std::move(y);
    tape->pooled = std::move(pooled);
  }
  return z;
}

}  // namespace

template <typename T>
RowVector<T> gem_pool(const Matrix<T>& seq, T p, T eps) {
  if (!(p >= T(1))) {
    throw DomainError("gem_pool: p must be >= 1");
  }
  if (!(eps > T(0))) {
    throw DomainError("gem_pool: eps must be > 0");
  }
  if (seq.rows() < 1) {
    throw ShapeError("gem_pool: empty sequence");
  }
  return gem_forward(seq, p, eps, static_cast<GemCache<T>*>(nullptr));
}

template <typename T>
Matrix<T> window_matrix(const Window& w) {
  Matrix<T> m(static_cast<Eigen::Index>(w.k), static_cast<Eigen::Index>(w.d));
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    m.data()[i] = static_cast<T>(w.data[i]);
  }
  return m;
}

template <typename T>
RowVector<T> forward(const EncoderParams<T>& params, const EncoderConfig& config, const Matrix<T>& window,
                     ForwardMode mode) {
  return run_forward<T>(params, config, window, mode, nullptr);
}

template <typename T>
void backward(const EncoderParams<T>& params, const EncoderConfig& cfg, const Matrix<T>& window, ForwardMode mode,
              const RowVector<T>& dz, EncoderParams<T>& g) {
  Tape<T> tape;
  run_forward<T>(params, cfg, window, mode, &tape);

  if (cfg.variant == Variant::avg_mlp) {
    g.mlp_out.weight.noalias() += tape.mlp_drop.transpose() * dz;
    g.mlp_out.bias += dz;
    RowVector<T> dact = dz * params.mlp_out.weight.transpose();
    if (tape.mlp_mask.size() > 0) {
      dact.array() *= tape.mlp_mask.array();
    }
    const RowVector<T> dpre = dact.array() * tape.mlp_pre.unaryExpr([](T x) { return gelu_grad(x); }).array();
    g.mlp_hidden.weight.noalias() += tape.mean_in.transpose() * dpre;
    g.mlp_hidden.bias += dpre;
    return;
  }

  g.output_proj.weight.noalias() += tape.pooled.transpose() * dz;
  g.output_proj.bias += dz;
  const RowVector<T> dpooled = dz * params.output_proj.weight.transpose();

  const auto L = tape.final_out.rows();
  Matrix<T> dy = Matrix<T>::Zero(L, tape.final_out.cols());
  switch (cfg.pooling) {
    case Pooling::mean:
      dy.rowwise() = dpooled / static_cast<T>(L);
      break;
    case Pooling::cls:
      dy.row(0) = dpooled;
      break;
    case Pooling::gem: {
      const T p = params.gem_p(0);
      const T eps = static_cast<T>(cfg.gem_eps);
      const auto& c = tape.gem.clamped;
      const auto& pooled = tape.gem.pooled;
      T dp = 0;
      for (Eigen::Index j = 0; j < c.cols(); ++j) {
        const T yj = pooled(j);
        T weighted_log = 0;
        for (Eigen::Index i = 0; i < L; ++i) {
          const T ratio = c(i, j) / yj;
          const T w = std::pow(ratio, p) / static_cast<T>(L);
          weighted_log += w * std::log(c(i, j));
          if (tape.final_out(i, j) > eps) {
            dy(i, j) = dpooled(j) * std::pow(ratio, p - T(1)) / static_cast<T>(L);
          }
        }
        dp += dpooled(j) * (yj / p) * (weighted_log - std::log(yj));
      }
      g.gem_p(0) += dp;
      break;
    }
  }

  Matrix<T> dseq = norm_backward(params.final_norm, tape.final_cache, dy, g.final_norm);
  for (std::size_t i = params.blocks.size(); i-- > 0;) {
    dseq = block_backward(params.blocks[i], cfg, tape.blocks[i], dseq, g.blocks[i]);
  }
  if (cfg.pooling == Pooling::cls) {
    g.cls_token += dseq.row(0);
    const Matrix<T> rest = dseq.bottomRows(dseq.rows() - 1);
    linear_backward(params.input_proj, window, rest, g.input_proj);
  } else {
    linear_backward(params.input_proj, window, dseq, g.input_proj);
  }
}

namespace {

template <typename T>
void add_into(EncoderParams<T>& acc, const EncoderParams<T>& other) {
  auto dst = acc.arrays();
  const auto src = other.arrays();
  for (std::size_t a = 0; a < dst.size(); ++a) {
    for (std::size_t i = 0; i < dst[a].values.size(); ++i) {
      dst[a].values[i] += src[a].values[i];
    }
  }
}

// Independent of thread count so reductions always happen in the same order.
constexpr std::size_t kGradientShards = 8;

}  // namespace

template <typename T>
GradientResult<T> compute_gradients(const EncoderParams<T>& params, const EncoderConfig& config,
                                    const BatchLossFn<T>& loss_fn, const std::vector<Matrix<T>>& windows,
                                    const std::vector<ForwardMode>& modes) {
  if (windows.size() != modes.size()) {
    throw ShapeError("compute_gradients: windows and modes differ in length");
  }
  const std::size_t n = windows.size();
  std::vector<RowVector<T>> z(n);
  parallel_for(n, [&](std::size_t i) { z[i] = forward(params, config, windows[i], modes[i]); });

  std::vector<RowVector<T>> dz(n);
  for (std::size_t i = 0; i < n; ++i) {
    dz[i] = RowVector<T>::Zero(z[i].size());
  }
  GradientResult<T> result;
  result.loss = loss_fn(z, dz);
  if (!std::isfinite(static_cast<double>(result.loss))) {
    throw NumericError("non-finite loss");
  }
  result.grads = params.zeros_like();

  const std::size_t shards = std::min(kGradientShards, std::max<std::size_t>(n, 1));
  std::vector<EncoderParams<T>> partial(shards);
  parallel_for(shards, [&](std::size_t s) {
    partial[s] = params.zeros_like();
    const std::size_t lo = s * n / shards;
    const std::size_t hi = (s + 1) * n / shards;
    for (std::size_t i = lo; i < hi; ++i) {
      if (dz[i].isZero(0)) {
        continue;
      }
      backward(params, config, windows[i], modes[i], dz[i], partial[s]);
    }
  });
  for (const auto& p : partial) {
    add_into(result.grads, p);
  }
  return result;
}

Embedding embed_window(const EncoderParams<float>& params, const EncoderConfig& config, const Window& window) {
  const RowVector<float> z = forward(params, config, window_matrix<float>(window), ForwardMode::eval());
  Embedding e;
  e.values.assign(z.data(), z.data() + z.size());
  e.source_track = window.source_track;
  e.window_start = window.start_index;
  return e;
}

#define WEALY_INSTANTIATE(T)                                                                                     \
  template struct EncoderParams<T>;                                                                              \
  template EncoderParams<T> init_params<T>(const EncoderConfig&, std::uint64_t);                                 \
  template RowVector<T> gem_pool<T>(const Matrix<T>&, T, T);                                                     \
  template Matrix<T> window_matrix<T>(const Window&);                                                            \
  template RowVector<T> forward<T>(const EncoderParams<T>&, const EncoderConfig&, const Matrix<T>&, ForwardMode); \
  template void backward<T>(const EncoderParams<T>&, const EncoderConfig&, const Matrix<T>&, ForwardMode,        \
                            const RowVector<T>&, EncoderParams<T>&);                                             \
  template GradientResult<T> compute_gradients<T>(const EncoderParams<T>&, const EncoderConfig&,                 \
                                                  const BatchLossFn<T>&, const std::vector<Matrix<T>>&,          \
                                                  const std::vector<ForwardMode>&);

WEALY_INSTANTIATE(float)
WEALY_INSTANTIATE(double)
#undef WEALY_INSTANTIATE

template EncoderParams<double> EncoderParams<float>::cast<double>() const;
template EncoderParams<float> EncoderParams<double>::cast<float>() const;
template EncoderParams<float> EncoderParams<float>::cast<float>() const;
template EncoderParams<double> EncoderParams<double>::cast<double>() const;

}  // namespace wealy
