// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/synth.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "wealy/error.hpp"
#include "wealy/random.hpp"

namespace wealy {

using nlohmann::json;

void SynthSpec::validate() const {
  if (n_cliques < 1 || versions_min < 1 || versions_max < versions_min || d < 1 || m_min < 1 || m_max < m_min ||
      signature_dim < 1 || nuisance_dim < 1 || lyric_words < 1 || vocabulary_size < 1) {
    throw ValidationError("synth spec: counts must be >= 1 and ranges ordered");
  }
  if (!(noise_sigma >= 0) || !(row_noise >= 0) || !(burst_scale >= 0)) {
    throw ValidationError("synth spec: noise levels must be >= 0");
  }
  for (double p : {instrumental_fraction, transcript_noise, invalid_transcript_rate}) {
    if (!(p >= 0 && p <= 1)) {
      throw ValidationError("synth spec: rates must lie in [0, 1]");
    }
  }
}

json SynthSpec::to_json() const {
  return json{{"n_cliques", n_cliques},
              {"versions_min", versions_min},
              {"versions_max", versions_max},
              {"d", d},
              {"m_min", m_min},
              {"m_max", m_max},
              {"signature_dim", signature_dim},
              {"nuisance_dim", nuisance_dim},
              {"burst_scale", burst_scale},
              {"noise_sigma", noise_sigma},
              {"seed", seed},
              {"instrumental_fraction", instrumental_fraction},
              {"row_noise", row_noise},
              {"lyric_words", lyric_words},
              {"vocabulary_size", vocabulary_size},
              {"transcript_noise", transcript_noise},
              {"invalid_transcript_rate", invalid_transcript_rate}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  try {
    s.n_cliques = j.value("n_cliques", s.n_cliques);
    s.versions_min = j.value("versions_min", s.versions_min);
    s.versions_max = j.value("versions_max", s.versions_max);
    s.d = j.value("d", s.d);
    s.m_min = j.value("m_min", s.m_min);
    s.m_max = j.value("m_max", s.m_max);
    s.signature_dim = j.value("signature_dim", s.signature_dim);
    s.nuisance_dim = j.value("nuisance_dim", s.nuisance_dim);
    s.burst_scale = j.value("burst_scale", s.burst_scale);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.instrumental_fraction = j.value("instrumental_fraction", s.instrumental_fraction);
    s.row_noise = j.value("row_noise", s.row_noise);
    s.lyric_words = j.value("lyric_words", s.lyric_words);
    s.vocabulary_size = j.value("vocabulary_size", s.vocabulary_size);
    s.transcript_noise = j.value("transcript_noise", s.transcript_noise);
    s.invalid_transcript_rate = j.value("invalid_transcript_rate", s.invalid_transcript_rate);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

// Pronounceable pseudo-words; syllables avoid the filler set used by the oracle.
std::vector<std::string> make_vocabulary(std::size_t n, Rng& rng) {
  static constexpr const char* kOnsets[] = {"b", "c", "f", "g", "k", "m", "p", "r", "s", "t", "v", "z", "br", "st", "tr"};
  static constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < n) {
    std::string w;
    const auto syllables = 2 + rng.below(2);
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.below(std::size(kOnsets))];
      w += kNuclei[rng.below(std::size(kNuclei))];
    }
    if (seen.insert(w).second) {
      words.push_back(w);
    }
  }
  return words;
}

std::vector<double> random_unit(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) {
    x /= norm;
  }
  return v;
}

}  // namespace

DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t d = spec.d;
  const std::size_t sd = spec.signature_dim;

  // shared maps into R^d with entries N(0, 1/d), so unit inputs land near norm 1
  const std::size_t nd = spec.nuisance_dim;
  std::vector<double> mapping(d * sd);
  for (auto& a : mapping) {
    a = rng.normal() / std::sqrt(static_cast<double>(d));
  }
  std::vector<double> nuisance(d * nd);
  for (auto& a : nuisance) {
    a = rng.normal() / std::sqrt(static_cast<double>(d));
  }
  auto project = [&](const std::vector<double>& map, std::size_t cols, const std::vector<double>& v) {
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        out[i] += map[i * cols + j] * v[j];
      }
    }
    return out;
  };
  const auto vocab = make_vocabulary(spec.vocabulary_size, rng);

  // clique-level split 70/15/15
  std::vector<std::size_t> order(spec.n_cliques);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  std::vector<Split> clique_split(spec.n_cliques);
  const auto n_train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(spec.n_cliques)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(spec.n_cliques)));
  for (std::size_t i = 0; i < order.size(); ++i) {
    clique_split[order[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }

  DatasetManifest manifest;
  manifest.dataset_name = "manifest";
  manifest.base_dir = out_dir;
  manifest.d = d;
  const double sigma = spec.noise_sigma;
  const double row_scale = sigma * spec.row_noise / std::sqrt(static_cast<double>(d));

  for (std::size_t c = 0; c < spec.n_cliques; ++c) {
    char clique_id[32];
    std::snprintf(clique_id, sizeof clique_id, "c%04zu", c);
    const auto signature = random_unit(sd, rng);
    const auto content = project(mapping, sd, signature);
    std::vector<std::string> lyric(spec.lyric_words);
    for (auto& w : lyric) {
      w = vocab[rng.below(vocab.size())];
    }

    const auto n_versions = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(spec.versions_min),
                                                               static_cast<std::int64_t>(spec.versions_max)));
    for (std::size_t v = 0; v < n_versions; ++v) {
      char track_id[64];
      std::snprintf(track_id, sizeof track_id, "%s_v%zu", clique_id, v);
      const auto m = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(spec.m_min), static_cast<std::int64_t>(spec.m_max)));

      std::vector<double> u(nd);
      for (auto& x : u) {
        x = sigma * rng.normal() / std::sqrt(static_cast<double>(nd));
      }
      const auto offset = project(nuisance, nd, u);
      // Instrumental stretches: segments of 10..40 rows without content, each
      // a random unit direction scaled by burst_scale.
      std::vector<float> data(m * d);
      std::size_t t = 0;
      while (t < m) {
        const auto len = std::min<std::size_t>(m - t, static_cast<std::size_t>(rng.range(10, 40)));
        const bool instrumental = rng.bernoulli(spec.instrumental_fraction);
        std::vector<double> burst;
        if (instrumental) {
          burst = random_unit(d, rng);
          for (auto& x : burst) {
            x *= spec.burst_scale;
          }
        }
        for (std::size_t r = t; r < t + len; ++r) {
          for (std::size_t i = 0; i < d; ++i) {
            double x = offset[i] + row_scale * rng.normal();
            x += instrumental ? burst[i] : content[i];
            data[r * d + i] = static_cast<float>(x);
          }
        }
        t += len;
      }

      TrackRecord rec;
      rec.track_id = track_id;
      rec.clique_id = clique_id;
      rec.split = clique_split[c];
      rec.latent_path = std::string("latents/") + track_id + ".wlat";
      if (rng.bernoulli(spec.invalid_transcript_rate)) {
        rec.transcription = "[Instrumental]";
      } else {
        std::string text;
        for (const auto& w : lyric) {
          if (!text.empty()) text += ' ';
          text += rng.bernoulli(spec.transcript_noise) ? vocab[rng.below(vocab.size())] : w;
        }
        rec.transcription = text;
      }
      rec.language = "en";
      rec.duration_s = std::round(static_cast<double>(m) * 0.6 * 10.0) / 10.0;
      write_latents(LatentSequence(m, d, std::move(data)), manifest.latent_file(rec));
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace wealy
