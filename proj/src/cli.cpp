// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/cli.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wealy/baselines.hpp"
#include "wealy/checkpoint.hpp"
#include "wealy/error.hpp"
#include "wealy/fusion.hpp"
#include "wealy/oracle.hpp"
#include "wealy/retrieval.hpp"
#include "wealy/synth.hpp"
#include "wealy/trainer.hpp"

namespace wealy::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
  std::string out;
  std::string spec_file;
  SynthSpec spec;
};

struct ManifestArgs {
  std::string manifest;
};

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out = "run";
};

struct EmbedArgs {
  std::string ckpt;
  std::string manifest;
  std::string split = "test";
  double overlap = 0.9;
  std::size_t k = 1500;
  std::string out;
  std::string embeddings;
};

struct EvalArgs {
  std::string distances;
  std::string manifest;
  std::uint64_t seed = 0;
  std::size_t resamples = 1000;
};

struct BaselineArgs {
  std::string method;
  std::string manifest;
  std::string split = "test";
  std::string out;
  std::uint64_t seed = 0;
  std::string oracle_rules;
};

struct FuseArgs {
  std::string audio;
  std::string lyrics;
  double alpha = 1.5;
  std::string out;
  bool align = false;
};

struct SweepArgs {
  std::string audio;
  std::string lyrics;
  std::string manifest;
  double lo = 0.0;
  double hi = 3.0;
  double step = 0.25;
};

void emit(std::ostream& out, const json& j) { out << j.dump() << std::endl; }

DatasetManifest load_validated(const std::string& path) {
  auto manifest = read_manifest(path);
  const auto report = validate_manifest(manifest);
  if (!report.ok()) {
    std::string msg = "manifest has " + std::to_string(report.error_count()) + " error(s)";
    for (const auto& issue : report.issues) {
      if (issue.severity == ValidationIssue::Severity::error) {
        msg += "; " + issue.track_id + ": " + issue.message;
        break;
      }
    }
    throw ValidationError(msg);
  }
  return manifest;
}

DistanceMatrix aligned_lyrics(const DistanceMatrix& audio, const DistanceMatrix& lyrics, bool align) {
  if (!align) {
    return lyrics;
  }
  return align_matrices(audio, lyrics).second;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec = a.spec;
  if (!a.spec_file.empty()) {
    std::ifstream in(a.spec_file);
    if (!in) {
      throw StorageError("cannot open synth spec " + a.spec_file);
    }
    spec = SynthSpec::from_json(json::parse(in));
  }
  const auto manifest = synth_dataset(spec, a.out);
  emit(out, {{"command", "synth"},
             {"manifest", (fs::path(a.out) / "manifest.jsonl").string()},
             {"tracks", manifest.records.size()},
             {"cliques", spec.n_cliques},
             {"d", spec.d}});
  return 0;
}

int cmd_validate(const ManifestArgs& a, std::ostream& out) {
  auto manifest = read_manifest(a.manifest);
  const auto report = validate_manifest(manifest);
  json issues = json::array();
  for (const auto& i : report.issues) {
    issues.push_back({{"severity", i.severity == ValidationIssue::Severity::error ? "error" : "warning"},
                      {"id", i.track_id},
                      {"message", i.message}});
  }
  emit(out, {{"command", "manifest validate"},
             {"ok", report.ok()},
             {"errors", report.error_count()},
             {"warnings", report.warning_count()},
             {"d", manifest.d},
             {"issues", issues}});
  return report.ok() ? 0 : 1;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto config = TrainConfig::load(a.config);
  FeatureStore store(load_validated(a.manifest));
  TrainOptions opts;
  opts.checkpoint_path = fs::path(a.out) / "best.wckp";
  opts.history_path = fs::path(a.out) / "history.jsonl";
  const auto result = train(config, store, opts);
  emit(out, {{"command", "train"},
             {"checkpoint", opts.checkpoint_path.string()},
             {"history", opts.history_path.string()},
             {"epochs", result.history.epochs.size()},
             {"best_epoch", result.history.best_epoch},
             {"best_val_map", result.history.best_val_map},
             {"stopped_reason", result.history.stopped_reason}});
  return 0;
}

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  FeatureStore store(load_validated(a.manifest));
  const auto ids = store.manifest().track_ids(parse_split(a.split));
  const auto embs = embed_tracks(ckpt.params, ckpt.config, store, ids, a.k, a.overlap);
  write_distances(distance_matrix(embs, ids, ids), a.out);
  std::size_t n_chunks = 0;
  for (const auto& [_, list] : embs) {
    n_chunks += list.size();
  }
  if (!a.embeddings.empty()) {
    std::ofstream e(a.embeddings);
    if (!e) {
      throw StorageError("cannot write " + a.embeddings);
    }
    for (const auto& [id, list] : embs) {
      for (const auto& emb : list) {
        e << json{{"track_id", id}, {"window_start", emb.window_start}, {"values", emb.values}}.dump() << '\n';
      }
    }
  }
  emit(out, {{"command", "embed"}, {"distances", a.out}, {"tracks", ids.size()}, {"chunks", n_chunks}});
  return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto dm = read_distances(a.distances);
  const auto manifest = read_manifest(a.manifest);
  const auto report = map_eval(dm, manifest, BootstrapOptions{a.resamples, 0.95, a.seed});
  char map_text[16];
  std::snprintf(map_text, sizeof map_text, "%.3f", report.map);
  emit(out, {{"command", "eval"},
             {"map", report.map},
             {"map_text", map_text},
             {"ci_halfwidth", report.ci_halfwidth},
             {"n_queries", report.n_queries}});
  return 0;
}

int cmd_baseline(const BaselineArgs& a, std::ostream& out) {
  const auto split = parse_split(a.split);
  DistanceMatrix dm;
  if (a.method == "avgemb") {
    FeatureStore store(load_validated(a.manifest));
    dm = avgemb_distance_matrix(store, store.manifest().track_ids(split));
  } else {
    const auto manifest = read_manifest(a.manifest);
    const auto ids = manifest.track_ids(split);
    if (a.method == "tfidf") {
      dm = tfidf_distance_matrix(tfidf_fit(corpus_from(manifest, ids)), ids, ids);
    } else if (a.method == "random") {
      dm = random_baseline(ids, a.seed);
    } else {
      const auto rules = a.oracle_rules.empty() ? OracleRules{} : OracleRules::load(a.oracle_rules);
      dm = oracle_distance_matrix(ids, manifest.clique_map(), oracle_validity(manifest, rules));
    }
  }
  write_distances(dm, a.out);
  emit(out, {{"command", "baseline"}, {"method", a.method}, {"distances", a.out}, {"tracks", dm.rows()}});
  return 0;
}

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const auto audio = read_distances(a.audio);
  const auto lyrics = aligned_lyrics(audio, read_distances(a.lyrics), a.align);
  write_distances(fuse(audio, lyrics, a.alpha), a.out);
  emit(out, {{"command", "fuse"}, {"alpha", a.alpha}, {"distances", a.out}});
  return 0;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto audio = read_distances(a.audio);
  const auto lyrics = aligned_lyrics(audio, read_distances(a.lyrics), true);
  const auto manifest = read_manifest(a.manifest);
  const auto points = sweep_alpha(audio, lyrics, manifest.clique_map(), a.lo, a.hi, a.step);
  json js = json::array();
  const AlphaPoint* best = &points.front();
  for (const auto& p : points) {
    js.push_back({{"alpha", p.alpha}, {"map", p.map}});
    if (p.map > best->map) {
      best = &p;
    }
  }
  emit(out, {{"command", "sweep-alpha"}, {"points", js}, {"best_alpha", best->alpha}, {"best_map", best->map}});
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"wealy: lyrics-aware latent embeddings and version-identification evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset (manifest + WLAT files)");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--spec", synth.spec_file, "JSON file with synth parameters (overrides flags)");
  s->add_option("--n-cliques", synth.spec.n_cliques);
  s->add_option("--versions-min", synth.spec.versions_min);
  s->add_option("--versions-max", synth.spec.versions_max);
  s->add_option("--d", synth.spec.d, "Latent dimension");
  s->add_option("--m-min", synth.spec.m_min);
  s->add_option("--m-max", synth.spec.m_max);
  s->add_option("--signature-dim", synth.spec.signature_dim);
  s->add_option("--nuisance-dim", synth.spec.nuisance_dim);
  s->add_option("--row-noise", synth.spec.row_noise);
  s->add_option("--burst-scale", synth.spec.burst_scale);
  s->add_option("--noise-sigma", synth.spec.noise_sigma);
  s->add_option("--instrumental-fraction", synth.spec.instrumental_fraction);
  s->add_option("--transcript-noise", synth.spec.transcript_noise);
  s->add_option("--invalid-rate", synth.spec.invalid_transcript_rate);
  s->add_option("--seed", synth.spec.seed);

  ManifestArgs mv;
  auto* m = app.add_subcommand("manifest", "Manifest utilities");
  m->require_subcommand(1);
  auto* mval = m->add_subcommand("validate", "Check a manifest and its latent files");
  mval->add_option("--manifest", mv.manifest)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an encoder");
  t->add_option("--config", tr.config, "TrainConfig JSON")->required();
  t->add_option("--manifest", tr.manifest)->required();
  t->add_option("--out", tr.out, "Output directory for best.wckp and history.jsonl");

  EmbedArgs em;
  auto* e = app.add_subcommand("embed", "Embed a split with a checkpoint and write best-match distances");
  e->add_option("--ckpt", em.ckpt)->required();
  e->add_option("--manifest", em.manifest)->required();
  e->add_option("--split", em.split);
  e->add_option("--overlap", em.overlap);
  e->add_option("--k", em.k);
  e->add_option("--out", em.out, "WDST output")->required();
  e->add_option("--embeddings", em.embeddings, "Optional JSON-lines dump of chunk embeddings");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "MAP of a distance matrix");
  v->add_option("--distances", ev.distances)->required();
  v->add_option("--manifest", ev.manifest)->required();
  v->add_option("--seed", ev.seed, "Bootstrap seed");
  v->add_option("--resamples", ev.resamples);

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "Reference distance matrices");
  b->add_option("method", bl.method)->required()->check(CLI::IsMember({"tfidf", "avgemb", "random", "oracle"}));
  b->add_option("--manifest", bl.manifest)->required();
  b->add_option("--split", bl.split);
  b->add_option("--out", bl.out)->required();
  b->add_option("--seed", bl.seed);
  b->add_option("--oracle-rules", bl.oracle_rules, "JSON overrides for the oracle validity rules");

  FuseArgs fu;
  auto* f = app.add_subcommand("fuse", "Late fusion: audio + alpha * lyrics");
  f->add_option("--audio", fu.audio)->required();
  f->add_option("--lyrics", fu.lyrics)->required();
  f->add_option("--alpha", fu.alpha);
  f->add_option("--out", fu.out)->required();
  f->add_flag("--align", fu.align, "Reorder the lyrics matrix to the audio id order");

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep-alpha", "MAP of the fused matrix over a grid of alpha values");
  w->add_option("--audio", sw.audio)->required();
  w->add_option("--lyrics", sw.lyrics)->required();
  w->add_option("--manifest", sw.manifest)->required();
  w->add_option("--min", sw.lo);
  w->add_option("--max", sw.hi);
  w->add_option("--step", sw.step);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (mval->parsed()) return cmd_validate(mv, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_embed(em, out);
    if (v->parsed()) return cmd_eval(ev, out);
    if (b->parsed()) return cmd_baseline(bl, out);
    if (f->parsed()) return cmd_fuse(fu, out);
    if (w->parsed()) return cmd_sweep(sw, out);
  } catch (const StorageError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace wealy::cli
