// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "wealy/binary_io.hpp"
#include "wealy/error.hpp"

namespace wealy {

namespace fs = std::filesystem;
using nlohmann::json;

LatentSequence::LatentSequence(std::size_t rows, std::size_t dim, std::vector<float> values)
    : m(rows), d(dim), data(std::move(values)) {}

void LatentSequence::validate() const {
  if (m < 1 || d < 1) {
    throw ValidationError("latent sequence needs m >= 1 and d >= 1");
  }
  if (data.size() != m * d) {
    throw ValidationError("latent payload size " + std::to_string(data.size()) + " != m*d = " +
                          std::to_string(m * d));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError("non-finite latent value at row " + std::to_string(i / d) + ", column " +
                            std::to_string(i % d));
    }
  }
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("invalid split \"" + s + "\" (expected train, val or test)");
}

const TrackRecord& DatasetManifest::find(const std::string& track_id) const {
  for (const auto& r : records) {
    if (r.track_id == track_id) {
      return r;
    }
  }
  throw LookupError("unknown track id: " + track_id);
}

std::vector<TrackRecord> DatasetManifest::split(Split s) const {
  std::vector<TrackRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const TrackRecord& r) { return r.split == s; });
  return out;
}

std::vector<std::string> DatasetManifest::track_ids(Split s) const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r.split == s) {
      out.push_back(r.track_id);
    }
  }
  return out;
}

std::unordered_map<std::string, std::string> DatasetManifest::clique_map() const {
  std::unordered_map<std::string, std::string> out;
  for (const auto& r : records) {
    out.emplace(r.track_id, r.clique_id);
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>> DatasetManifest::trainable_cliques() const {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& r : records) {
    if (r.split == Split::train) {
      groups[r.clique_id].push_back(r.track_id);
    }
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (auto& [clique, members] : groups) {
    if (members.size() >= 2) {
      out.emplace_back(clique, std::move(members));
    }
  }
  return out;
}

// --- WLAT --------------------------------------------------------------------

void write_latents(const LatentSequence& seq, const fs::path& path) {
  seq.validate();
  auto out = io::open_out(path);
  io::write_magic(out, "WLAT");
  io::write_u32(out, kLatentFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(seq.m));
  io::write_u32(out, static_cast<std::uint32_t>(seq.d));
  io::write_f32s(out, seq.data);
  out.flush();
  if (!out) {
    throw StorageError("failed writing " + path.string());
  }
}

namespace {

std::pair<std::size_t, std::size_t> read_header(std::istream& in, const fs::path& path) {
  io::expect_magic(in, "WLAT", path.string());
  const auto version = io::read_u32(in);
  if (version != kLatentFormatVersion) {
    throw FormatError(path.string() + ": unsupported WLAT version " + std::to_string(version));
  }
  const std::size_t m = io::read_u32(in);
  const std::size_t d = io::read_u32(in);
  if (m == 0 || d == 0) {
    throw FormatError(path.string() + ": header declares an empty matrix");
  }
  return {m, d};
}

}  // namespace

LatentSequence read_latents(const fs::path& path) {
  auto in = io::open_in(path);
  const auto [m, d] = read_header(in, path);
  LatentSequence seq;
  seq.m = m;
  seq.d = d;
  seq.data.resize(m * d);
  in.read(reinterpret_cast<char*>(seq.data.data()), static_cast<std::streamsize>(m * d * sizeof(float)));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != m * d * sizeof(float)) {
    throw CorruptionError(path.string() + ": truncated payload, expected " + std::to_string(m * d * 4) +
                          " bytes, found " + std::to_string(got));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError(path.string() + ": trailing bytes after payload");
  }
  if constexpr (std::endian::native != std::endian::little) {
    in.clear();
    in.seekg(16);
    io::read_f32s(in, seq.data);
  }
  return seq;
}

std::pair<std::size_t, std::size_t> read_latent_shape(const fs::path& path) {
  auto in = io::open_in(path);
  return read_header(in, path);
}

// --- manifest ----------------------------------------------------------------

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::nullopt;
  }
  return j.at(key).get<T>();
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot open manifest: " + path.string());
  }
  DatasetManifest manifest;
  manifest.dataset_name = path.stem().string();
  manifest.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const json j = json::parse(line);
      TrackRecord r;
      r.track_id = j.at("track_id").get<std::string>();
      r.clique_id = j.at("clique_id").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.latent_path = j.at("latent_path").get<std::string>();
      r.transcription = optional_field<std::string>(j, "transcription");
      r.language = optional_field<std::string>(j, "language");
      r.duration_s = optional_field<double>(j, "duration_s");
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  auto out = io::open_out(path);
  for (const auto& r : manifest.records) {
    json j;
    j["track_id"] = r.track_id;
    j["clique_id"] = r.clique_id;
    j["split"] = to_string(r.split);
    j["latent_path"] = r.latent_path;
    j["transcription"] = r.transcription ? json(*r.transcription) : json(nullptr);
    j["language"] = r.language ? json(*r.language) : json(nullptr);
    j["duration_s"] = r.duration_s ? json(*r.duration_s) : json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) {
    throw StorageError("failed writing manifest " + path.string());
  }
}

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const ValidationIssue& i) {
    return i.severity == ValidationIssue::Severity::error;
  }));
}

std::size_t ValidationReport::warning_count() const { return issues.size() - error_count(); }

ValidationReport validate_manifest(DatasetManifest& manifest) {
  using Sev = ValidationIssue::Severity;
  ValidationReport report;
  std::set<std::string> seen;
  std::optional<std::size_t> dim;
  std::map<std::string, std::set<Split>> clique_splits;
  std::map<std::string, std::size_t> train_sizes;

  for (const auto& r : manifest.records) {
    if (!seen.insert(r.track_id).second) {
      report.issues.push_back({Sev::error, r.track_id, "duplicate track_id"});
      continue;
    }
    clique_splits[r.clique_id].insert(r.split);
    if (r.split == Split::train) {
      ++train_sizes[r.clique_id];
    }
    const auto file = manifest.latent_file(r);
    if (!fs::exists(file)) {
      report.issues.push_back({Sev::error, r.track_id, "missing latent file " + file.string()});
      continue;
    }
    try {
      const auto [m, d] = read_latent_shape(file);
      if (m < 1) {
        report.issues.push_back({Sev::error, r.track_id, "latent file has m = 0"});
      }
      if (!dim) {
        dim = d;
      } else if (*dim != d) {
        report.issues.push_back({Sev::error, r.track_id,
                                 "dimension mismatch: " + std::to_string(d) + " != " + std::to_string(*dim)});
      }
    } catch (const Error& e) {
      report.issues.push_back({Sev::error, r.track_id, e.what()});
    }
  }
  for (const auto& [clique, splits] : clique_splits) {
    if (splits.size() > 1) {
      report.issues.push_back({Sev::warning, clique, "clique spans several splits"});
    }
  }
  for (const auto& [clique, n] : train_sizes) {
    if (n < 2) {
      report.issues.push_back({Sev::warning, clique, "untrainable clique (fewer than 2 train members)"});
    }
  }
  if (dim && report.ok()) {
    manifest.d = *dim;
  }
  return report;
}

// --- windows -----------------------------------------------------------------

namespace {

// Rows [start, start + k) with indices taken modulo m, which covers both the
// plain slice (m >= k) and the cyclic tiling used for short sequences.
Window take(const LatentSequence& seq, std::size_t start, std::size_t k, const std::string& track_id) {
  if (k < 1) {
    throw DomainError("window length k must be >= 1");
  }
  Window w;
  w.k = k;
  w.d = seq.d;
  w.source_track = track_id;
  w.start_index = start;
  w.data.resize(k * seq.d);
  for (std::size_t i = 0; i < k; ++i) {
    const auto src = seq.row((start + i) % seq.m);
    std::copy(src.begin(), src.end(), w.data.begin() + static_cast<std::ptrdiff_t>(i * seq.d));
  }
  return w;
}

}  // namespace

Window sample_train_window(const LatentSequence& seq, std::size_t k, Rng& rng, const std::string& track_id) {
  if (seq.m < k) {
    return take(seq, 0, k, track_id);
  }
  const auto start = static_cast<std::size_t>(rng.below(seq.m - k + 1));
  return take(seq, start, k, track_id);
}

Window first_window(const LatentSequence& seq, std::size_t k, const std::string& track_id) {
  return take(seq, 0, k, track_id);
}

std::vector<std::size_t> test_window_starts(std::size_t m, std::size_t k, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw DomainError("overlap must lie in [0, 1)");
  }
  if (k < 1) {
    throw DomainError("window length k must be >= 1");
  }
  std::vector<std::size_t> starts;
  if (m < k) {
    return starts;
  }
  const auto stride = static_cast<std::size_t>(std::max(1L, std::lround(static_cast<double>(k) * (1.0 - overlap))));
  for (std::size_t s = 0; s + k <= m; s += stride) {
    starts.push_back(s);
  }
  if (starts.back() + k != m) {
    starts.push_back(m - k);
  }
  return starts;
}

std::vector<Window> test_windows(const LatentSequence& seq, std::size_t k, double overlap,
                                 const std::string& track_id) {
  const auto starts = test_window_starts(seq.m, k, overlap);
  std::vector<Window> out;
  if (starts.empty()) {
    out.push_back(take(seq, 0, k, track_id));
    return out;
  }
  out.reserve(starts.size());
  for (auto s : starts) {
    out.push_back(take(seq, s, k, track_id));
  }
  return out;
}

// --- store -------------------------------------------------------------------

FeatureStore::FeatureStore(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

std::shared_ptr<const LatentSequence> FeatureStore::get(const std::string& track_id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(track_id); it != cache_.end()) {
      return it->second;
    }
  }
  const auto& rec = manifest_.find(track_id);
  auto seq = std::make_shared<const LatentSequence>(read_latents(manifest_.latent_file(rec)));
  std::lock_guard lock(mu_);
  return cache_.emplace(track_id, std::move(seq)).first->second;
}

}  // namespace wealy
