// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "wealy/feature_store.hpp"
#include "wealy/retrieval.hpp"

namespace wealy {

/// Lowercase, drop [bracketed] and (parenthesized) annotations, keep only
/// alphanumerics and apostrophes, collapse whitespace.
std::string clean_text(const std::string& text);
std::vector<std::string> tokenize(const std::string& cleaned);

/// Transcription validity rules for the non-instrumental oracle.
enum class OracleRule {
  min_words,          // (i)
  min_alnum,          // (ii)
  ngram_repetition,   // (iii)
  phrase_repetition,  // (iv)
  musical_content,    // (v)
};

const char* to_string(OracleRule r);

struct OracleRules {
  std::size_t min_words = 10;
  std::size_t min_alnum_chars = 5;
  double max_ngram_repetition = 0.7;  // 1 - unique/total, for bigrams and trigrams
  std::size_t min_unique_bigrams = 3;
  std::size_t min_unique_trigrams = 2;
  double max_phrase_coverage = 0.5;  // share of tokens covered by one repeated n-gram
  std::size_t phrase_min_n = 2;
  std::size_t phrase_max_n = 8;
  std::vector<std::string> filler_syllables{"la", "na", "da", "hmm", "mmm", "oh", "ah", "uh"};
  double max_filler_fraction = 0.8;
  std::vector<std::string> musical_tags{"instrumental", "music", "humming", "no lyrics"};

  static OracleRules from_json(const nlohmann::json& j);
  static OracleRules load(const std::filesystem::path& path);
};

struct OracleVerdict {
  bool valid = false;
  std::vector<OracleRule> failures;
};

OracleVerdict oracle_is_valid(const std::optional<std::string>& text, const OracleRules& rules = {});

/// Validity of every record's transcription.
std::unordered_map<std::string, bool> oracle_validity(const DatasetManifest& manifest, const OracleRules& rules = {});

/// Square matrix over `ids`: 0 for same-clique pairs whose endpoints are both
/// valid, 1 otherwise.
DistanceMatrix oracle_distance_matrix(const std::vector<std::string>& ids,
                                      const std::unordered_map<std::string, std::string>& clique_of,
                                      const std::unordered_map<std::string, bool>& validity);

}  // namespace wealy
