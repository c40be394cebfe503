// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wealy/error.hpp"

namespace wealy {

using nlohmann::json;

std::string clean_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  int square = 0;
  int round = 0;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (ch == '[') { ++square; continue; }
    if (ch == ']') { square = std::max(0, square - 1); out.push_back(' '); continue; }
    if (ch == '(') { ++round; continue; }
    if (ch == ')') { round = std::max(0, round - 1); out.push_back(' '); continue; }
    if (square > 0 || round > 0) {
      continue;
    }
    // bytes >= 0x80 belong to UTF-8 sequences and are kept as word characters
    if (std::isalnum(ch) || ch == '\'' || ch >= 0x80) {
      out.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      out.push_back(' ');
    }
  }
  std::istringstream ss(out);
  std::string word, joined;
  while (ss >> word) {
    if (!joined.empty()) {
      joined.push_back(' ');
    }
    joined += word;
  }
  return joined;
}

std::vector<std::string> tokenize(const std::string& cleaned) {
  std::istringstream ss(cleaned);
  std::vector<std::string> tokens;
  std::string t;
  while (ss >> t) {
    tokens.push_back(t);
  }
  return tokens;
}

const char* to_string(OracleRule r) {
  switch (r) {
    case OracleRule::min_words: return "i:min_words";
    case OracleRule::min_alnum: return "ii:min_alnum";
    case OracleRule::ngram_repetition: return "iii:ngram_repetition";
    case OracleRule::phrase_repetition: return "iv:phrase_repetition";
    case OracleRule::musical_content: return "v:musical_content";
  }
  return "?";
}

OracleRules OracleRules::from_json(const json& j) {
  OracleRules r;
  try {
    r.min_words = j.value("min_words", r.min_words);
    r.min_alnum_chars = j.value("min_alnum_chars", r.min_alnum_chars);
    r.max_ngram_repetition = j.value("max_ngram_repetition", r.max_ngram_repetition);
    r.min_unique_bigrams = j.value("min_unique_bigrams", r.min_unique_bigrams);
    r.min_unique_trigrams = j.value("min_unique_trigrams", r.min_unique_trigrams);
    r.max_phrase_coverage = j.value("max_phrase_coverage", r.max_phrase_coverage);
    r.phrase_min_n = j.value("phrase_min_n", r.phrase_min_n);
    r.phrase_max_n = j.value("phrase_max_n", r.phrase_max_n);
    r.filler_syllables = j.value("filler_syllables", r.filler_syllables);
    r.max_filler_fraction = j.value("max_filler_fraction", r.max_filler_fraction);
    r.musical_tags = j.value("musical_tags", r.musical_tags);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("oracle rules: ") + e.what());
  }
  if (r.phrase_min_n < 1 || r.phrase_max_n < r.phrase_min_n) {
    throw ConfigError("oracle rules: need 1 <= phrase_min_n <= phrase_max_n");
  }
  return r;
}

OracleRules OracleRules::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot open oracle rules file " + path.string());
  }
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

std::string join(const std::vector<std::string>& tokens, std::size_t start, std::size_t n) {
  std::string s = tokens[start];
  for (std::size_t i = 1; i < n; ++i) {
    s += ' ';
    s += tokens[start + i];
  }
  return s;
}

struct NgramStats {
  std::size_t total = 0;
  std::size_t unique = 0;
};

NgramStats ngram_stats(const std::vector<std::string>& tokens, std::size_t n) {
  NgramStats st;
  if (tokens.size() < n) {
    return st;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    seen.insert(join(tokens, i, n));
  }
  st.total = tokens.size() - n + 1;
  st.unique = seen.size();
  return st;
}

double repetition(const NgramStats& st) {
  return st.total == 0 ? 1.0 : 1.0 - static_cast<double>(st.unique) / static_cast<double>(st.total);
}

// Largest share of token positions covered by the occurrences of a single
// n-gram that occurs at least twice.
double max_phrase_coverage(const std::vector<std::string>& tokens, std::size_t min_n, std::size_t max_n) {
  double best = 0.0;
  for (std::size_t n = min_n; n <= max_n && n <= tokens.size(); ++n) {
    std::map<std::string, std::vector<std::size_t>> starts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      starts[join(tokens, i, n)].push_back(i);
    }
    for (const auto& [phrase, pos] : starts) {
      if (pos.size() < 2) {
        continue;
      }
      std::size_t covered = 0;
      for (std::size_t i = 0; i < pos.size(); ++i) {
        const std::size_t end = pos[i] + n;
        covered += (i + 1 < pos.size()) ? std::min(end, pos[i + 1]) - pos[i] : n;
      }
      best = std::max(best, static_cast<double>(covered) / static_cast<double>(tokens.size()));
    }
  }
  return best;
}

std::vector<std::string> bracketed_tags(const std::string& text) {
  std::vector<std::string> tags;
  std::string cur;
  int depth = 0;
  for (char raw : text) {
    if (raw == '[' || raw == '(') {
      if (depth++ == 0) cur.clear();
      continue;
    }
    if ((raw == ']' || raw == ')') && depth > 0) {
      if (--depth == 0) {
        std::transform(cur.begin(), cur.end(), cur.begin(), [](unsigned char c) { return std::tolower(c); });
        tags.push_back(cur);
      }
      continue;
    }
    if (depth > 0) cur.push_back(raw);
  }
  return tags;
}

}  // namespace

OracleVerdict oracle_is_valid(const std::optional<std::string>& text, const OracleRules& rules) {
  OracleVerdict v;
  const std::string raw = text.value_or("");
  const auto tokens = tokenize(clean_text(raw));

  if (tokens.size() < rules.min_words) {
    v.failures.push_back(OracleRule::min_words);
  }

  std::size_t alnum = 0;
  for (const auto& t : tokens) {
    alnum += static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](unsigned char c) {
      return std::isalnum(c) || c >= 0x80;
    }));
  }
  if (alnum < rules.min_alnum_chars) {
    v.failures.push_back(OracleRule::min_alnum);
  }

  const auto bi = ngram_stats(tokens, 2);
  const auto tri = ngram_stats(tokens, 3);
  if (repetition(bi) > rules.max_ngram_repetition || repetition(tri) > rules.max_ngram_repetition ||
      bi.unique < rules.min_unique_bigrams || tri.unique < rules.min_unique_trigrams) {
    v.failures.push_back(OracleRule::ngram_repetition);
  }

  if (!tokens.empty() && max_phrase_coverage(tokens, rules.phrase_min_n, rules.phrase_max_n) > rules.max_phrase_coverage) {
    v.failures.push_back(OracleRule::phrase_repetition);
  }

  bool musical = false;
  if (!tokens.empty()) {
    const std::set<std::string> filler(rules.filler_syllables.begin(), rules.filler_syllables.end());
    const auto n_filler = std::count_if(tokens.begin(), tokens.end(), [&](const std::string& t) { return filler.count(t) > 0; });
    musical = static_cast<double>(n_filler) / static_cast<double>(tokens.size()) > rules.max_filler_fraction;
  }
  for (const auto& tag : bracketed_tags(raw)) {
    for (const auto& key : rules.musical_tags) {
      if (tag.find(key) != std::string::npos) {
        musical = true;
      }
    }
  }
  if (musical) {
    v.failures.push_back(OracleRule::musical_content);
  }

  v.valid = v.failures.empty();
  return v;
}

std::unordered_map<std::string, bool> oracle_validity(const DatasetManifest& manifest, const OracleRules& rules) {
  std::unordered_map<std::string, bool> out;
  for (const auto& r : manifest.records) {
    out[r.track_id] = oracle_is_valid(r.transcription, rules).valid;
  }
  return out;
}

DistanceMatrix oracle_distance_matrix(const std::vector<std::string>& ids,
                                      const std::unordered_map<std::string, std::string>& clique_of,
                                      const std::unordered_map<std::string, bool>& validity) {
  auto lookup = [](const auto& map, const std::string& id, const char* what) {
    const auto it = map.find(id);
    if (it == map.end()) {
      throw LookupError(std::string("no ") + what + " for track " + id);
    }
    return it->second;
  };
  DistanceMatrix dm(ids, ids, 1.0f);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto ci = lookup(clique_of, ids[i], "clique");
    const bool vi = lookup(validity, ids[i], "validity");
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (vi && lookup(validity, ids[j], "validity") && lookup(clique_of, ids[j], "clique") == ci) {
        dm.at(i, j) = 0.0f;
      }
    }
  }
  return dm;
}

}  // namespace wealy
