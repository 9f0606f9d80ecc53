#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "annobias/dataset.hpp"
#include "annobias/error.hpp"
#include "annobias/sampling.hpp"

namespace annobias {

// ---------------------------------------------------------------------------
// Word tokenization
// ---------------------------------------------------------------------------

namespace detail {

// ASCII alphanumerics count as word bytes; so does anything >= 0x80, which
// keeps multi-byte UTF-8 sequences intact during edge stripping.
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u);
}

struct RawToken {
  std::string match;       // lowercased, edge punctuation stripped; may be empty
  std::size_t begin, end;  // original whitespace-delimited span
};

inline std::vector<RawToken> raw_tokens(std::string_view text) {
  std::vector<RawToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t mb = i, me = j;
    while (mb < me && !is_word_byte(text[mb])) ++mb;
    while (me > mb && !is_word_byte(text[me - 1])) --me;
    RawToken tok{lower_copy(text.substr(mb, me - mb)), i, j};
    out.push_back(std::move(tok));
    i = j;
  }
  return out;
}

}  // namespace detail

struct WordToken {
  std::string match;       // lowercased form used for matching
  std::size_t begin, end;  // [begin, end) span of the original token
};

// Whitespace-split tokens with edge punctuation stripped from the match form
// (internal punctuation such as apostrophes is kept). Tokens that strip to
// nothing (pure punctuation) are omitted.
inline std::vector<WordToken> word_tokens(std::string_view text) {
  std::vector<WordToken> out;
  for (auto& t : detail::raw_tokens(text))
    if (!t.match.empty()) out.push_back(WordToken{std::move(t.match), t.begin, t.end});
  return out;
}

// ---------------------------------------------------------------------------
// Blacklist
// ---------------------------------------------------------------------------

struct Blacklist {
  std::set<std::string> words;  // normalized: trimmed, lowercased
  std::string source_path;
  std::size_t source_lines = 0;

  bool contains(std::string_view w) const {
    return words.find(std::string(w)) != words.end();
  }
};

inline Blacklist make_blacklist(const std::vector<std::string>& entries) {
  Blacklist bl;
  for (const auto& raw : entries) {
    const std::string w = lower_copy(trim_copy(raw));
    if (w.empty()) continue;
    if (w.find_first_of(" \t") != std::string::npos) continue;  // single words only
    bl.words.insert(w);
  }
  return bl;
}

// One word per line; lines are trimmed, lowercased, blanks dropped and
// duplicates collapsed.
inline Blacklist load_blacklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open blacklist " + path);
  std::vector<std::string> lines;
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++count;
    lines.push_back(line);
  }
  Blacklist bl = make_blacklist(lines);
  bl.source_path = path;
  bl.source_lines = count;
  if (bl.words.empty())
    throw Error(errc::empty_blacklist, "no usable entries in blacklist " + path);
  return bl;
}

// ---------------------------------------------------------------------------
// Counting and scrubbing
// ---------------------------------------------------------------------------

// Number of tokens whose match form is blacklisted; every occurrence counts.
inline std::size_t count_offensive(std::string_view text, const Blacklist& blacklist) {
  std::size_t n = 0;
  for (const auto& t : word_tokens(text))
    if (blacklist.contains(t.match)) ++n;
  return n;
}

// Removes every matched token in full, including attached edge punctuation,
// and re-joins the survivors with single spaces. count_offensive of the
// result is always zero; unmatched tokens survive byte-for-byte.
inline std::string scrub(std::string_view text, const Blacklist& blacklist) {
  std::string out;
  out.reserve(text.size());
  for (const auto& t : detail::raw_tokens(text)) {
    if (!t.match.empty() && blacklist.contains(t.match)) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(text.substr(t.begin, t.end - t.begin));
  }
  return out;
}

struct ScrubStats {
  std::size_t tokens_removed = 0;
  std::size_t examples_emptied = 0;  // texts that became empty (kept in place)
  std::map<std::size_t, std::size_t> offensive_count_histogram;  // pre-scrub counts

  nlohmann::json to_json() const {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [count, examples] : offensive_count_histogram)
      hist[std::to_string(count)] = examples;
    return nlohmann::json{{"tokens_removed", tokens_removed},
                          {"examples_emptied", examples_emptied},
                          {"offensive_count_histogram", hist}};
  }
};

// Scrubs every example text. Examples whose text becomes empty are retained
// (they predict from the bias term downstream), so dataset size and balance
// are unchanged. Appends "no_profanity" to the transform log.
inline Dataset scrub_dataset(Dataset dataset, const Blacklist& blacklist,
                             ScrubStats* stats = nullptr) {
  ScrubStats local;
  for (auto& ex : dataset.examples) {
    const std::size_t count = count_offensive(ex.text, blacklist);
    ++local.offensive_count_histogram[count];
    local.tokens_removed += count;
    if (count == 0) continue;
    ex.text = scrub(ex.text, blacklist);
    if (ex.text.empty()) ++local.examples_emptied;
  }
  dataset.transform_log.emplace_back("no_profanity");
  if (stats) *stats = std::move(local);
  return dataset;
}

// Drops all score -2 examples from a gender-task dataset and re-establishes
// the gender balance on the remainder. Appends "not_very_toxic".
inline Dataset drop_very_toxic(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.task != Task::gender)
    throw Error(errc::task_mismatch, "drop_very_toxic applies to gender-task datasets");
  std::vector<DatasetExample> kept;
  bool any_toxic1 = false;
  for (const auto& ex : dataset.examples) {
    if (ex.score == -2) continue;
    if (ex.score == -1) any_toxic1 = true;
    kept.push_back(ex);
  }
  if (!any_toxic1)
    throw Error(errc::stratum_empty, "no score -1 examples remain after dropping very toxic");
  Dataset out;
  out.task = dataset.task;
  out.transform_log = dataset.transform_log;
  out.examples = balance_by_gender(
      kept, [](const DatasetExample& e) { return e.gender; }, seed);
  out.transform_log.emplace_back("not_very_toxic");
  return out;
}

}  // namespace annobias
