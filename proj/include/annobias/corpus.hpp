#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "annobias/error.hpp"

namespace annobias {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Five-level annotation scale, -2 (very toxic) .. +2 (very healthy).
struct ToxicityScore {
  int value = 0;

  static ToxicityScore from_int(int v) {
    if (v < -2 || v > 2)
      throw Error(errc::schema, "toxicity score out of range: " + std::to_string(v));
    return ToxicityScore{v};
  }

  std::string_view category() const {
    switch (value) {
      case -2: return "very_toxic";
      case -1: return "toxic";
      case 0: return "neither";
      case 1: return "healthy";
      case 2: return "very_healthy";
    }
    return "invalid";
  }

  bool is_toxic() const { return value < 0; }

  friend bool operator==(ToxicityScore a, ToxicityScore b) { return a.value == b.value; }
};

enum class Gender { male, female };

inline std::string_view gender_name(Gender g) {
  return g == Gender::male ? "male" : "female";
}

inline std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Case-insensitive match after trimming; anything that is not exactly
// male/female (e.g. "other", empty) yields nullopt and is excluded at join.
inline std::optional<Gender> parse_gender(std::string_view raw) {
  const std::string g = lower_copy(trim_copy(raw));
  if (g == "male") return Gender::male;
  if (g == "female") return Gender::female;
  return std::nullopt;
}

struct CommentRecord {
  std::string rev_id;
  std::string raw_text;    // byte-for-byte as loaded
  std::string clean_text;  // placeholder tokens stripped, whitespace collapsed
  std::string split_hint;  // source split column if present, else empty
};

struct AnnotationRecord {
  std::string rev_id;
  std::string worker_id;
  ToxicityScore score;
};

struct WorkerRecord {
  std::string worker_id;
  std::string gender_raw;  // preserved verbatim; interpreted at join time
};

// One (comment, annotator, score) judgment with resolved text and gender.
struct AnnotatedExample {
  std::string rev_id;
  std::string worker_id;
  std::string text;
  ToxicityScore score;
  Gender gender;
};

// ---------------------------------------------------------------------------
// Text cleaning
// ---------------------------------------------------------------------------

// Replaces the corpus placeholder tokens NEWLINE_TOKEN / TAB_TOKEN with a
// space, collapses whitespace runs and trims the ends. Idempotent.
inline std::string clean_text(std::string_view raw) {
  static constexpr std::string_view placeholders[] = {"NEWLINE_TOKEN", "TAB_TOKEN"};
  std::string mapped;
  mapped.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    bool hit = false;
    for (auto p : placeholders) {
      if (raw.compare(i, p.size(), p) == 0) {
        mapped.push_back(' ');
        i += p.size();
        hit = true;
        break;
      }
    }
    if (!hit) {
      mapped.push_back(raw[i]);
      ++i;
    }
  }
  std::string out;
  out.reserve(mapped.size());
  bool pending_space = false;
  for (char c : mapped) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TSV loading
// ---------------------------------------------------------------------------

// Column names of the three corpus files. Addressed by header name, not
// position, so reordered files still load.
struct CorpusSchema {
  std::string comment_id = "rev_id";
  std::string comment_text = "comment";
  std::string comment_split = "split";  // optional
  std::string annotation_comment_id = "rev_id";
  std::string annotation_worker_id = "worker_id";
  std::string annotation_score = "toxicity_score";
  std::string worker_id = "worker_id";
  std::string worker_gender = "gender";
};

template <typename Record>
struct LoadResult {
  std::vector<Record> records;
  std::size_t skipped_rows = 0;  // rows that failed to parse
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

inline std::string chomp(std::string line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
  return line;
}

struct TsvReader {
  std::ifstream in;
  std::vector<std::string> header;
  std::unordered_map<std::string, std::size_t> columns;

  explicit TsvReader(const std::string& path) : in(path) {
    if (!in) throw Error(errc::io, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
      throw Error(errc::schema, "empty file, no header row: " + path);
    header = split_tabs(chomp(line));
    for (std::size_t i = 0; i < header.size(); ++i) columns.emplace(header[i], i);
  }

  std::size_t require_column(const std::string& name, const std::string& path) const {
    auto it = columns.find(name);
    if (it == columns.end())
      throw Error(errc::schema, "missing required column '" + name + "' in " + path);
    return it->second;
  }

  std::optional<std::size_t> optional_column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) return std::nullopt;
    return it->second;
  }

  bool next_row(std::vector<std::string>& fields) {
    std::string line;
    if (!std::getline(in, line)) return false;
    fields = split_tabs(chomp(line));
    return true;
  }
};

inline std::optional<int> parse_int(const std::string& s) {
  const std::string t = trim_copy(s);
  if (t.empty()) return std::nullopt;
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(t, &pos);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (pos != t.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline LoadResult<CommentRecord> load_comments(const std::string& path,
                                               const CorpusSchema& schema = {}) {
  detail::TsvReader tsv(path);
  const std::size_t id_col = tsv.require_column(schema.comment_id, path);
  const std::size_t text_col = tsv.require_column(schema.comment_text, path);
  const auto split_col = tsv.optional_column(schema.comment_split);

  LoadResult<CommentRecord> result;
  std::vector<std::string> fields;
  while (tsv.next_row(fields)) {
    if (fields.size() != tsv.header.size() ||
        trim_copy(fields[id_col]).empty()) {
      ++result.skipped_rows;
      continue;
    }
    CommentRecord rec;
    rec.rev_id = trim_copy(fields[id_col]);
    rec.raw_text = fields[text_col];
    rec.clean_text = clean_text(rec.raw_text);
    if (split_col) rec.split_hint = trim_copy(fields[*split_col]);
    result.records.push_back(std::move(rec));
  }
  return result;
}

inline LoadResult<AnnotationRecord> load_annotations(const std::string& path,
                                                     const CorpusSchema& schema = {}) {
  detail::TsvReader tsv(path);
  const std::size_t id_col = tsv.require_column(schema.annotation_comment_id, path);
  const std::size_t worker_col = tsv.require_column(schema.annotation_worker_id, path);
  const std::size_t score_col = tsv.require_column(schema.annotation_score, path);

  LoadResult<AnnotationRecord> result;
  std::unordered_set<std::string> seen;
  std::vector<std::string> fields;
  std::size_t row_index = 0;  // first data row is 1
  while (tsv.next_row(fields)) {
    ++row_index;
    if (fields.size() != tsv.header.size()) {
      ++result.skipped_rows;
      continue;
    }
    AnnotationRecord rec;
    rec.rev_id = trim_copy(fields[id_col]);
    rec.worker_id = trim_copy(fields[worker_col]);
    if (rec.rev_id.empty() || rec.worker_id.empty()) {
      ++result.skipped_rows;
      continue;
    }
    const auto score = detail::parse_int(fields[score_col]);
    if (!score) {
      ++result.skipped_rows;
      continue;
    }
    if (*score < -2 || *score > 2)
      throw Error(errc::schema, "toxicity score out of range at data row " +
                                    std::to_string(row_index) + ": " + fields[score_col]);
    rec.score = ToxicityScore{*score};
    const std::string key = rec.rev_id + '\t' + rec.worker_id;
    if (!seen.insert(key).second)
      throw Error(errc::duplicate, "duplicate annotation for (rev_id=" + rec.rev_id +
                                       ", worker_id=" + rec.worker_id + ")");
    result.records.push_back(std::move(rec));
  }
  return result;
}

inline LoadResult<WorkerRecord> load_demographics(const std::string& path,
                                                  const CorpusSchema& schema = {}) {
  detail::TsvReader tsv(path);
  const std::size_t worker_col = tsv.require_column(schema.worker_id, path);
  const std::size_t gender_col = tsv.require_column(schema.worker_gender, path);

  LoadResult<WorkerRecord> result;
  std::unordered_set<std::string> seen;
  std::vector<std::string> fields;
  while (tsv.next_row(fields)) {
    if (fields.size() != tsv.header.size()) {
      ++result.skipped_rows;
      continue;
    }
    WorkerRecord rec;
    rec.worker_id = trim_copy(fields[worker_col]);
    rec.gender_raw = fields[gender_col];
    if (rec.worker_id.empty() || !seen.insert(rec.worker_id).second) {
      ++result.skipped_rows;  // blank id or repeated worker row: first one wins
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Join
// ---------------------------------------------------------------------------

struct JoinStats {
  std::size_t joined = 0;
  std::size_t unknown_comment = 0;   // annotation rev_id not in comments
  std::size_t unknown_worker = 0;    // annotation worker_id not in demographics
  std::size_t gender_excluded = 0;   // gender not male/female ('other', blank, ...)
  std::size_t empty_text = 0;        // clean text empty after stripping
};

struct JoinedCorpus {
  std::vector<AnnotatedExample> examples;
  JoinStats stats;
};

// Inner join of annotations with comments (rev_id) and demographics
// (worker_id). Annotations whose gender is not male/female, or whose comment
// text is empty after cleaning, are dropped and counted. Output order follows
// annotation order; the example multiset is independent of input ordering.
inline JoinedCorpus join_corpus(const std::vector<CommentRecord>& comments,
                                const std::vector<AnnotationRecord>& annotations,
                                const std::vector<WorkerRecord>& workers) {
  std::unordered_map<std::string_view, const CommentRecord*> by_rev;
  by_rev.reserve(comments.size());
  for (const auto& c : comments) by_rev.emplace(c.rev_id, &c);

  std::unordered_map<std::string_view, const WorkerRecord*> by_worker;
  by_worker.reserve(workers.size());
  for (const auto& w : workers) by_worker.emplace(w.worker_id, &w);

  JoinedCorpus out;
  out.examples.reserve(annotations.size());
  for (const auto& a : annotations) {
    const auto c = by_rev.find(a.rev_id);
    if (c == by_rev.end()) {
      ++out.stats.unknown_comment;
      continue;
    }
    const auto w = by_worker.find(a.worker_id);
    if (w == by_worker.end()) {
      ++out.stats.unknown_worker;
      continue;
    }
    const auto gender = parse_gender(w->second->gender_raw);
    if (!gender) {
      ++out.stats.gender_excluded;
      continue;
    }
    if (c->second->clean_text.empty()) {
      ++out.stats.empty_text;
      continue;
    }
    out.examples.push_back(AnnotatedExample{a.rev_id, a.worker_id,
                                            c->second->clean_text, a.score, *gender});
  }
  out.stats.joined = out.examples.size();
  return out;
}

// ---------------------------------------------------------------------------
// Preliminary statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
  std::size_t total = 0;
  std::size_t count_male = 0;
  std::size_t count_female = 0;
  double female_annotation_share = 0;
  double toxic_rate_male = 0;    // fraction of male annotations with score < 0
  double toxic_rate_female = 0;
  double mean_score_male = 0;
  double mean_score_female = 0;
  // counts[gender][score + 2], gender 0 = male, 1 = female
  std::array<std::array<std::size_t, 5>, 2> score_counts{};
};

inline CorpusStats corpus_stats(const std::vector<AnnotatedExample>& examples) {
  if (examples.empty()) throw Error(errc::empty_corpus, "no examples to summarize");
  CorpusStats s;
  s.total = examples.size();
  std::array<std::size_t, 2> toxic{};
  std::array<long long, 2> score_sum{};
  for (const auto& ex : examples) {
    const std::size_t g = ex.gender == Gender::male ? 0 : 1;
    ++s.score_counts[g][static_cast<std::size_t>(ex.score.value + 2)];
    if (ex.score.is_toxic()) ++toxic[g];
    score_sum[g] += ex.score.value;
  }
  for (std::size_t g = 0; g < 2; ++g) {
    std::size_t n = 0;
    for (auto c : s.score_counts[g]) n += c;
    (g == 0 ? s.count_male : s.count_female) = n;
  }
  s.female_annotation_share = static_cast<double>(s.count_female) / static_cast<double>(s.total);
  if (s.count_male > 0) {
    s.toxic_rate_male = static_cast<double>(toxic[0]) / static_cast<double>(s.count_male);
    s.mean_score_male = static_cast<double>(score_sum[0]) / static_cast<double>(s.count_male);
  }
  if (s.count_female > 0) {
    s.toxic_rate_female = static_cast<double>(toxic[1]) / static_cast<double>(s.count_female);
    s.mean_score_female = static_cast<double>(score_sum[1]) / static_cast<double>(s.count_female);
  }
  return s;
}

inline nlohmann::json to_json(const CorpusStats& s) {
  nlohmann::json counts;
  for (std::size_t g = 0; g < 2; ++g) {
    nlohmann::json per_score;
    for (int v = -2; v <= 2; ++v)
      per_score[std::to_string(v)] = s.score_counts[g][static_cast<std::size_t>(v + 2)];
    counts[g == 0 ? "male" : "female"] = per_score;
  }
  return nlohmann::json{
      {"total_annotations", s.total},
      {"count_male", s.count_male},
      {"count_female", s.count_female},
      {"female_annotation_share", s.female_annotation_share},
      {"toxic_rate", {{"male", s.toxic_rate_male}, {"female", s.toxic_rate_female}}},
      {"mean_score", {{"male", s.mean_score_male}, {"female", s.mean_score_female}}},
      {"score_counts", counts},
  };
}

inline nlohmann::json to_json(const JoinStats& s) {
  return nlohmann::json{
      {"joined", s.joined},
      {"dropped_unknown_comment", s.unknown_comment},
      {"dropped_unknown_worker", s.unknown_worker},
      {"dropped_gender_excluded", s.gender_excluded},
      {"dropped_empty_text", s.empty_text},
  };
}

}  // namespace annobias
