#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "annobias/corpus.hpp"
#include "annobias/error.hpp"

namespace annobias {

enum class Task { gender, toxicity };

inline std::string_view task_name(Task t) {
  return t == Task::gender ? "gender" : "toxicity";
}

inline Task parse_task(std::string_view s) {
  if (s == "gender") return Task::gender;
  if (s == "toxicity") return Task::toxicity;
  throw Error(errc::parameter, "unknown task: " + std::string(s));
}

// Positive-class convention, fixed across the toolkit:
//   gender task   -> positive = female annotator
//   toxicity task -> positive = toxic annotation (score < 0)
inline int label_for(Task task, const AnnotatedExample& ex) {
  if (task == Task::gender) return ex.gender == Gender::female ? 1 : 0;
  return ex.score.is_toxic() ? 1 : 0;
}

struct DatasetExample {
  std::string rev_id;
  std::string worker_id;
  std::string text;
  int label = 0;  // 1 = positive class
  int score = 0;  // original toxicity score
  Gender gender = Gender::male;

  friend bool operator==(const DatasetExample& a, const DatasetExample& b) {
    return a.rev_id == b.rev_id && a.worker_id == b.worker_id && a.text == b.text &&
           a.label == b.label && a.score == b.score && a.gender == b.gender;
  }
};

inline DatasetExample to_dataset_example(Task task, const AnnotatedExample& ex) {
  return DatasetExample{ex.rev_id, ex.worker_id, ex.text,
                        label_for(task, ex), ex.score.value, ex.gender};
}

struct Dataset {
  Task task = Task::gender;
  std::vector<DatasetExample> examples;
  std::vector<std::string> transform_log;  // names of transforms applied, in order

  std::size_t size() const { return examples.size(); }
};

// Stratum key used for quota accounting, manifests and stratified splitting.
// Gender task strata are (gender, score) cells; toxicity task strata are the
// two toxic scores plus the pooled healthy scores.
inline std::string stratum_key(Task task, const DatasetExample& ex) {
  if (task == Task::gender)
    return std::string(gender_name(ex.gender)) + ":" + std::to_string(ex.score);
  if (ex.score < 0) return "toxic:" + std::to_string(ex.score);
  return "healthy:+1+2";
}

inline std::map<std::string, std::size_t> stratum_counts(const Dataset& ds) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : ds.examples) ++counts[stratum_key(ds.task, ex)];
  return counts;
}

// ---------------------------------------------------------------------------
// Newline-delimited JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DatasetExample& ex) {
  return nlohmann::json{
      {"rev_id", ex.rev_id},   {"worker_id", ex.worker_id},
      {"text", ex.text},       {"label", ex.label},
      {"score", ex.score},     {"gender", std::string(gender_name(ex.gender))},
  };
}

inline DatasetExample dataset_example_from_json(const nlohmann::json& j) {
  DatasetExample ex;
  ex.rev_id = j.at("rev_id").get<std::string>();
  ex.worker_id = j.at("worker_id").get<std::string>();
  ex.text = j.at("text").get<std::string>();
  ex.label = j.at("label").get<int>();
  ex.score = j.at("score").get<int>();
  const auto g = parse_gender(j.at("gender").get<std::string>());
  if (!g) throw Error(errc::schema, "bad gender in dataset record");
  ex.gender = *g;
  return ex;
}

inline void write_dataset_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  for (const auto& ex : ds.examples) out << to_json(ex).dump() << '\n';
}

inline Dataset read_dataset_jsonl(const std::string& path, Task task) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open " + path);
  Dataset ds;
  ds.task = task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(errc::schema, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ds.examples.push_back(dataset_example_from_json(j));
  }
  return ds;
}

// Written next to sampled datasets; records how the set was built.
struct DatasetManifest {
  Task task = Task::gender;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> strata;  // realized per-stratum counts
  std::vector<std::string> transform_log;
  std::size_t size = 0;
  std::map<std::string, std::size_t> notes;  // e.g. excluded score-0 count
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  return nlohmann::json{
      {"task", std::string(task_name(m.task))},
      {"seed", m.seed},
      {"size", m.size},
      {"strata", m.strata},
      {"transform_log", m.transform_log},
      {"notes", m.notes},
  };
}

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << to_json(m).dump(2) << '\n';
}

}  // namespace annobias
