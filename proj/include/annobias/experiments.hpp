#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "annobias/attribution.hpp"
#include "annobias/classifier.hpp"
#include "annobias/corpus.hpp"
#include "annobias/dataset.hpp"
#include "annobias/error.hpp"
#include "annobias/lexicon.hpp"
#include "annobias/metrics.hpp"
#include "annobias/sampling.hpp"

namespace annobias {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

struct StudyToggles {
  bool correlation = true;
  bool distribution = true;
  bool attribution = true;
};

struct ExperimentPlan {
  std::string comments_path;
  std::string annotations_path;
  std::string demographics_path;
  std::string blacklist_path;
  std::vector<std::uint64_t> seeds = {42, 5936, 9743, 14280, 29988};
  std::optional<std::size_t> gender_dataset_size;    // total examples before splitting
  std::optional<std::size_t> toxicity_dataset_size;  // per gender condition
  double test_fraction = 0.2;
  std::string backend{kReferenceBackend};
  TrainConfig train;
  std::string output_dir;
  std::size_t attribution_steps = 50;
  std::size_t attribution_top_k = 10;
  // Alternative reading of the NotVeryToxic condition: also drop score -2
  // from that model's test data instead of sharing the full test sets.
  bool not_very_toxic_filtered_test = false;
  StudyToggles studies;
};

inline void validate_plan(const ExperimentPlan& plan) {
  namespace fs = std::filesystem;
  for (const auto& [label, path] :
       {std::pair{"comments", plan.comments_path},
        std::pair{"annotations", plan.annotations_path},
        std::pair{"demographics", plan.demographics_path},
        std::pair{"blacklist", plan.blacklist_path}}) {
    if (path.empty()) throw Error(errc::parameter, std::string(label) + "_path is not set");
    if (!fs::exists(path))
      throw Error(errc::io, std::string(label) + " file not found: " + path);
  }
  if (plan.seeds.empty()) throw Error(errc::parameter, "plan needs at least one seed");
  std::set<std::uint64_t> distinct(plan.seeds.begin(), plan.seeds.end());
  if (distinct.size() != plan.seeds.size())
    throw Error(errc::parameter, "plan seeds must be distinct");
  if (!(plan.test_fraction > 0 && plan.test_fraction < 1))
    throw Error(errc::parameter, "test_fraction must lie in (0, 1)");
  if (plan.backend != kReferenceBackend)
    throw Error(errc::capability, "unknown backend: " + plan.backend);
  plan.train.validate();
}

inline nlohmann::json to_json(const ExperimentPlan& p) {
  return nlohmann::json{
      {"comments_path", p.comments_path},
      {"annotations_path", p.annotations_path},
      {"demographics_path", p.demographics_path},
      {"blacklist_path", p.blacklist_path},
      {"seeds", p.seeds},
      {"gender_dataset_size",
       p.gender_dataset_size ? nlohmann::json(*p.gender_dataset_size) : nlohmann::json(nullptr)},
      {"toxicity_dataset_size",
       p.toxicity_dataset_size ? nlohmann::json(*p.toxicity_dataset_size) : nlohmann::json(nullptr)},
      {"test_fraction", p.test_fraction},
      {"backend", p.backend},
      {"train", to_json(p.train)},
      {"output_dir", p.output_dir},
      {"attribution_steps", p.attribution_steps},
      {"attribution_top_k", p.attribution_top_k},
      {"not_very_toxic_filtered_test", p.not_very_toxic_filtered_test},
      {"studies",
       {{"correlation", p.studies.correlation},
        {"distribution", p.studies.distribution},
        {"attribution", p.studies.attribution}}},
  };
}

inline ExperimentPlan experiment_plan_from_json(const nlohmann::json& j) {
  ExperimentPlan p;
  p.comments_path = j.value("comments_path", "");
  p.annotations_path = j.value("annotations_path", "");
  p.demographics_path = j.value("demographics_path", "");
  p.blacklist_path = j.value("blacklist_path", "");
  if (j.contains("seeds")) p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("gender_dataset_size") && !j.at("gender_dataset_size").is_null())
    p.gender_dataset_size = j.at("gender_dataset_size").get<std::size_t>();
  if (j.contains("toxicity_dataset_size") && !j.at("toxicity_dataset_size").is_null())
    p.toxicity_dataset_size = j.at("toxicity_dataset_size").get<std::size_t>();
  p.test_fraction = j.value("test_fraction", 0.2);
  p.backend = j.value("backend", std::string(kReferenceBackend));
  if (j.contains("train")) p.train = train_config_from_json(j.at("train"));
  p.output_dir = j.value("output_dir", "");
  p.attribution_steps = j.value("attribution_steps", std::size_t{50});
  p.attribution_top_k = j.value("attribution_top_k", std::size_t{10});
  p.not_very_toxic_filtered_test = j.value("not_very_toxic_filtered_test", false);
  if (j.contains("studies")) {
    const auto& s = j.at("studies");
    p.studies.correlation = s.value("correlation", true);
    p.studies.distribution = s.value("distribution", true);
    p.studies.attribution = s.value("attribution", true);
  }
  return p;
}

inline ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open plan file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::schema, "bad plan file " + path + ": " + e.what());
  }
  return experiment_plan_from_json(j);
}

// ---------------------------------------------------------------------------
// Shared evaluation helpers
// ---------------------------------------------------------------------------

inline BiasReport evaluate(const TrainedModel& model, const Dataset& test) {
  if (test.examples.empty()) throw Error(errc::parameter, "empty test set");
  std::vector<int> predicted, truth;
  predicted.reserve(test.examples.size());
  truth.reserve(test.examples.size());
  for (const auto& ex : test.examples) {
    predicted.push_back(predict_label(model, tokenize(ex.text, model.vocab, model.config.max_len)));
    truth.push_back(ex.label);
  }
  return make_bias_report(confusion(predicted, truth), model.task);
}

namespace detail {

inline std::set<std::string> rev_ids(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& ex : ds.examples) ids.insert(ex.rev_id);
  return ids;
}

// Train/test comment sets must be disjoint within a seed; a violation is an
// internal invariant breach, not bad input.
inline void assert_no_leakage(const Dataset& train, const Dataset& test) {
  const auto train_ids = rev_ids(train);
  for (const auto& ex : test.examples)
    if (train_ids.count(ex.rev_id))
      throw Error(errc::internal, "rev_id " + ex.rev_id + " appears in both train and test");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gender mitigation study
// ---------------------------------------------------------------------------

struct GenderCell {
  std::string model_condition;  // original | no_profanity | not_very_toxic
  std::string test_condition;   // with_profanity | without_profanity
  std::uint64_t seed = 0;
  BiasReport report;
};

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct CorrelationStudy {
  std::string model_condition;
  std::uint64_t seed = 0;
  std::vector<double> offensive_counts;      // per test example
  std::vector<double> probability_positive;  // P(female) aligned with counts
  std::optional<double> spearman_rho;        // null when counts are constant
};

struct DistributionStudy {
  std::uint64_t seed = 0;
  std::map<std::string, KdeCurve> curves;  // true_male, true_female, pred_male, pred_female
  std::vector<std::string> empty_partitions;
};

struct GenderAggregate {
  std::string model_condition;
  std::string test_condition;
  double mean_abs_gap = 0;
  std::optional<double> sd_abs_gap;
  double mean_signed_gap = 0;
  double mean_male_rate = 0;
  std::size_t runs = 0;
};

struct GenderStudyReport {
  int schema_version = kReportSchemaVersion;
  nlohmann::json plan;
  std::vector<GenderCell> cells;
  std::vector<GenderAggregate> aggregates;
  // 1 - mean|gap|(no_profanity) / mean|gap|(original), both on unscrubbed test
  std::optional<double> no_profanity_bias_reduction;
  std::vector<CorrelationStudy> correlations;
  std::optional<DistributionStudy> distribution;
  std::optional<AttributionSummary> attribution;
  std::vector<AttributedExample> attributed_examples;
  std::vector<SeedFailure> failures;
  std::map<std::string, std::vector<std::string>> transform_logs;
};

inline CorrelationStudy run_correlation_study(const TrainedModel& model, const Dataset& test,
                                              const Blacklist& blacklist) {
  CorrelationStudy study;
  for (const auto& ex : test.examples) {
    study.offensive_counts.push_back(
        static_cast<double>(count_offensive(ex.text, blacklist)));
    study.probability_positive.push_back(
        predict_proba(model, tokenize(ex.text, model.vocab, model.config.max_len)));
  }
  if (study.offensive_counts.size() >= 2)
    study.spearman_rho = spearman(study.offensive_counts, study.probability_positive);
  return study;
}

inline DistributionStudy run_distribution_study(const TrainedModel& model, const Dataset& test,
                                                const Blacklist& blacklist,
                                                std::optional<std::vector<double>> grid =
                                                    std::nullopt) {
  DistributionStudy study;
  std::map<std::string, std::vector<double>> partitions;
  double max_count = 0;
  for (const auto& ex : test.examples) {
    const auto count = static_cast<double>(count_offensive(ex.text, blacklist));
    max_count = std::max(max_count, count);
    const int pred = predict_label(model, tokenize(ex.text, model.vocab, model.config.max_len));
    partitions[ex.label ? "true_female" : "true_male"].push_back(count);
    partitions[pred ? "pred_female" : "pred_male"].push_back(count);
  }
  std::vector<double> shared_grid;
  if (grid) {
    shared_grid = *grid;
  } else {
    // wide enough that every partition's density integrates to ~1 on it
    double max_h = 0;
    for (const auto& [_, values] : partitions) {
      const double sd = sample_std(values);
      max_h = std::max(max_h, sd > 0 ? sd * std::pow(static_cast<double>(values.size()), -0.2)
                                     : 1.0);
    }
    shared_grid = linspace(-8.0 * max_h, max_count + 8.0 * max_h, 201);
  }
  for (const auto& name : {"true_male", "true_female", "pred_male", "pred_female"}) {
    auto it = partitions.find(name);
    if (it == partitions.end() || it->second.empty()) {
      study.empty_partitions.emplace_back(name);
      continue;
    }
    study.curves.emplace(name, kde(it->second, std::nullopt, shared_grid));
  }
  return study;
}

struct AttributionStudy {
  AttributionSummary summary;
  std::vector<AttributedExample> examples;
};

inline AttributionStudy run_attribution_study(const TrainedModel& model, const Dataset& test,
                                              std::size_t top_k, std::size_t steps = 50) {
  AttributionStudy study;
  for (const auto& ex : test.examples) {
    AttributedExample attributed;
    attributed.rev_id = ex.rev_id;
    attributed.worker_id = ex.worker_id;
    attributed.true_label = ex.label;
    attributed.result =
        integrated_gradients(model, tokenize(ex.text, model.vocab, model.config.max_len), steps);
    study.examples.push_back(std::move(attributed));
  }
  study.summary = attribution_summary(model, test, top_k, steps);
  return study;
}

inline GenderStudyReport run_gender_study(const ExperimentPlan& plan,
                                          const std::vector<AnnotatedExample>& corpus,
                                          const Blacklist& blacklist) {
  GenderStudyReport report;
  report.plan = to_json(plan);

  bool studies_done = false;
  for (const auto seed : plan.seeds) {
    try {
      const Dataset base = build_gender_task(corpus, seed, plan.gender_dataset_size);
      auto [train_set, test_with] = split_train_test(base, plan.test_fraction, seed);
      const Dataset test_without = scrub_dataset(test_with, blacklist);

      std::map<std::string, Dataset> trains;
      trains.emplace("original", train_set);
      trains.emplace("no_profanity", scrub_dataset(train_set, blacklist));
      trains.emplace("not_very_toxic",
                     scrub_dataset(drop_very_toxic(train_set, seed), blacklist));

      const std::string seed_tag = "seed-" + std::to_string(seed);
      report.transform_logs[seed_tag + "/test_with_profanity"] = test_with.transform_log;
      report.transform_logs[seed_tag + "/test_without_profanity"] = test_without.transform_log;

      TrainConfig config = plan.train;
      config.seed = seed;
      std::map<std::string, TrainedModel> models;
      for (const auto& [condition, train_data] : trains) {
        detail::assert_no_leakage(train_data, test_with);
        report.transform_logs[seed_tag + "/train_" + condition] = train_data.transform_log;
        models.emplace(condition, train(train_data, config));
      }

      const std::pair<const char*, const Dataset*> test_pairs[] = {
          {"with_profanity", &test_with}, {"without_profanity", &test_without}};
      for (const auto& [condition, model] : models) {
        for (const auto& [test_condition, test_data] : test_pairs) {
          Dataset filtered;  // lives long enough for evaluate below
          const Dataset* effective = test_data;
          if (condition == "not_very_toxic" && plan.not_very_toxic_filtered_test) {
            filtered.task = test_data->task;
            filtered.transform_log = test_data->transform_log;
            for (const auto& ex : test_data->examples)
              if (ex.score != -2) filtered.examples.push_back(ex);
            effective = &filtered;
          }
          BiasReport cell_report = evaluate(model, *effective);
          cell_report.seed = seed;
          cell_report.model_id = condition;
          cell_report.test_id = test_condition;
          report.cells.push_back(GenderCell{condition, test_condition, seed, cell_report});
        }
      }

      if (!studies_done) {
        if (plan.studies.correlation) {
          for (const auto& [condition, model] : models) {
            CorrelationStudy study = run_correlation_study(model, test_with, blacklist);
            study.model_condition = condition;
            study.seed = seed;
            report.correlations.push_back(std::move(study));
          }
        }
        if (plan.studies.distribution) {
          DistributionStudy study =
              run_distribution_study(models.at("original"), test_with, blacklist);
          study.seed = seed;
          report.distribution = std::move(study);
        }
        if (plan.studies.attribution) {
          AttributionStudy study =
              run_attribution_study(models.at("original"), test_with, plan.attribution_top_k,
                                    plan.attribution_steps);
          report.attribution = std::move(study.summary);
          report.attributed_examples = std::move(study.examples);
        }
        studies_done = true;
      }
    } catch (const Error& e) {
      report.failures.push_back(SeedFailure{seed, e.what()});
    }
  }

  // aggregate per (model condition, test condition) over successful seeds
  for (const auto* condition : {"original", "no_profanity", "not_very_toxic"}) {
    for (const auto* test_condition : {"with_profanity", "without_profanity"}) {
      std::vector<double> abs_gaps, signed_gaps, male_rates;
      for (const auto& cell : report.cells) {
        if (cell.model_condition != condition || cell.test_condition != test_condition) continue;
        if (cell.report.bias_gap) {
          abs_gaps.push_back(std::abs(*cell.report.bias_gap));
          signed_gaps.push_back(*cell.report.bias_gap);
        }
        if (cell.report.male_prediction_rate)
          male_rates.push_back(*cell.report.male_prediction_rate);
      }
      if (abs_gaps.empty()) continue;
      GenderAggregate agg;
      agg.model_condition = condition;
      agg.test_condition = test_condition;
      const auto abs_agg = aggregate_runs(abs_gaps);
      agg.mean_abs_gap = abs_agg.mean;
      agg.sd_abs_gap = abs_agg.sd;
      agg.mean_signed_gap = aggregate_runs(signed_gaps).mean;
      agg.mean_male_rate = male_rates.empty() ? 0 : aggregate_runs(male_rates).mean;
      agg.runs = abs_gaps.size();
      report.aggregates.push_back(std::move(agg));
    }
  }
  const auto find_agg = [&](std::string_view m, std::string_view t) -> const GenderAggregate* {
    for (const auto& a : report.aggregates)
      if (a.model_condition == m && a.test_condition == t) return &a;
    return nullptr;
  };
  const auto* original = find_agg("original", "with_profanity");
  const auto* scrubbed = find_agg("no_profanity", "with_profanity");
  if (original && scrubbed && original->mean_abs_gap > 0)
    report.no_profanity_bias_reduction = 1.0 - scrubbed->mean_abs_gap / original->mean_abs_gap;
  return report;
}

// ---------------------------------------------------------------------------
// Cross-gender toxicity matrix
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& matrix_condition_names() {
  static const std::vector<std::string> names = {"Male", "MaleNoProfanity", "Female",
                                                 "FemaleNoProfanity"};
  return names;
}

inline constexpr std::string_view kBaselineModel = "Male+Female";

struct MatrixCell {
  std::string model;
  std::string test;
  std::uint64_t seed = 0;
  std::optional<double> sensitivity;
  std::size_t n = 0;
};

struct MatrixAggregate {
  std::string model;
  std::string test;
  std::optional<double> mean;
  std::optional<double> sd;
  std::size_t runs = 0;
};

struct ToxicityMatrixReport {
  int schema_version = kReportSchemaVersion;
  nlohmann::json plan;
  std::vector<MatrixCell> cells;          // includes the baseline row (one seed)
  std::vector<MatrixAggregate> aggregates;
  std::vector<SeedFailure> failures;
  std::map<std::string, std::vector<std::string>> transform_logs;
  // mean sensitivity advantage of female-trained over male-trained models,
  // paired per (test set, seed, profanity condition)
  std::optional<double> female_advantage_mean;
  std::optional<double> female_advantage_sd;
  // mean sensitivity change from training without profanity, evaluated on
  // unmodified test data
  std::optional<double> no_profanity_gain_mean;
};

inline ToxicityMatrixReport run_toxicity_matrix(const ExperimentPlan& plan,
                                                const std::vector<AnnotatedExample>& corpus,
                                                const Blacklist& blacklist) {
  ToxicityMatrixReport report;
  report.plan = to_json(plan);

  bool baseline_done = false;
  for (const auto seed : plan.seeds) {
    try {
      const Dataset male_ds =
          build_toxicity_task(corpus, GenderFilter::male, seed, plan.toxicity_dataset_size);
      const Dataset female_ds =
          build_toxicity_task(corpus, GenderFilter::female, seed, plan.toxicity_dataset_size);
      // one shared comment-level split so no test text of either gender
      // appears in any training set of this seed
      auto splits = split_train_test_shared({&male_ds, &female_ds}, plan.test_fraction, seed);
      auto& [train_male, test_male] = splits[0];
      auto& [train_female, test_female] = splits[1];

      std::map<std::string, Dataset> trains, tests;
      trains.emplace("Male", std::move(train_male));
      trains.emplace("Female", std::move(train_female));
      trains.emplace("MaleNoProfanity", scrub_dataset(trains.at("Male"), blacklist));
      trains.emplace("FemaleNoProfanity", scrub_dataset(trains.at("Female"), blacklist));
      tests.emplace("Male", std::move(test_male));
      tests.emplace("Female", std::move(test_female));
      tests.emplace("MaleNoProfanity", scrub_dataset(tests.at("Male"), blacklist));
      tests.emplace("FemaleNoProfanity", scrub_dataset(tests.at("Female"), blacklist));

      const std::string seed_tag = "seed-" + std::to_string(seed);
      for (const auto& [name, ds] : trains)
        report.transform_logs[seed_tag + "/train_" + name] = ds.transform_log;
      for (const auto& [name, ds] : tests)
        report.transform_logs[seed_tag + "/test_" + name] = ds.transform_log;

      TrainConfig config = plan.train;
      config.seed = seed;
      std::map<std::string, TrainedModel> models;
      for (const auto& name : matrix_condition_names()) {
        for (const auto& [test_name, test_ds] : tests)
          detail::assert_no_leakage(trains.at(name), test_ds);
        models.emplace(name, train(trains.at(name), config));
      }
      if (!baseline_done) {
        Dataset union_train;
        union_train.task = Task::toxicity;
        union_train.examples = trains.at("Male").examples;
        union_train.examples.insert(union_train.examples.end(),
                                    trains.at("Female").examples.begin(),
                                    trains.at("Female").examples.end());
        union_train.examples = balance_by_gender(
            union_train.examples, [](const DatasetExample& e) { return e.gender; }, seed);
        models.emplace(std::string(kBaselineModel), train(union_train, config));
        baseline_done = true;
      }

      for (const auto& [model_name, model] : models) {
        for (const auto& name : matrix_condition_names()) {
          BiasReport r = evaluate(model, tests.at(name));
          MatrixCell cell;
          cell.model = model_name;
          cell.test = name;
          cell.seed = seed;
          cell.sensitivity = r.sensitivity;
          cell.n = r.n;
          report.cells.push_back(std::move(cell));
        }
      }
    } catch (const Error& e) {
      report.failures.push_back(SeedFailure{seed, e.what()});
    }
  }

  std::vector<std::string> model_rows = matrix_condition_names();
  model_rows.emplace_back(kBaselineModel);
  for (const auto& model_name : model_rows) {
    for (const auto& test_name : matrix_condition_names()) {
      std::vector<double> values;
      for (const auto& cell : report.cells)
        if (cell.model == model_name && cell.test == test_name && cell.sensitivity)
          values.push_back(*cell.sensitivity);
      MatrixAggregate agg;
      agg.model = model_name;
      agg.test = test_name;
      agg.runs = values.size();
      if (!values.empty()) {
        const auto a = aggregate_runs(values);
        agg.mean = a.mean;
        agg.sd = a.sd;
      }
      report.aggregates.push_back(std::move(agg));
    }
  }

  // female-vs-male advantage, paired within (seed, test set, profanity condition)
  {
    auto cell_value = [&](std::string_view model, std::string_view test,
                          std::uint64_t seed) -> std::optional<double> {
      for (const auto& cell : report.cells)
        if (cell.model == model && cell.test == test && cell.seed == seed) return cell.sensitivity;
      return std::nullopt;
    };
    std::vector<double> diffs, gains;
    for (const auto seed : plan.seeds) {
      for (const auto& test_name : matrix_condition_names()) {
        const auto female = cell_value("Female", test_name, seed);
        const auto male = cell_value("Male", test_name, seed);
        if (female && male) diffs.push_back(*female - *male);
        const auto female_np = cell_value("FemaleNoProfanity", test_name, seed);
        const auto male_np = cell_value("MaleNoProfanity", test_name, seed);
        if (female_np && male_np) diffs.push_back(*female_np - *male_np);
      }
      for (const auto* test_name : {"Male", "Female"}) {  // unmodified test data
        for (const auto* base : {"Male", "Female"}) {
          const auto plain = cell_value(base, test_name, seed);
          const auto scrubbed = cell_value(std::string(base) + "NoProfanity", test_name, seed);
          if (plain && scrubbed) gains.push_back(*scrubbed - *plain);
        }
      }
    }
    if (!diffs.empty()) {
      const auto a = aggregate_runs(diffs);
      report.female_advantage_mean = a.mean;
      report.female_advantage_sd = a.sd;
    }
    if (!gains.empty()) report.no_profanity_gain_mean = aggregate_runs(gains).mean;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const GenderStudyReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"model_condition", c.model_condition},
                     {"test_condition", c.test_condition},
                     {"seed", c.seed},
                     {"report", to_json(c.report)}});
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : r.aggregates) {
    aggregates.push_back({{"model_condition", a.model_condition},
                          {"test_condition", a.test_condition},
                          {"mean_abs_gap", a.mean_abs_gap},
                          {"sd_abs_gap", detail::opt_json(a.sd_abs_gap)},
                          {"mean_signed_gap", a.mean_signed_gap},
                          {"mean_male_rate", a.mean_male_rate},
                          {"runs", a.runs}});
  }
  nlohmann::json correlations = nlohmann::json::array();
  for (const auto& c : r.correlations) {
    correlations.push_back({{"model_condition", c.model_condition},
                            {"seed", c.seed},
                            {"offensive_counts", c.offensive_counts},
                            {"probability_positive", c.probability_positive},
                            {"spearman_rho", detail::opt_json(c.spearman_rho)}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"seed", f.seed}, {"error", f.error}});

  nlohmann::json j{
      {"kind", "gender_study"},
      {"schema_version", r.schema_version},
      {"plan", r.plan},
      {"cells", cells},
      {"aggregates", aggregates},
      {"no_profanity_bias_reduction", detail::opt_json(r.no_profanity_bias_reduction)},
      {"correlations", correlations},
      {"failures", failures},
      {"transform_logs", r.transform_logs},
  };
  if (r.distribution) {
    nlohmann::json curves;
    for (const auto& [name, curve] : r.distribution->curves) curves[name] = to_json(curve);
    j["distribution"] = {{"seed", r.distribution->seed},
                         {"curves", curves},
                         {"empty_partitions", r.distribution->empty_partitions}};
  } else {
    j["distribution"] = nullptr;
  }
  j["attribution"] = r.attribution ? to_json(*r.attribution) : nlohmann::json(nullptr);
  return j;
}

inline GenderStudyReport gender_study_from_json(const nlohmann::json& j) {
  GenderStudyReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.plan = j.at("plan");
  for (const auto& c : j.at("cells")) {
    r.cells.push_back(GenderCell{c.at("model_condition").get<std::string>(),
                                 c.at("test_condition").get<std::string>(),
                                 c.at("seed").get<std::uint64_t>(),
                                 bias_report_from_json(c.at("report"))});
  }
  for (const auto& a : j.at("aggregates")) {
    GenderAggregate agg;
    agg.model_condition = a.at("model_condition").get<std::string>();
    agg.test_condition = a.at("test_condition").get<std::string>();
    agg.mean_abs_gap = a.at("mean_abs_gap").get<double>();
    agg.sd_abs_gap = detail::opt_from_json(a.at("sd_abs_gap"));
    agg.mean_signed_gap = a.at("mean_signed_gap").get<double>();
    agg.mean_male_rate = a.at("mean_male_rate").get<double>();
    agg.runs = a.at("runs").get<std::size_t>();
    r.aggregates.push_back(std::move(agg));
  }
  r.no_profanity_bias_reduction = detail::opt_from_json(j.at("no_profanity_bias_reduction"));
  for (const auto& c : j.at("correlations")) {
    CorrelationStudy study;
    study.model_condition = c.at("model_condition").get<std::string>();
    study.seed = c.at("seed").get<std::uint64_t>();
    study.offensive_counts = c.at("offensive_counts").get<std::vector<double>>();
    study.probability_positive = c.at("probability_positive").get<std::vector<double>>();
    study.spearman_rho = detail::opt_from_json(c.at("spearman_rho"));
    r.correlations.push_back(std::move(study));
  }
  if (!j.at("distribution").is_null()) {
    DistributionStudy study;
    study.seed = j.at("distribution").at("seed").get<std::uint64_t>();
    for (const auto& [name, curve] : j.at("distribution").at("curves").items())
      study.curves.emplace(name, kde_curve_from_json(curve));
    study.empty_partitions =
        j.at("distribution").at("empty_partitions").get<std::vector<std::string>>();
    r.distribution = std::move(study);
  }
  if (!j.at("attribution").is_null())
    r.attribution = attribution_summary_from_json(j.at("attribution"));
  for (const auto& f : j.at("failures"))
    r.failures.push_back(
        SeedFailure{f.at("seed").get<std::uint64_t>(), f.at("error").get<std::string>()});
  r.transform_logs =
      j.at("transform_logs").get<std::map<std::string, std::vector<std::string>>>();
  return r;
}

inline nlohmann::json to_json(const ToxicityMatrixReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"model", c.model},
                     {"test", c.test},
                     {"seed", c.seed},
                     {"sensitivity", detail::opt_json(c.sensitivity)},
                     {"n", c.n}});
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : r.aggregates) {
    aggregates.push_back({{"model", a.model},
                          {"test", a.test},
                          {"mean", detail::opt_json(a.mean)},
                          {"sd", detail::opt_json(a.sd)},
                          {"runs", a.runs}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"seed", f.seed}, {"error", f.error}});
  return nlohmann::json{
      {"kind", "toxicity_matrix"},
      {"schema_version", r.schema_version},
      {"plan", r.plan},
      {"cells", cells},
      {"aggregates", aggregates},
      {"failures", failures},
      {"transform_logs", r.transform_logs},
      {"female_advantage_mean", detail::opt_json(r.female_advantage_mean)},
      {"female_advantage_sd", detail::opt_json(r.female_advantage_sd)},
      {"no_profanity_gain_mean", detail::opt_json(r.no_profanity_gain_mean)},
  };
}

inline ToxicityMatrixReport toxicity_matrix_from_json(const nlohmann::json& j) {
  ToxicityMatrixReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.plan = j.at("plan");
  for (const auto& c : j.at("cells")) {
    MatrixCell cell;
    cell.model = c.at("model").get<std::string>();
    cell.test = c.at("test").get<std::string>();
    cell.seed = c.at("seed").get<std::uint64_t>();
    cell.sensitivity = detail::opt_from_json(c.at("sensitivity"));
    cell.n = c.at("n").get<std::size_t>();
    r.cells.push_back(std::move(cell));
  }
  for (const auto& a : j.at("aggregates")) {
    MatrixAggregate agg;
    agg.model = a.at("model").get<std::string>();
    agg.test = a.at("test").get<std::string>();
    agg.mean = detail::opt_from_json(a.at("mean"));
    agg.sd = detail::opt_from_json(a.at("sd"));
    agg.runs = a.at("runs").get<std::size_t>();
    r.aggregates.push_back(std::move(agg));
  }
  for (const auto& f : j.at("failures"))
    r.failures.push_back(
        SeedFailure{f.at("seed").get<std::uint64_t>(), f.at("error").get<std::string>()});
  r.transform_logs =
      j.at("transform_logs").get<std::map<std::string, std::vector<std::string>>>();
  r.female_advantage_mean = detail::opt_from_json(j.at("female_advantage_mean"));
  r.female_advantage_sd = detail::opt_from_json(j.at("female_advantage_sd"));
  r.no_profanity_gain_mean = detail::opt_from_json(j.at("no_profanity_gain_mean"));
  return r;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

namespace detail {

// shortest round-trip formatting, same as the JSON output
inline std::string number_cell(const std::optional<double>& v) {
  if (!v) return "";
  return nlohmann::json(*v).dump();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << content;
}

}  // namespace detail

inline std::string to_csv(const ToxicityMatrixReport& r) {
  std::string csv = "model";
  for (const auto& test : matrix_condition_names()) csv += "," + test + " mean," + test + " sd";
  csv += "\n";
  std::vector<std::string> model_rows = matrix_condition_names();
  model_rows.emplace_back(kBaselineModel);
  const auto find = [&](const std::string& m, const std::string& t) -> const MatrixAggregate* {
    for (const auto& a : r.aggregates)
      if (a.model == m && a.test == t) return &a;
    return nullptr;
  };
  for (const auto& model : model_rows) {
    bool any = false;
    for (const auto& test : matrix_condition_names()) {
      const auto* a = find(model, test);
      if (a && a->runs > 0) any = true;
    }
    if (!any && r.cells.empty()) continue;  // header-only CSV for an empty report
    if (!any) continue;
    csv += model;
    for (const auto& test : matrix_condition_names()) {
      const auto* a = find(model, test);
      csv += "," + detail::number_cell(a ? a->mean : std::nullopt);
      csv += "," + detail::number_cell(a ? a->sd : std::nullopt);
    }
    csv += "\n";
  }
  return csv;
}

inline std::string to_csv(const GenderStudyReport& r) {
  std::string csv =
      "model_condition,test_condition,mean_abs_bias_gap,sd_abs_bias_gap,"
      "mean_signed_bias_gap,mean_male_prediction_rate,runs\n";
  for (const auto& a : r.aggregates) {
    csv += a.model_condition + "," + a.test_condition + "," +
           detail::number_cell(a.mean_abs_gap) + "," + detail::number_cell(a.sd_abs_gap) + "," +
           detail::number_cell(a.mean_signed_gap) + "," + detail::number_cell(a.mean_male_rate) +
           "," + std::to_string(a.runs) + "\n";
  }
  return csv;
}

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw Error(errc::parameter, "unknown report format: " + std::string(s));
}

template <typename Report>
void emit_report(const Report& report, const std::string& path, ReportFormat format) {
  if (format == ReportFormat::json) {
    detail::write_text_file(path, to_json(report).dump(2) + "\n");
  } else {
    detail::write_text_file(path, to_csv(report));
  }
}

}  // namespace annobias
