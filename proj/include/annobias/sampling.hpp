#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annobias/dataset.hpp"
#include "annobias/error.hpp"
#include "annobias/rng.hpp"

namespace annobias {

// ---------------------------------------------------------------------------
// Gender balancing
// ---------------------------------------------------------------------------

// Keeps min(|male|, |female|) items of each gender, drawn uniformly without
// replacement, output order shuffled. Deterministic under (items, seed).
template <typename T, typename GenderOf>
std::vector<T> balance_by_gender(const std::vector<T>& items, GenderOf gender_of,
                                 std::uint64_t seed) {
  std::vector<T> male, female;
  for (const auto& item : items)
    (gender_of(item) == Gender::male ? male : female).push_back(item);
  if (male.empty()) throw Error(errc::stratum_empty, "no male examples to balance");
  if (female.empty()) throw Error(errc::stratum_empty, "no female examples to balance");

  const std::size_t quota = std::min(male.size(), female.size());
  auto male_rng = SeededRng::stream(seed, "balance_by_gender/male");
  auto female_rng = SeededRng::stream(seed, "balance_by_gender/female");
  std::vector<T> out = male_rng.take(std::move(male), quota);
  auto picked_female = female_rng.take(std::move(female), quota);
  out.insert(out.end(), std::make_move_iterator(picked_female.begin()),
             std::make_move_iterator(picked_female.end()));
  auto order_rng = SeededRng::stream(seed, "balance_by_gender/order");
  order_rng.shuffle(out);
  return out;
}

inline std::vector<AnnotatedExample> balance_by_gender(
    const std::vector<AnnotatedExample>& examples, std::uint64_t seed) {
  return balance_by_gender(examples, [](const AnnotatedExample& e) { return e.gender; }, seed);
}

// ---------------------------------------------------------------------------
// Quota plans
// ---------------------------------------------------------------------------

// Per-stratum target counts. Targets never exceed what is available.
struct QuotaPlan {
  std::map<std::string, std::size_t> targets;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, t] : targets) n += t;
    return n;
  }
};

namespace detail {

// quota per unit share given the binding stratum; `size`, when present, must
// be divisible by the total number of shares and feasible.
inline std::size_t resolve_quota(std::size_t binding, std::size_t shares,
                                 std::optional<std::size_t> size) {
  if (!size) return binding;
  if (*size == 0 || *size % shares != 0)
    throw Error(errc::quota, "requested size " + std::to_string(*size) +
                                 " is not a positive multiple of " + std::to_string(shares));
  const std::size_t per_share = *size / shares;
  if (per_share > binding)
    throw Error(errc::quota, "requested size " + std::to_string(*size) +
                                 " exceeds available strata (binding stratum " +
                                 std::to_string(binding) + " per share)");
  return per_share;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Task construction
// ---------------------------------------------------------------------------

// Gender classification set: toxic annotations only (scores -1 and -2), equal
// counts in each (gender, score) cell, labeled by annotator gender. The cell
// quota is the smallest cell (or size/4 when a size is requested).
inline Dataset build_gender_task(const std::vector<AnnotatedExample>& examples,
                                 std::uint64_t seed,
                                 std::optional<std::size_t> size = std::nullopt) {
  std::map<std::string, std::vector<const AnnotatedExample*>> cells;
  for (Gender g : {Gender::male, Gender::female})
    for (int v : {-1, -2}) cells[std::string(gender_name(g)) + ":" + std::to_string(v)];
  for (const auto& ex : examples) {
    if (!ex.score.is_toxic()) continue;
    cells[std::string(gender_name(ex.gender)) + ":" + std::to_string(ex.score.value)]
        .push_back(&ex);
  }
  std::size_t binding = SIZE_MAX;
  for (const auto& [key, members] : cells) {
    if (members.empty())
      throw Error(errc::stratum_empty, "gender-task stratum '" + key + "' is empty");
    binding = std::min(binding, members.size());
  }
  const std::size_t quota = detail::resolve_quota(binding, 4, size);

  QuotaPlan plan;
  Dataset ds;
  ds.task = Task::gender;
  for (const auto& [key, members] : cells) {
    plan.targets[key] = quota;
    auto cell_rng = SeededRng::stream(seed, "build_gender_task/" + key);
    for (const auto* ex : cell_rng.take(members, quota))
      ds.examples.push_back(to_dataset_example(Task::gender, *ex));
  }
  auto order_rng = SeededRng::stream(seed, "build_gender_task/order");
  order_rng.shuffle(ds.examples);
  return ds;
}

enum class GenderFilter { male, female, both };

inline std::string_view gender_filter_name(GenderFilter f) {
  switch (f) {
    case GenderFilter::male: return "male";
    case GenderFilter::female: return "female";
    case GenderFilter::both: return "both";
  }
  return "both";
}

inline GenderFilter parse_gender_filter(std::string_view s) {
  if (s == "male") return GenderFilter::male;
  if (s == "female") return GenderFilter::female;
  if (s == "both") return GenderFilter::both;
  throw Error(errc::parameter, "unknown gender filter: " + std::string(s));
}

// Toxicity classification set: 25% score -1, 25% score -2, 50% drawn from the
// pooled healthy scores (+1, +2) without a per-score quota. Score-0
// annotations are excluded. Positive label = toxic.
inline Dataset build_toxicity_task(const std::vector<AnnotatedExample>& examples,
                                   GenderFilter gender_filter, std::uint64_t seed,
                                   std::optional<std::size_t> size = std::nullopt) {
  std::vector<const AnnotatedExample*> toxic1, toxic2, healthy;
  for (const auto& ex : examples) {
    if (gender_filter == GenderFilter::male && ex.gender != Gender::male) continue;
    if (gender_filter == GenderFilter::female && ex.gender != Gender::female) continue;
    switch (ex.score.value) {
      case -1: toxic1.push_back(&ex); break;
      case -2: toxic2.push_back(&ex); break;
      case 1:
      case 2: healthy.push_back(&ex); break;
      default: break;  // score 0 excluded from the toxicity task
    }
  }
  if (toxic1.empty()) throw Error(errc::stratum_empty, "toxicity-task stratum 'toxic:-1' is empty");
  if (toxic2.empty()) throw Error(errc::stratum_empty, "toxicity-task stratum 'toxic:-2' is empty");
  if (healthy.size() < 2)
    throw Error(errc::stratum_empty, "toxicity-task stratum 'healthy:+1+2' is too small");

  const std::size_t binding =
      std::min({toxic1.size(), toxic2.size(), healthy.size() / 2});
  const std::size_t quota = detail::resolve_quota(binding, 4, size);

  Dataset ds;
  ds.task = Task::toxicity;
  auto add = [&](std::vector<const AnnotatedExample*> pool, std::size_t count,
                 std::string_view stream) {
    auto rng = SeededRng::stream(seed, std::string("build_toxicity_task/") + std::string(stream));
    for (const auto* ex : rng.take(std::move(pool), count))
      ds.examples.push_back(to_dataset_example(Task::toxicity, *ex));
  };
  add(std::move(toxic1), quota, "toxic:-1");
  add(std::move(toxic2), quota, "toxic:-2");
  add(std::move(healthy), 2 * quota, "healthy");
  auto order_rng = SeededRng::stream(seed, "build_toxicity_task/order");
  order_rng.shuffle(ds.examples);
  return ds;
}

// ---------------------------------------------------------------------------
// Train/test splitting
// ---------------------------------------------------------------------------

namespace detail {

struct RevGroup {
  std::string rev_id;
  // per dataset: member example indices and per-stratum counts
  std::vector<std::vector<std::size_t>> members;
  std::map<std::string, std::size_t> strata;  // keys namespaced "ds<i>/<stratum>"
  std::size_t weight = 0;
};

}  // namespace detail

// Splits one or more datasets with a single comment-level assignment: every
// annotation of a given rev_id lands on the same side in every dataset, so no
// comment text can leak between any train and any test set. Assignment is a
// seeded greedy walk that keeps each stratum's test count within one example
// of test_fraction times the stratum size whenever rev_id groups do not span
// strata (groups spanning several strata are placed to minimize deviation).
inline std::vector<std::pair<Dataset, Dataset>> split_train_test_shared(
    const std::vector<const Dataset*>& datasets, double test_fraction,
    std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(errc::parameter,
                "test_fraction must lie in (0, 1), got " + std::to_string(test_fraction));

  std::map<std::string, detail::RevGroup> groups;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const Dataset& ds = *datasets[d];
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      auto& g = groups[ds.examples[i].rev_id];
      g.rev_id = ds.examples[i].rev_id;
      g.members.resize(datasets.size());
      g.members[d].push_back(i);
      ++g.strata["ds" + std::to_string(d) + "/" + stratum_key(ds.task, ds.examples[i])];
      ++g.weight;
    }
  }

  std::vector<const detail::RevGroup*> order;
  order.reserve(groups.size());
  for (const auto& [_, g] : groups) order.push_back(&g);
  auto rng = SeededRng::stream(seed, "split_train_test/groups");
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->weight > b->weight; });

  // Bresenham-style accumulators: acc is the ideal running test count per
  // stratum; a group goes to test when that brings the counts closer to it.
  std::map<std::string, double> acc;
  std::map<std::string, std::size_t> test_count;
  std::vector<bool> in_test_flag;
  std::map<std::string, bool> side_of;
  for (const auto* g : order) {
    double dev_test = 0, dev_train = 0;
    for (const auto& [s, c] : g->strata) {
      const double target = acc[s] + test_fraction * static_cast<double>(c);
      const double t = static_cast<double>(test_count[s]);
      dev_test += std::abs(t + static_cast<double>(c) - target);
      dev_train += std::abs(t - target);
    }
    const bool to_test = dev_test <= dev_train;
    for (const auto& [s, c] : g->strata) {
      acc[s] += test_fraction * static_cast<double>(c);
      if (to_test) test_count[s] += c;
    }
    side_of[g->rev_id] = to_test;
  }

  std::vector<std::pair<Dataset, Dataset>> out;
  for (const auto* ds : datasets) {
    Dataset train, test;
    train.task = test.task = ds->task;
    train.transform_log = test.transform_log = ds->transform_log;
    for (const auto& ex : ds->examples)
      (side_of.at(ex.rev_id) ? test : train).examples.push_back(ex);
    out.emplace_back(std::move(train), std::move(test));
  }
  return out;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset,
                                                    double test_fraction,
                                                    std::uint64_t seed) {
  auto split = split_train_test_shared({&dataset}, test_fraction, seed);
  return std::move(split.front());
}

}  // namespace annobias
