#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "annobias/dataset.hpp"
#include "annobias/error.hpp"

namespace annobias {

// ---------------------------------------------------------------------------
// Confusion matrix and derived rates
// ---------------------------------------------------------------------------

// Positive class is fixed by the task: female for the gender task, toxic for
// the toxicity task.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  friend bool operator==(const ConfusionMatrix& a, const ConfusionMatrix& b) {
    return a.tp == b.tp && a.fp == b.fp && a.tn == b.tn && a.fn == b.fn;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& predicted,
                                 const std::vector<int>& truth) {
  if (predicted.empty()) throw Error(errc::parameter, "no predictions to score");
  if (predicted.size() != truth.size())
    throw Error(errc::parameter, "prediction/truth length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (truth[i]) {
      ++(predicted[i] ? cm.tp : cm.fn);
    } else {
      ++(predicted[i] ? cm.fp : cm.tn);
    }
  }
  return cm;
}

// Undefined metrics (zero denominators, constant rank inputs) are signaled as
// nullopt, never silently 0 or NaN; they serialize to JSON null.
inline std::optional<double> sensitivity(const ConfusionMatrix& cm) {
  const std::size_t denom = cm.tp + cm.fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(cm.tp) / static_cast<double>(denom);
}

inline std::optional<double> specificity(const ConfusionMatrix& cm) {
  const std::size_t denom = cm.tn + cm.fp;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(cm.tn) / static_cast<double>(denom);
}

// specificity - sensitivity; positive values mean the negative (male /
// non-toxic) class is recognized better than the positive one.
inline std::optional<double> bias_gap(const ConfusionMatrix& cm) {
  const auto spec = specificity(cm);
  const auto sens = sensitivity(cm);
  if (!spec || !sens) return std::nullopt;
  return *spec - *sens;
}

// Fraction of gender-task predictions that are male (the negative class);
// 0.5 is unbiased on balanced data.
inline double male_prediction_rate(const std::vector<int>& predicted) {
  if (predicted.empty()) throw Error(errc::parameter, "no predictions");
  std::size_t male = 0;
  for (int p : predicted)
    if (!p) ++male;
  return static_cast<double>(male) / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Spearman rank correlation
// ---------------------------------------------------------------------------

namespace detail {

// Average ranks for ties, 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Rank transform with average ranks for ties, then Pearson on the ranks.
// Constant inputs have no defined rank correlation -> nullopt.
inline std::optional<double> spearman(const std::vector<double>& x,
                                      const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(errc::parameter, "spearman: length mismatch");
  if (x.size() < 2) throw Error(errc::parameter, "spearman: need at least two points");
  return detail::pearson(detail::average_ranks(x), detail::average_ranks(y));
}

// ---------------------------------------------------------------------------
// Kernel density estimation
// ---------------------------------------------------------------------------

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0;
  std::size_t n = 0;
};

inline double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Gaussian-kernel density over the given grid. Default bandwidth is Scott's
// rule, n^(-1/5) * sample std, falling back to 1.0 for degenerate samples.
inline KdeCurve kde(const std::vector<double>& values,
                    std::optional<double> bandwidth,
                    const std::vector<double>& grid) {
  if (values.empty()) throw Error(errc::parameter, "kde: no values");
  if (bandwidth && !(*bandwidth > 0)) throw Error(errc::parameter, "kde: bandwidth must be positive");
  double h;
  if (bandwidth) {
    h = *bandwidth;
  } else {
    const double sd = sample_std(values);
    h = sd > 0 ? sd * std::pow(static_cast<double>(values.size()), -0.2) : 1.0;
  }
  KdeCurve curve;
  curve.grid = grid;
  curve.bandwidth = h;
  curve.n = values.size();
  curve.density.resize(grid.size());
  const double norm =
      1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double sum = 0;
    for (double v : values) {
      const double u = (grid[i] - v) / h;
      sum += std::exp(-0.5 * u * u);
    }
    curve.density[i] = norm * sum;
  }
  return curve;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t points) {
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) out[i] = lo + step * static_cast<double>(i);
  return out;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double area = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return area;
}

// ---------------------------------------------------------------------------
// Multi-run aggregation
// ---------------------------------------------------------------------------

struct RunAggregate {
  double mean = 0;
  std::optional<double> sd;  // Bessel-corrected; defined for n >= 2
  std::size_t n = 0;
};

inline RunAggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) throw Error(errc::parameter, "aggregate_runs: no values");
  RunAggregate agg;
  agg.n = values.size();
  for (double v : values) agg.mean += v;
  agg.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Bias report
// ---------------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;

// Metric bundle for one (model, test set) evaluation.
struct BiasReport {
  Task task = Task::gender;
  std::size_t n = 0;
  ConfusionMatrix cm;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> bias_gap;
  double positive_prediction_rate = 0;
  std::optional<double> male_prediction_rate;  // gender task only
  std::uint64_t seed = 0;
  std::string model_id;
  std::string test_id;
};

inline BiasReport make_bias_report(const ConfusionMatrix& cm, Task task) {
  BiasReport r;
  r.task = task;
  r.n = cm.total();
  r.cm = cm;
  r.sensitivity = sensitivity(cm);
  r.specificity = specificity(cm);
  r.bias_gap = bias_gap(cm);
  r.positive_prediction_rate =
      static_cast<double>(cm.tp + cm.fp) / static_cast<double>(cm.total());
  if (task == Task::gender) r.male_prediction_rate = 1.0 - r.positive_prediction_rate;
  return r;
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

inline std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const BiasReport& r) {
  nlohmann::json j{
      {"schema_version", kMetricsSchemaVersion},
      {"task", std::string(task_name(r.task))},
      {"n", r.n},
      {"confusion", {{"tp", r.cm.tp}, {"fp", r.cm.fp}, {"tn", r.cm.tn}, {"fn", r.cm.fn}}},
      {"sensitivity", detail::opt_json(r.sensitivity)},
      {"specificity", detail::opt_json(r.specificity)},
      {"bias_gap", detail::opt_json(r.bias_gap)},
      {"positive_prediction_rate", r.positive_prediction_rate},
      {"male_prediction_rate", detail::opt_json(r.male_prediction_rate)},
      {"seed", r.seed},
      {"model_id", r.model_id},
      {"test_id", r.test_id},
  };
  return j;
}

inline BiasReport bias_report_from_json(const nlohmann::json& j) {
  BiasReport r;
  r.task = parse_task(j.at("task").get<std::string>());
  r.n = j.at("n").get<std::size_t>();
  r.cm.tp = j.at("confusion").at("tp").get<std::size_t>();
  r.cm.fp = j.at("confusion").at("fp").get<std::size_t>();
  r.cm.tn = j.at("confusion").at("tn").get<std::size_t>();
  r.cm.fn = j.at("confusion").at("fn").get<std::size_t>();
  r.sensitivity = detail::opt_from_json(j.at("sensitivity"));
  r.specificity = detail::opt_from_json(j.at("specificity"));
  r.bias_gap = detail::opt_from_json(j.at("bias_gap"));
  r.positive_prediction_rate = j.at("positive_prediction_rate").get<double>();
  r.male_prediction_rate = detail::opt_from_json(j.at("male_prediction_rate"));
  r.seed = j.at("seed").get<std::uint64_t>();
  r.model_id = j.at("model_id").get<std::string>();
  r.test_id = j.at("test_id").get<std::string>();
  return r;
}

inline nlohmann::json to_json(const KdeCurve& c) {
  return nlohmann::json{
      {"grid", c.grid}, {"density", c.density}, {"bandwidth", c.bandwidth}, {"n", c.n}};
}

inline KdeCurve kde_curve_from_json(const nlohmann::json& j) {
  KdeCurve c;
  c.grid = j.at("grid").get<std::vector<double>>();
  c.density = j.at("density").get<std::vector<double>>();
  c.bandwidth = j.at("bandwidth").get<double>();
  c.n = j.at("n").get<std::size_t>();
  return c;
}

}  // namespace annobias
