#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "annobias/classifier.hpp"
#include "annobias/dataset.hpp"
#include "annobias/error.hpp"

namespace annobias {

// Signed per-token attribution of one prediction. Under the gender task the
// positive class is female, so negative scores push the prediction toward
// male and positive scores toward female.
struct AttributionResult {
  Task task = Task::gender;
  std::vector<std::string> tokens;
  std::vector<double> scores;  // aligned with tokens
  double total_score = 0;
  double probability = 0;           // F(x), probability of the positive class
  double baseline_probability = 0;  // F(baseline)
  int predicted_label = 0;
  double completeness_residual = 0;  // |total - (F(x) - F(baseline))|
};

// Integrated gradients along the straight path from the all-padding baseline
// to the input embeddings, approximated with a right-endpoint Riemann sum:
//
//   attribution = (x - baseline) . mean_{k=1..steps} grad F(baseline + (k/steps)(x - baseline))
//
// Per-token scores are row sums, so completeness (sum of scores equals
// F(x) - F(baseline)) holds up to the Riemann approximation error, which the
// residual records.
inline AttributionResult integrated_gradients(const TrainedModel& model,
                                              const TokenSequence& seq,
                                              std::size_t steps = 50) {
  if (steps < 1) throw Error(errc::parameter, "integrated_gradients: steps must be >= 1");
  if (!model.supports_gradients())
    throw Error(errc::capability,
                "backend '" + model.backend + "' does not expose embedding gradients");

  const Matrix x = embed(model, seq);
  Matrix baseline(x.rows, x.cols);
  const double* pad = model.embedding_row(Vocabulary::pad_index);
  for (std::size_t i = 0; i < baseline.rows; ++i)
    std::copy(pad, pad + model.dim,
              baseline.data.begin() + static_cast<std::ptrdiff_t>(i * model.dim));

  Matrix mean_grad(x.rows, x.cols);
  Matrix point(x.rows, x.cols);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(steps);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      point.data[i] = baseline.data[i] + alpha * (x.data[i] - baseline.data[i]);
    const Matrix g = grad_wrt_embeddings(model, point);
    for (std::size_t i = 0; i < x.data.size(); ++i) mean_grad.data[i] += g.data[i];
  }
  const double inv_steps = 1.0 / static_cast<double>(steps);

  AttributionResult result;
  result.task = model.task;
  result.tokens = seq.tokens;
  result.scores.resize(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double row_sum = 0;
    for (std::size_t j = 0; j < x.cols; ++j)
      row_sum += (x.at(i, j) - baseline.at(i, j)) * mean_grad.at(i, j) * inv_steps;
    result.scores[i] = row_sum;
    result.total_score += row_sum;
  }
  result.probability = forward_from_embeddings(model, x);
  result.baseline_probability = forward_from_embeddings(model, baseline);
  result.predicted_label = result.probability >= 0.5 ? 1 : 0;
  result.completeness_residual =
      std::abs(result.total_score - (result.probability - result.baseline_probability));
  return result;
}

// Default tolerance: max(1e-3, 0.5% of |F(x) - F(baseline)|).
inline bool completeness_check(const AttributionResult& result,
                               std::optional<double> tolerance = std::nullopt) {
  const double tol =
      tolerance.value_or(std::max(1e-3, 0.005 * std::abs(result.probability -
                                                         result.baseline_probability)));
  return result.completeness_residual <= tol;
}

// Validates the gender-task sign convention and hands back the scores:
// negative = male attribution, positive = female attribution.
inline const std::vector<double>& signed_scores(const AttributionResult& result) {
  if (result.task != Task::gender)
    throw Error(errc::task_mismatch, "signed attribution scores are defined for the gender task");
  return result.scores;
}

struct TokenAttribution {
  std::string token;
  double mean_score = 0;
  std::size_t occurrences = 0;
};

struct AttributionSummary {
  std::vector<TokenAttribution> top_male;    // most negative mean scores
  std::vector<TokenAttribution> top_female;  // most positive mean scores
};

// Mean signed attribution per token across all its occurrences in the
// dataset, ranked into the top_k most-male and most-female lists. Only
// strictly negative means qualify as male and strictly positive as female,
// so the two lists never share a token.
inline AttributionSummary attribution_summary(const TrainedModel& model,
                                              const Dataset& dataset, std::size_t top_k,
                                              std::size_t steps = 50) {
  if (dataset.examples.empty())
    throw Error(errc::parameter, "attribution_summary: empty dataset");
  std::map<std::string, std::pair<double, std::size_t>> totals;
  for (const auto& ex : dataset.examples) {
    const auto seq = tokenize(ex.text, model.vocab, model.config.max_len);
    const auto result = integrated_gradients(model, seq, steps);
    for (std::size_t i = 0; i < result.tokens.size(); ++i) {
      auto& slot = totals[result.tokens[i]];
      slot.first += result.scores[i];
      ++slot.second;
    }
  }
  std::vector<TokenAttribution> means;
  means.reserve(totals.size());
  for (const auto& [token, sum_count] : totals)
    means.push_back(TokenAttribution{token, sum_count.first / static_cast<double>(sum_count.second),
                                     sum_count.second});

  AttributionSummary summary;
  std::sort(means.begin(), means.end(), [](const auto& a, const auto& b) {
    if (a.mean_score != b.mean_score) return a.mean_score < b.mean_score;
    return a.token < b.token;
  });
  for (const auto& m : means) {
    if (m.mean_score >= 0 || summary.top_male.size() >= top_k) break;
    summary.top_male.push_back(m);
  }
  for (auto it = means.rbegin(); it != means.rend(); ++it) {
    if (it->mean_score <= 0 || summary.top_female.size() >= top_k) break;
    summary.top_female.push_back(*it);
  }
  return summary;
}

inline nlohmann::json to_json(const TokenAttribution& t) {
  return nlohmann::json{
      {"token", t.token}, {"mean_score", t.mean_score}, {"occurrences", t.occurrences}};
}

inline nlohmann::json to_json(const AttributionSummary& s) {
  nlohmann::json male = nlohmann::json::array(), female = nlohmann::json::array();
  for (const auto& t : s.top_male) male.push_back(to_json(t));
  for (const auto& t : s.top_female) female.push_back(to_json(t));
  return nlohmann::json{{"top_male", male}, {"top_female", female}};
}

inline AttributionSummary attribution_summary_from_json(const nlohmann::json& j) {
  AttributionSummary s;
  for (const auto& t : j.at("top_male")) {
    s.top_male.push_back(TokenAttribution{t.at("token").get<std::string>(),
                                          t.at("mean_score").get<double>(),
                                          t.at("occurrences").get<std::size_t>()});
  }
  for (const auto& t : j.at("top_female")) {
    s.top_female.push_back(TokenAttribution{t.at("token").get<std::string>(),
                                            t.at("mean_score").get<double>(),
                                            t.at("occurrences").get<std::size_t>()});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

struct AttributedExample {
  std::string rev_id, worker_id;
  int true_label = 0;
  AttributionResult result;
};

// Red = negative (male) attribution, green = positive (female); opacity
// scales with magnitude relative to the strongest token in the example.
inline std::string render_attribution_html(const std::vector<AttributedExample>& examples) {
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
      "<style>body{font-family:sans-serif}table{border-collapse:collapse}"
      "td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}"
      "span.tok{padding:1px 2px;border-radius:2px}</style></head><body>\n"
      "<table>\n<tr><th>True</th><th>Predicted</th><th>Score</th><th>Tokens</th></tr>\n";
  auto label_name = [](Task task, int label) {
    if (task == Task::gender) return label ? "female" : "male";
    return label ? "toxic" : "non-toxic";
  };
  for (const auto& ex : examples) {
    double max_abs = 0;
    for (double s : ex.result.scores) max_abs = std::max(max_abs, std::abs(s));
    std::string row;
    for (std::size_t i = 0; i < ex.result.tokens.size(); ++i) {
      const double s = ex.result.scores[i];
      const double alpha = max_abs > 0 ? std::abs(s) / max_abs : 0.0;
      char style[96];
      std::snprintf(style, sizeof(style), "background:rgba(%s,%.3f)",
                    s < 0 ? "220,40,40" : "40,160,40", alpha);
      row += "<span class=\"tok\" style=\"" + std::string(style) + "\">" +
             detail::html_escape(ex.result.tokens[i]) + "</span> ";
    }
    char prob[64];
    std::snprintf(prob, sizeof(prob), "%s (%.2f)",
                  label_name(ex.result.task, ex.result.predicted_label),
                  ex.result.probability);
    char total[32];
    std::snprintf(total, sizeof(total), "%.2f", ex.result.total_score);
    html += "<tr><td>" + std::string(label_name(ex.result.task, ex.true_label)) + "</td><td>" +
            prob + "</td><td>" + total + "</td><td>" + row + "</td></tr>\n";
  }
  html += "</table>\n</body></html>\n";
  return html;
}

inline nlohmann::json to_json(const AttributedExample& ex) {
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < ex.result.tokens.size(); ++i)
    tokens.push_back({{"text", ex.result.tokens[i]}, {"score", ex.result.scores[i]}});
  return nlohmann::json{
      {"rev_id", ex.rev_id},
      {"worker_id", ex.worker_id},
      {"true_label", ex.true_label},
      {"predicted_label", ex.result.predicted_label},
      {"probability", ex.result.probability},
      {"tokens", tokens},
      {"total_score", ex.result.total_score},
      {"residual", ex.result.completeness_residual},
  };
}

}  // namespace annobias
