#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "annobias/dataset.hpp"
#include "annobias/error.hpp"
#include "annobias/lexicon.hpp"
#include "annobias/rng.hpp"

namespace annobias {

// ---------------------------------------------------------------------------
// Vocabulary and tokenization
// ---------------------------------------------------------------------------

struct Vocabulary {
  static constexpr std::int32_t pad_index = 0;
  static constexpr std::int32_t unk_index = 1;

  std::vector<std::string> tokens;  // index -> token, [0]=<pad>, [1]=<unk>
  std::unordered_map<std::string, std::int32_t> index;
  std::size_t min_frequency = 1;

  std::size_t size() const { return tokens.size(); }

  std::int32_t lookup(std::string_view token) const {
    auto it = index.find(std::string(token));
    return it == index.end() ? unk_index : it->second;
  }
};

// Builds the vocabulary from training texts only. Tokens are the lowercased
// word tokens shared with the lexicon module; tokens seen fewer than
// min_frequency times map to <unk>. Index order is deterministic: by
// descending frequency, ties broken lexicographically.
inline Vocabulary build_vocab(const std::vector<std::string>& texts,
                              std::size_t min_frequency = 1) {
  if (texts.empty()) throw Error(errc::parameter, "cannot build vocabulary from no texts");
  std::map<std::string, std::size_t> freq;
  for (const auto& text : texts)
    for (const auto& t : word_tokens(text)) ++freq[t.match];

  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.min_frequency = min_frequency;
  vocab.tokens = {"<pad>", "<unk>"};
  for (auto& [token, count] : entries) {
    if (count < min_frequency) continue;
    vocab.index.emplace(token, static_cast<std::int32_t>(vocab.tokens.size()));
    vocab.tokens.push_back(token);
  }
  return vocab;
}

struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::string> tokens;  // aligned match forms
  bool truncated = false;

  std::size_t length() const { return ids.size(); }
};

inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                              std::size_t max_len = 100) {
  TokenSequence seq;
  for (const auto& t : word_tokens(text)) {
    if (seq.ids.size() >= max_len) {
      seq.truncated = true;
      break;
    }
    seq.ids.push_back(vocab.lookup(t.match));
    seq.tokens.push_back(t.match);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.05;  // bag-of-embeddings default; transformer-style backends use 2e-5
  std::size_t batch_size = 8;
  std::size_t epochs = 2;
  std::uint64_t seed = 42;
  std::size_t embedding_dim = 64;
  std::size_t max_len = 100;
  std::size_t vocab_min_frequency = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw Error(errc::parameter, "learning_rate must be positive");
    if (batch_size < 1) throw Error(errc::parameter, "batch_size must be >= 1");
    if (epochs < 1) throw Error(errc::parameter, "epochs must be >= 1");
    if (embedding_dim < 1) throw Error(errc::parameter, "embedding_dim must be >= 1");
    if (max_len < 1) throw Error(errc::parameter, "max_len must be >= 1");
  }
};

// Row-major dense matrix of embeddings/gradients.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Logits are clamped so probabilities stay strictly inside (0, 1) in double
// precision and the cross-entropy stays finite.
inline double sigmoid(double z) {
  z = std::clamp(z, -36.0, 36.0);
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline constexpr std::string_view kReferenceBackend = "embedding-bag-logistic";

// Binary text classifier: mean of token embeddings through an affine map and
// a logistic readout. Exactly differentiable with respect to the embeddings,
// which is what the attribution module relies on.
struct TrainedModel {
  std::string backend{kReferenceBackend};
  Task task = Task::gender;
  TrainConfig config;
  Vocabulary vocab;
  std::size_t dim = 0;
  std::vector<double> embeddings;  // vocab.size() x dim, row-major; pad row is zero
  std::vector<double> weights;     // dim
  double bias = 0.0;
  std::vector<double> epoch_loss;  // mean training BCE per epoch

  bool supports_gradients() const { return backend == kReferenceBackend; }

  const double* embedding_row(std::int32_t index) const {
    return embeddings.data() + static_cast<std::size_t>(index) * dim;
  }

  double mean_logit(const std::vector<std::int32_t>& ids) const {
    double z = bias;
    if (ids.empty()) return z;
    const double inv_len = 1.0 / static_cast<double>(ids.size());
    for (std::size_t j = 0; j < dim; ++j) {
      double m = 0;
      for (const auto id : ids) m += embedding_row(id)[j];
      z += weights[j] * (m * inv_len);
    }
    return z;
  }
};

inline double predict_proba(const TrainedModel& model, const TokenSequence& seq) {
  return sigmoid(model.mean_logit(seq.ids));
}

// Decision rule: positive iff p >= 0.5 (ties go to the positive class).
inline int predict_label(const TrainedModel& model, const TokenSequence& seq) {
  return predict_proba(model, seq) >= 0.5 ? 1 : 0;
}

inline Matrix embed(const TrainedModel& model, const TokenSequence& seq) {
  Matrix m(seq.ids.size(), model.dim);
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const double* row = model.embedding_row(seq.ids[i]);
    std::copy(row, row + model.dim, m.data.begin() + static_cast<std::ptrdiff_t>(i * model.dim));
  }
  return m;
}

// Pre-sigmoid readout of an embedding matrix: bias + w . rowmean(m).
inline double logit_from_embeddings(const TrainedModel& model, const Matrix& m) {
  if (m.cols != model.dim)
    throw Error(errc::shape_mismatch,
                "embedding matrix has " + std::to_string(m.cols) + " columns, model expects " +
                    std::to_string(model.dim));
  double z = model.bias;
  if (m.rows == 0) return z;
  const double inv_len = 1.0 / static_cast<double>(m.rows);
  for (std::size_t j = 0; j < m.cols; ++j) {
    double sum = 0;
    for (std::size_t i = 0; i < m.rows; ++i) sum += m.at(i, j);
    z += model.weights[j] * (sum * inv_len);
  }
  return z;
}

inline double forward_from_embeddings(const TrainedModel& model, const Matrix& m) {
  return sigmoid(logit_from_embeddings(model, m));
}

// Exact gradient of forward_from_embeddings with respect to every entry:
// d p / d e_ij = p (1 - p) w_j / L.
inline Matrix grad_wrt_embeddings(const TrainedModel& model, const Matrix& m) {
  const double p = forward_from_embeddings(model, m);
  Matrix g(m.rows, m.cols);
  if (m.rows == 0) return g;
  const double scale = p * (1.0 - p) / static_cast<double>(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) g.at(i, j) = scale * model.weights[j];
  return g;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

// Adam state for one parameter block; embedding rows keep their own step
// counters because their moments update lazily (only on steps where the row
// receives gradient).
struct AdamRow {
  std::vector<double> m, v;
  std::size_t t = 0;
};

inline void adam_update(double* params, const double* grad, std::size_t n, AdamRow& state,
                        double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
}

}  // namespace detail

// Minimizes mean binary cross-entropy with mini-batch Adam and a learning
// rate decayed linearly to zero over the total step count. Everything is
// derived from (dataset, config): batch order, initialization and therefore
// the final parameters are bit-reproducible.
inline TrainedModel train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.examples.empty()) throw Error(errc::parameter, "cannot train on an empty dataset");
  bool has_pos = false, has_neg = false;
  for (const auto& ex : dataset.examples) (ex.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw Error(errc::degenerate_data, "training data contains a single class");

  TrainedModel model;
  model.task = dataset.task;
  model.config = config;
  model.dim = config.embedding_dim;
  {
    std::vector<std::string> texts;
    texts.reserve(dataset.examples.size());
    for (const auto& ex : dataset.examples) texts.push_back(ex.text);
    model.vocab = build_vocab(texts, config.vocab_min_frequency);
  }
  const std::size_t vocab_size = model.vocab.size();

  // init: embeddings uniform in [-0.05, 0.05], pad row zero, w and b zero
  auto init_rng = SeededRng::stream(config.seed, "train/init");
  model.embeddings.resize(vocab_size * model.dim);
  for (auto& e : model.embeddings) e = init_rng.unit() * 0.1 - 0.05;
  std::fill_n(model.embeddings.begin(), model.dim, 0.0);
  model.weights.assign(model.dim, 0.0);
  model.bias = 0.0;

  std::vector<std::vector<std::int32_t>> sequences;
  sequences.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples)
    sequences.push_back(tokenize(ex.text, model.vocab, config.max_len).ids);

  const std::size_t n = dataset.examples.size();
  const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches_per_epoch;

  detail::AdamRow w_state, b_state;
  std::unordered_map<std::int32_t, detail::AdamRow> row_states;
  auto batch_rng = SeededRng::stream(config.seed, "train/batches");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  std::vector<double> grad_w(model.dim), mean_emb(model.dim);
  std::vector<std::int32_t> touched;
  std::unordered_map<std::int32_t, std::size_t> slot;
  std::vector<double> row_grads;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    batch_rng.shuffle(perm);
    double epoch_loss_sum = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      double grad_b = 0;
      touched.clear();
      slot.clear();
      row_grads.clear();

      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = perm[b];
        const auto& ids = sequences[idx];
        const double y = dataset.examples[idx].label ? 1.0 : 0.0;

        std::fill(mean_emb.begin(), mean_emb.end(), 0.0);
        if (!ids.empty()) {
          const double inv_len = 1.0 / static_cast<double>(ids.size());
          for (const auto id : ids) {
            const double* row = model.embedding_row(id);
            for (std::size_t j = 0; j < model.dim; ++j) mean_emb[j] += row[j];
          }
          for (auto& m : mean_emb) m *= inv_len;
        }
        double z = model.bias;
        for (std::size_t j = 0; j < model.dim; ++j) z += model.weights[j] * mean_emb[j];
        const double p = sigmoid(z);
        epoch_loss_sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));

        const double gz = (p - y) * inv_batch;
        for (std::size_t j = 0; j < model.dim; ++j) grad_w[j] += gz * mean_emb[j];
        grad_b += gz;
        if (!ids.empty()) {
          const double coeff = gz / static_cast<double>(ids.size());
          for (const auto id : ids) {
            auto it = slot.find(id);
            if (it == slot.end()) {
              it = slot.emplace(id, row_grads.size()).first;
              row_grads.resize(row_grads.size() + model.dim, 0.0);
              touched.push_back(id);
            }
            double* g = row_grads.data() + it->second;
            for (std::size_t j = 0; j < model.dim; ++j) g[j] += coeff * model.weights[j];
          }
        }
      }

      const double lr = config.learning_rate *
                        static_cast<double>(total_steps - step) /
                        static_cast<double>(total_steps);
      detail::adam_update(model.weights.data(), grad_w.data(), model.dim, w_state, lr, config);
      detail::adam_update(&model.bias, &grad_b, 1, b_state, lr, config);
      std::sort(touched.begin(), touched.end());
      for (const auto id : touched) {
        double* params = model.embeddings.data() + static_cast<std::size_t>(id) * model.dim;
        detail::adam_update(params, row_grads.data() + slot.at(id), model.dim,
                            row_states[id], lr, config);
      }
      ++step;
    }
    model.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(n));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"embedding_dim", c.embedding_dim},
      {"max_len", c.max_len},
      {"vocab_min_frequency", c.vocab_min_frequency},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_epsilon", c.adam_epsilon},
  };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab_min_frequency = j.at("vocab_min_frequency").get<std::size_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  return c;
}

inline void save_model(const TrainedModel& model, const std::string& path) {
  nlohmann::json j{
      {"format_version", kModelFormatVersion},
      {"backend", model.backend},
      {"task", std::string(task_name(model.task))},
      {"config", to_json(model.config)},
      {"vocab", {{"min_frequency", model.vocab.min_frequency}, {"tokens", model.vocab.tokens}}},
      {"dim", model.dim},
      {"embeddings", model.embeddings},
      {"weights", model.weights},
      {"bias", model.bias},
      {"epoch_loss", model.epoch_loss},
  };
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write model file " + path);
  out << j.dump() << '\n';
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::schema, "bad model file " + path + ": " + e.what());
  }
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kModelFormatVersion)
    throw Error(errc::schema, "unsupported model format version in " + path);
  TrainedModel model;
  model.backend = j.at("backend").get<std::string>();
  if (model.backend != kReferenceBackend)
    throw Error(errc::capability, "unknown backend '" + model.backend + "' in " + path);
  model.task = parse_task(j.at("task").get<std::string>());
  model.config = train_config_from_json(j.at("config"));
  model.vocab.min_frequency = j.at("vocab").at("min_frequency").get<std::size_t>();
  model.vocab.tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
  for (std::size_t i = 2; i < model.vocab.tokens.size(); ++i)
    model.vocab.index.emplace(model.vocab.tokens[i], static_cast<std::int32_t>(i));
  model.dim = j.at("dim").get<std::size_t>();
  model.embeddings = j.at("embeddings").get<std::vector<double>>();
  model.weights = j.at("weights").get<std::vector<double>>();
  model.bias = j.at("bias").get<double>();
  model.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  if (model.embeddings.size() != model.vocab.size() * model.dim ||
      model.weights.size() != model.dim)
    throw Error(errc::schema, "parameter shapes inconsistent in " + path);
  return model;
}

}  // namespace annobias
