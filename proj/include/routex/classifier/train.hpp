#pragma once

// Mini-batch training with Adam, evaluation, batch prediction and the
// finite-difference gradient check.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "routex/classifier/loss.hpp"
#include "routex/classifier/metrics.hpp"
#include "routex/classifier/model.hpp"

namespace routex {

struct LabeledSequence {
  EncodedSample x;
  std::vector<int> y;
};

struct TrainingConfig {
  LossKind loss = LossKind::scbce;
  double beta = 0.99;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int max_epochs = 100;
  std::uint64_t rng_seed = 1234;
  std::optional<int> patience;  // stop after this many epochs without a better validation score
  std::optional<double> time_limit_seconds;
};

inline void to_json(json& j, const TrainingConfig& c) {
  j = json{{"loss", std::string(to_string(c.loss))},
           {"beta", c.beta},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"max_epochs", c.max_epochs},
           {"rng_seed", c.rng_seed}};
  if (c.patience) j["patience"] = *c.patience;
  if (c.time_limit_seconds) j["time_limit_seconds"] = *c.time_limit_seconds;
}

/// Missing fields keep their defaults.
inline void from_json(const json& j, TrainingConfig& c) {
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  c.beta = j.value("beta", c.beta);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (j.contains("patience")) c.patience = detail::optional_field<int>(j, "patience");
  if (j.contains("time_limit_seconds")) c.time_limit_seconds = detail::optional_field<double>(j, "time_limit_seconds");
  if (c.batch_size < 1 || c.max_epochs < 0 || !(c.learning_rate > 0))
    throw Error("invalid_config", "batch_size, max_epochs and learning_rate must be positive");
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double seconds = 0.0;
};

inline void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_macro_f1", r.val_macro_f1}, {"seconds", r.seconds}};
}

template <typename S>
struct TrainResult {
  ModelParams<S> params;  // best epoch by validation macro-F1
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  bool diverged = false;
};

template <typename S>
class Adam {
 public:
  Adam(const ModelConfig& cfg, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(ModelParams<S>::zeros(cfg)), v_(ModelParams<S>::zeros(cfg)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelParams<S>& params, ModelParams<S>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    std::vector<nn::Mat<S>*> p, g, m, v;
    params.visit([&](const std::string&, nn::Mat<S>& x) { p.push_back(&x); });
    grads.visit([&](const std::string&, nn::Mat<S>& x) { g.push_back(&x); });
    m_.visit([&](const std::string&, nn::Mat<S>& x) { m.push_back(&x); });
    v_.visit([&](const std::string&, nn::Mat<S>& x) { v.push_back(&x); });
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k]->array() = S(b1_) * m[k]->array() + S(1 - b1_) * g[k]->array();
      v[k]->array() = S(b2_) * v[k]->array() + S(1 - b2_) * g[k]->array().square();
      p[k]->array() -= S(lr_) * (m[k]->array() / S(c1)) / ((v[k]->array() / S(c2)).sqrt() + S(eps_));
    }
  }

 private:
  ModelParams<S> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

/// Predicted labels for every sequence, optionally on several threads.
template <typename S>
std::vector<std::vector<int>> predict_many(const EdgeClassifier<S>& model, const std::vector<EncodedSample>& xs,
                                           unsigned threads = 1) {
  std::vector<std::vector<int>> out(xs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < xs.size(); i = next++) out[i] = model.predict(xs[i]);
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < std::max(1u, threads); ++k) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return out;
}

struct Evaluation {
  double macro_f1 = 0.0;
  ConfusionMatrix confusion;
  SequentialConfusion sequential;
};

template <typename S>
Evaluation evaluate(const EdgeClassifier<S>& model, const std::vector<LabeledSequence>& data, unsigned threads = 1) {
  std::vector<EncodedSample> xs;
  xs.reserve(data.size());
  for (const auto& d : data) xs.push_back(d.x);
  const auto preds = predict_many(model, xs, threads);
  Evaluation e;
  e.sequential.n_classes = model.config().n_classes;
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < data.size(); ++i) {
    e.sequential.add(data[i].y, preds[i]);
    truth.insert(truth.end(), data[i].y.begin(), data[i].y.end());
    pred.insert(pred.end(), preds[i].begin(), preds[i].end());
  }
  e.confusion = confusion(truth, pred, model.config().n_classes);
  e.macro_f1 = macro_f1(e.confusion);
  return e;
}

/// Loss and accumulated gradients for one batch.
template <typename S>
double batch_gradient(const EdgeClassifier<S>& model, const std::vector<const LabeledSequence*>& batch,
                      const TrainingConfig& cfg, ModelParams<S>& grads) {
  std::vector<std::vector<int>> labels;
  for (const auto* s : batch) labels.push_back(s->y);
  const auto weights = loss_weights(labels, cfg.loss, cfg.beta);
  std::size_t edges = 0;
  for (const auto& l : labels) edges += l.size();
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ForwardCache<S> cache;
    const auto probs = model.forward(batch[b]->x, &cache);
    nn::Mat<S> dprobs;
    total += weighted_nll(probs, labels[b], weights[b], edges, &dprobs);
    model.backward(batch[b]->x, cache, dprobs, grads);
  }
  return total;
}

template <typename S>
TrainResult<S> train(const std::vector<LabeledSequence>& train_set, const std::vector<LabeledSequence>& val_set,
                     const ModelConfig& model_cfg, const TrainingConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_set.empty()) throw Error("empty_dataset", "no training samples");
  EdgeClassifier<S> model(model_cfg, ModelParams<S>::random(model_cfg, cfg.rng_seed));
  Adam<S> opt(model_cfg, cfg.learning_rate);
  auto grads = ModelParams<S>::zeros(model_cfg);
  std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult<S> result;
  result.params = model.params();
  result.best_val_macro_f1 = -1.0;
  const auto start = std::chrono::steady_clock::now();
  const auto& monitor = val_set.empty() ? train_set : val_set;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += std::size_t(cfg.batch_size)) {
      std::vector<const LabeledSequence*> batch;
      for (std::size_t k = i; k < std::min(order.size(), i + std::size_t(cfg.batch_size)); ++k)
        batch.push_back(&train_set[order[k]]);
      grads.set_zero();
      const double loss = batch_gradient(model, batch, cfg, grads);
      if (!std::isfinite(loss)) {
        result.diverged = true;
        return result;
      }
      opt.step(model.params(), grads);
      loss_sum += loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(std::max<std::size_t>(1, batches));
    rec.val_macro_f1 = evaluate(model, monitor).macro_f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_macro_f1 > result.best_val_macro_f1) {
      result.best_val_macro_f1 = rec.val_macro_f1;
      result.best_epoch = epoch;
      result.params = model.params();
      since_best = 0;
    } else if (cfg.patience && ++since_best >= *cfg.patience) {
      break;
    }
    if (cfg.time_limit_seconds &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > *cfg.time_limit_seconds)
      break;
  }
  return result;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences on `count` randomly chosen scalar parameters against
/// the analytic gradient of the batch loss over `batch`.
inline GradCheckResult finite_difference_check(const ModelConfig& cfg, const ModelParams<double>& params,
                                               const std::vector<LabeledSequence>& batch, const TrainingConfig& tc,
                                               double eps, std::size_t count, std::uint64_t seed) {
  EdgeClassifier<double> model(cfg, params);
  std::vector<const LabeledSequence*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  auto grads = ModelParams<double>::zeros(cfg);
  batch_gradient(model, ptrs, tc, grads);

  auto loss_at = [&]() {
    std::vector<nn::Mat<double>> probs;
    std::vector<std::vector<int>> labels;
    for (const auto& s : batch) {
      probs.push_back(model.forward(s.x));
      labels.push_back(s.y);
    }
    return batch_loss(probs, labels, tc.loss, tc.beta);
  };

  std::vector<double*> p, g;
  model.params().visit([&](const std::string&, nn::Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) p.push_back(m.data() + i);
  });
  grads.visit([&](const std::string&, nn::Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) g.push_back(m.data() + i);
  });
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, idx.size()));

  GradCheckResult r;
  for (std::size_t k : idx) {
    const double saved = *p[k];
    *p[k] = saved + eps;
    const double up = loss_at();
    *p[k] = saved - eps;
    const double down = loss_at();
    *p[k] = saved;
    const double numeric = (up - down) / (2 * eps);
    const double analytic = *g[k];
    const double err = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
    r.max_rel_error = std::max(r.max_rel_error, err);
    ++r.checked;
  }
  return r;
}

}  // namespace routex
