#pragma once

// Cross-entropy variants over per-step class probabilities:
//   ce    unweighted,
//   cbce  class-balanced with weights from whole-batch class counts,
//   scbce step-wise class-balanced: weights from the counts of class c at
//         step t among batch routes of the same length T.
// Class-balanced weight for a group of n samples: (1 - beta) / (1 - beta^n).
// The loss is summed over edges and divided by the batch's edge count.

#include <cmath>
#include <map>
#include <string_view>
#include <tuple>
#include <vector>

#include "routex/classifier/transformer.hpp"
#include "routex/error.hpp"

namespace routex {

enum class LossKind { ce, cbce, scbce };

inline LossKind parse_loss(std::string_view s) {
  if (s == "ce") return LossKind::ce;
  if (s == "cbce") return LossKind::cbce;
  if (s == "scbce") return LossKind::scbce;
  throw Error("invalid_loss", "unknown loss '" + std::string(s) + "'");
}

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::cbce: return "cbce";
    case LossKind::scbce: return "scbce";
  }
  return "ce";
}

/// Zero count gives weight 0: no term of that group exists.
inline double class_balanced_weight(double beta, long n) {
  if (n <= 0) return 0.0;
  return (1.0 - beta) / (1.0 - std::pow(beta, double(n)));
}

/// weights[b][t]: weight of the true-class term of edge t in route b.
inline std::vector<std::vector<double>> loss_weights(const std::vector<std::vector<int>>& labels, LossKind kind,
                                                     double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw Error("invalid_beta", "beta must lie in [0, 1)");
  std::vector<std::vector<double>> w(labels.size());
  if (kind == LossKind::ce) {
    for (std::size_t b = 0; b < labels.size(); ++b) w[b].assign(labels[b].size(), 1.0);
    return w;
  }
  if (kind == LossKind::cbce) {
    std::map<int, long> counts;
    for (const auto& seq : labels)
      for (int y : seq) ++counts[y];
    for (std::size_t b = 0; b < labels.size(); ++b)
      for (int y : labels[b]) w[b].push_back(class_balanced_weight(beta, counts[y]));
    return w;
  }
  std::map<std::tuple<std::size_t, std::size_t, int>, long> counts;  // (T, t, c)
  for (const auto& seq : labels)
    for (std::size_t t = 0; t < seq.size(); ++t) ++counts[{seq.size(), t, seq[t]}];
  for (std::size_t b = 0; b < labels.size(); ++b)
    for (std::size_t t = 0; t < labels[b].size(); ++t)
      w[b].push_back(class_balanced_weight(beta, counts[{labels[b].size(), t, labels[b][t]}]));
  return w;
}

struct LossValue {
  double value = 0.0;
  std::size_t edges = 0;
};

/// Loss of one route's probabilities given its weights; `grad` receives
/// dJ/dprobs for the batch-normalized loss (divide by `batch_edges`).
template <typename S>
double weighted_nll(const nn::Mat<S>& probs, const std::vector<int>& labels, const std::vector<double>& weights,
                    std::size_t batch_edges, nn::Mat<S>* grad) {
  double total = 0.0;
  const double norm = 1.0 / double(std::max<std::size_t>(1, batch_edges));
  if (grad) *grad = nn::Mat<S>::Zero(probs.rows(), probs.cols());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const auto r = Eigen::Index(t);
    const double p = std::max(double(probs(r, labels[t])), 1e-300);
    total -= weights[t] * std::log(p);
    if (grad) (*grad)(r, labels[t]) = S(-weights[t] * norm / p);
  }
  return total * norm;
}

/// Batch loss over probability matrices (one per route).
template <typename S>
double batch_loss(const std::vector<nn::Mat<S>>& probs, const std::vector<std::vector<int>>& labels, LossKind kind,
                  double beta, std::vector<nn::Mat<S>>* grads = nullptr) {
  const auto w = loss_weights(labels, kind, beta);
  std::size_t edges = 0;
  for (const auto& seq : labels) edges += seq.size();
  double total = 0.0;
  if (grads) grads->resize(probs.size());
  for (std::size_t b = 0; b < probs.size(); ++b)
    total += weighted_nll(probs[b], labels[b], w[b], edges, grads ? &(*grads)[b] : nullptr);
  return total;
}

}  // namespace routex
