#pragma once

#include <set>
#include <vector>

#include "routex/error.hpp"

namespace routex {

using ConfusionMatrix = std::vector<std::vector<long>>;  // [true][pred]

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
  if (truth.size() != pred.size()) throw Error("length_mismatch", "truth and prediction lengths differ");
  ConfusionMatrix m(std::size_t(n_classes), std::vector<long>(std::size_t(n_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++m[std::size_t(truth[i])][std::size_t(pred[i])];
  return m;
}

/// Macro-F1 in percent over the classes that occur in truth or prediction.
inline double macro_f1(const ConfusionMatrix& m) {
  const std::size_t c = m.size();
  double sum = 0.0;
  int classes = 0;
  for (std::size_t k = 0; k < c; ++k) {
    long tp = m[k][k], fn = 0, fp = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fn += m[k][j];
      fp += m[j][k];
    }
    if (tp + fn + fp == 0) continue;
    ++classes;
    sum += 2.0 * double(tp) / double(2 * tp + fn + fp);
  }
  return classes ? 100.0 * sum / classes : 100.0;
}

inline double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
  return macro_f1(confusion(truth, pred, n_classes));
}

/// Per-step confusion counts; step t holds edges at position t of each route.
struct SequentialConfusion {
  int n_classes = 0;
  std::vector<ConfusionMatrix> counts;

  void add(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size()) throw Error("length_mismatch", "truth and prediction lengths differ");
    if (counts.size() < truth.size())
      counts.resize(truth.size(), ConfusionMatrix(std::size_t(n_classes), std::vector<long>(std::size_t(n_classes), 0)));
    for (std::size_t t = 0; t < truth.size(); ++t) ++counts[t][std::size_t(truth[t])][std::size_t(pred[t])];
  }

  /// Rows normalized to sum to 1; rows without samples stay 0.
  std::vector<std::vector<std::vector<double>>> normalized() const {
    std::vector<std::vector<std::vector<double>>> out;
    for (const auto& m : counts) {
      auto& step = out.emplace_back();
      for (const auto& row : m) {
        long total = 0;
        for (long v : row) total += v;
        auto& r = step.emplace_back();
        for (long v : row) r.push_back(total ? double(v) / double(total) : 0.0);
      }
    }
    return out;
  }

  ConfusionMatrix total() const {
    ConfusionMatrix m(std::size_t(n_classes), std::vector<long>(std::size_t(n_classes), 0));
    for (const auto& step : counts)
      for (std::size_t i = 0; i < step.size(); ++i)
        for (std::size_t j = 0; j < step.size(); ++j) m[i][j] += step[i][j];
    return m;
  }

  /// Recall of class c at step t, or -1 when the step has no such edge.
  double recall(std::size_t t, int c) const {
    const auto& row = counts.at(t)[std::size_t(c)];
    long total = 0;
    for (long v : row) total += v;
    return total ? double(row[std::size_t(c)]) / double(total) : -1.0;
  }

  json to_json() const { return json{{"n_classes", n_classes}, {"counts", counts}, {"normalized", normalized()}}; }
};

}  // namespace routex
