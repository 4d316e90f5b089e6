#pragma once

#include "routex/classifier/checkpoint.hpp"
#include "routex/classifier/features.hpp"
#include "routex/classifier/loss.hpp"
#include "routex/classifier/metrics.hpp"
#include "routex/classifier/model.hpp"
#include "routex/classifier/train.hpp"
#include "routex/datagen.hpp"

namespace routex {

inline std::vector<LabeledSequence> to_sequences(const std::vector<Sample>& samples, const ModelConfig& cfg) {
  std::vector<LabeledSequence> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.labels.size() != s.route.num_edges())
      throw Error("invalid_sample", "sample " + s.sample_id + " has " + std::to_string(s.labels.size()) +
                                        " labels for " + std::to_string(s.route.num_edges()) + " edges");
    out.push_back({encode_sample(s.instance, s.route, cfg), s.labels});
  }
  return out;
}

}  // namespace routex
