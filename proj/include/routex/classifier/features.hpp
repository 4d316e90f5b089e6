#pragma once

// Classifier inputs: per-node features (depot row separate) and the global
// state vector fed into every edge embedding. All values are rescaled to
// roughly unit range.

#include <algorithm>
#include <vector>

#include "routex/core.hpp"

namespace routex {

struct FeatureDims {
  int node = 2;   // D
  int depot = 2;  // D'
  int state = 0;  // D_st
};

inline FeatureDims feature_dims(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSPTW: return {4, 4, 1};
    case ProblemKind::PCTSP: return {4, 2, 2};
    case ProblemKind::PCTSPTW: return {6, 4, 3};
    case ProblemKind::CVRP: return {3, 2, 1};
    case ProblemKind::TSP: return {2, 2, 0};
  }
  return {};
}

/// Times are divided by `time`; prizes and penalties by their sampling upper
/// bounds 4/N and 3K/N (K = 2 up to 20 nodes, else 3); demands by capacity.
struct FeatureScales {
  double time = 10.0;

  double prize(std::size_t n) const { return 4.0 / double(n); }
  double penalty(std::size_t n) const { return 3.0 * (n <= 20 ? 2.0 : 3.0) / double(n); }
};

struct NodeFeatures {
  std::vector<double> depot;               // D'
  std::vector<std::vector<double>> nodes;  // N rows of D; row 0 unused (depot goes through its own projection)
};

inline NodeFeatures featurize_nodes(const VrpInstance& inst, ProblemKind kind, const FeatureScales& scales) {
  const auto n = inst.size();
  NodeFeatures f;
  double latest_cap = 0.0;
  for (std::size_t i = 1; i < n; ++i) latest_cap = std::max(latest_cap, inst.window(int(i)).latest);
  const double ps = scales.prize(n), pen = scales.penalty(n);
  const double cap = double(inst.capacity.value_or(1));

  const auto& d = inst.nodes[kDepot].coords;
  f.depot = {d[0], d[1]};
  if (has_time_windows(kind)) {
    // The depot window is effectively unbounded; clamp it to the horizon the
    // other nodes span so it stays on the same scale.
    const auto tw = inst.window(kDepot);
    f.depot.push_back(tw.earliest / scales.time);
    f.depot.push_back(std::min(tw.latest, latest_cap) / scales.time);
  }

  f.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = int(i);
    auto& row = f.nodes[i];
    row = {inst.nodes[i].coords[0], inst.nodes[i].coords[1]};
    if (has_prizes(kind)) {
      row.push_back(inst.prize(v) / ps);
      row.push_back(inst.penalty(v) / pen);
    }
    if (has_time_windows(kind)) {
      const auto tw = inst.window(v);
      row.push_back(tw.earliest / scales.time);
      row.push_back(std::min(tw.latest, std::max(latest_cap, tw.earliest)) / scales.time);
    }
    if (has_capacity(kind)) row.push_back(double(inst.demand(v)) / cap);
  }
  return f;
}

/// TSPTW: travel time. PCTSP: collected prize relative to the minimum, and
/// the share of total penalty avoided. PCTSPTW: both of those, then travel
/// time. CVRP: remaining capacity share.
inline std::vector<double> state_vector(const VrpInstance& inst, ProblemKind kind, const GlobalState& s,
                                        const FeatureScales& scales) {
  std::vector<double> out;
  if (has_prizes(kind)) {
    double total_penalty = 0.0;
    for (std::size_t i = 1; i < inst.size(); ++i) total_penalty += inst.penalty(int(i));
    const double min_prize = inst.min_total_prize.value_or(1.0);
    out.push_back(s.accumulated_prize.value_or(0.0) / (min_prize > 0 ? min_prize : 1.0));
    out.push_back(total_penalty > 0 ? s.accumulated_penalty_avoided.value_or(0.0) / total_penalty : 0.0);
  }
  if (has_time_windows(kind)) out.push_back(s.travel_time.value_or(0.0) / scales.time);
  if (has_capacity(kind)) out.push_back(double(s.remaining_capacity.value_or(0)) / double(inst.capacity.value_or(1)));
  return out;
}

}  // namespace routex
