#pragma once

// Influence of an edge on the rest of its route, the representative values
// summarizing it, and the element-wise comparison of two such summaries.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "routex/core.hpp"

namespace routex {

/// (S_{t+1}, y_{t+1}, S_{t+2}, ..., y_{T-1}, S_T) for the edge at step t.
struct InfluenceTuple {
  int t = 1;
  std::vector<GlobalState> states;  // T - t entries
  std::vector<int> intentions;      // T - t - 1 entries

  bool operator==(const InfluenceTuple&) const = default;
};

inline InfluenceTuple influence(const Route& route, const std::vector<int>& intentions, int t) {
  const std::size_t edges = route.num_edges();
  if (intentions.size() != edges)
    throw Error("length_mismatch", "expected " + std::to_string(edges) + " intentions, got " +
                                       std::to_string(intentions.size()));
  if (t < 1 || std::size_t(t) > edges)
    throw Error("step_out_of_range", "step " + std::to_string(t) + " outside [1, " + std::to_string(edges) + "]");
  InfluenceTuple out;
  out.t = t;
  out.states.assign(route.states.begin() + t, route.states.end());
  out.intentions.assign(intentions.begin() + t, intentions.end());
  return out;
}

inline void to_json(json& j, const InfluenceTuple& x) {
  j = json{{"t", x.t}, {"states", x.states}, {"intentions", x.intentions}};
}

inline void from_json(const json& j, InfluenceTuple& x) {
  x.t = j.at("t").get<int>();
  x.states = j.at("states").get<std::vector<GlobalState>>();
  x.intentions = j.at("intentions").get<std::vector<int>>();
}

struct RepresentativeValues {
  double short_term_objective = 0.0;
  double long_term_objective = 0.0;
  std::optional<double> class_ratio;  // absent for the last edge
  double feasibility_ratio = 1.0;
  std::map<std::string, double> extras;

  bool operator==(const RepresentativeValues&) const = default;
};

/// Nodes a route of this kind has to visit.
inline std::vector<int> required_nodes(const VrpInstance& inst) {
  std::vector<int> out;
  if (has_prizes(inst.kind)) return out;
  for (std::size_t i = 1; i < inst.size(); ++i) out.push_back(int(i));
  return out;
}

/// Objective component of a single state: travel time for TSPTW, length for
/// every other kind.
inline double state_objective(const VrpInstance& inst, const GlobalState& s) {
  if (inst.kind == ProblemKind::TSPTW) return s.travel_time.value_or(s.route_length);
  return s.route_length;
}

/// Representative values of the edge at step t (1-based) of `route`.
///
/// Sign conventions used by compare(): objectives and penalties are costs, so
/// a positive difference means the CF route is worse; feasibility_ratio and
/// prizes are benefits. class_ratio has no better direction.
///
/// class_ratio covers the edges after step t.
inline RepresentativeValues representative_values(const VrpInstance& inst, const Route& route,
                                                  const std::vector<int>& intentions, int t) {
  const auto inf = influence(route, intentions, t);
  RepresentativeValues r;
  r.short_term_objective = state_objective(inst, inf.states.front());
  r.long_term_objective = objective(inst, route);

  if (!inf.intentions.empty()) {
    long zeros = 0;
    for (int y : inf.intentions) zeros += y == 0;
    r.class_ratio = double(zeros) / double(inf.intentions.size());
  }

  const auto required = required_nodes(inst);
  std::vector<char> before(inst.size(), 0), after(inst.size(), 0);
  for (std::size_t k = 0; k < route.order.size(); ++k) (k < std::size_t(t) ? before : after)[route.order[k]] = 1;
  long open = 0, reached = 0;
  for (int v : required) {
    if (before[v]) continue;
    ++open;
    reached += after[v];
  }
  r.feasibility_ratio = open ? double(reached) / double(open) : 1.0;

  const auto& last = route.final_state();
  long late = 0, over = 0;
  for (const auto& v : route.violations) {
    if (v.position < std::size_t(t)) continue;
    late += v.kind == "time_window";
    over += v.kind == "capacity";
  }
  if (has_time_windows(inst.kind)) {
    r.extras["total_length"] = last.route_length;
    r.extras["late_arrivals"] = double(late);
  }
  if (has_prizes(inst.kind)) {
    r.extras["total_prize"] = last.accumulated_prize.value_or(0.0);
    r.extras["unvisited_penalty"] = unvisited_penalty(inst, route);
    if (inst.kind == ProblemKind::PCTSPTW) r.extras["final_travel_time"] = last.travel_time.value_or(0.0);
  }
  if (has_capacity(inst.kind)) {
    long returns = 0;
    for (std::size_t k = std::size_t(t); k + 1 < route.order.size(); ++k) returns += route.order[k] == kDepot;
    r.extras["depot_returns"] = double(returns);
    r.extras["capacity_violations"] = double(over);
  }
  return r;
}

inline void to_json(json& j, const RepresentativeValues& r) {
  j = json{{"short_term_objective", r.short_term_objective},
           {"long_term_objective", r.long_term_objective},
           {"feasibility_ratio", r.feasibility_ratio},
           {"extras", r.extras}};
  if (r.class_ratio) j["class_ratio"] = *r.class_ratio;
}

inline void from_json(const json& j, RepresentativeValues& r) {
  r.short_term_objective = j.at("short_term_objective").get<double>();
  r.long_term_objective = j.at("long_term_objective").get<double>();
  r.feasibility_ratio = j.at("feasibility_ratio").get<double>();
  r.class_ratio = detail::optional_field<double>(j, "class_ratio");
  r.extras = j.value("extras", std::map<std::string, double>{});
}

using Comparison = std::map<std::string, double>;

inline std::map<std::string, double> flatten(const RepresentativeValues& r) {
  std::map<std::string, double> out = r.extras;
  out["short_term_objective"] = r.short_term_objective;
  out["long_term_objective"] = r.long_term_objective;
  out["feasibility_ratio"] = r.feasibility_ratio;
  if (r.class_ratio) out["class_ratio"] = *r.class_ratio;
  return out;
}

/// cf - actual for every value present on both sides.
inline Comparison compare(const RepresentativeValues& actual, const RepresentativeValues& cf) {
  const auto a = flatten(actual), c = flatten(cf);
  Comparison out;
  for (const auto& [key, value] : c) {
    auto it = a.find(key);
    if (it != a.end()) out[key] = value - it->second;
  }
  return out;
}

}  // namespace routex
