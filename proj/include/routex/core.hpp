#pragma once

// Problem model shared by every other component: instances, global states,
// routes, feasibility and objective evaluation for TSP, TSPTW, PCTSP,
// PCTSPTW and CVRP.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "routex/error.hpp"

namespace routex {

inline constexpr int kDepot = 0;
inline constexpr double kDepotHorizon = 1e9;
inline constexpr int kInstanceSchemaVersion = 1;

enum class ProblemKind { TSP, TSPTW, PCTSP, PCTSPTW, CVRP };

inline std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return "tsp";
    case ProblemKind::TSPTW: return "tsptw";
    case ProblemKind::PCTSP: return "pctsp";
    case ProblemKind::PCTSPTW: return "pctsptw";
    case ProblemKind::CVRP: return "cvrp";
  }
  return "unknown";
}

inline ProblemKind parse_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : {ProblemKind::TSP, ProblemKind::TSPTW, ProblemKind::PCTSP,
                    ProblemKind::PCTSPTW, ProblemKind::CVRP}) {
    if (lower == to_string(kind)) return kind;
  }
  throw Error("invalid_kind", "unknown problem kind '" + std::string(text) + "'");
}

inline bool has_time_windows(ProblemKind k) {
  return k == ProblemKind::TSPTW || k == ProblemKind::PCTSPTW;
}
inline bool has_prizes(ProblemKind k) {
  return k == ProblemKind::PCTSP || k == ProblemKind::PCTSPTW;
}
inline bool has_capacity(ProblemKind k) { return k == ProblemKind::CVRP; }
/// Kinds where every non-depot node must be visited.
inline bool visits_all(ProblemKind k) { return !has_prizes(k); }

struct TimeWindow {
  double earliest = 0.0;
  double latest = kDepotHorizon;
  bool operator==(const TimeWindow&) const = default;
};

struct Node {
  std::array<double, 2> coords{0.0, 0.0};
  std::optional<TimeWindow> time_window;
  std::optional<double> prize;
  std::optional<double> penalty;
  std::optional<int> demand;
  std::optional<double> stay_duration;
  std::optional<std::string> label;
  std::optional<std::string> remarks;

  bool operator==(const Node&) const = default;
};

struct VrpInstance {
  ProblemKind kind = ProblemKind::TSP;
  std::vector<Node> nodes;
  std::optional<int> capacity;
  std::optional<double> min_total_prize;
  /// Row-major N x N matrix; Euclidean distances on coords when absent.
  std::optional<std::vector<std::vector<double>>> distance_matrix;

  std::size_t size() const noexcept { return nodes.size(); }

  void check_index(int i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= nodes.size())
      throw Error("index_out_of_range", "node index " + std::to_string(i) + " out of range [0, " +
                                            std::to_string(nodes.size()) + ")");
  }

  double distance(int i, int j) const {
    check_index(i);
    check_index(j);
    if (i == j) return 0.0;
    if (distance_matrix) return (*distance_matrix)[i][j];
    const auto& a = nodes[i].coords;
    const auto& b = nodes[j].coords;
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  }

  double stay(int i) const { return nodes[i].stay_duration.value_or(0.0); }
  double prize(int i) const { return nodes[i].prize.value_or(0.0); }
  double penalty(int i) const { return nodes[i].penalty.value_or(0.0); }
  int demand(int i) const { return nodes[i].demand.value_or(0); }
  TimeWindow window(int i) const { return nodes[i].time_window.value_or(TimeWindow{}); }

  std::string display_name(int i) const {
    const auto& n = nodes.at(static_cast<std::size_t>(i));
    return n.label ? *n.label : "node " + std::to_string(i);
  }

  /// Throws Error("invalid_instance") listing every offending field.
  void validate() const;

  bool operator==(const VrpInstance&) const = default;
};

inline void VrpInstance::validate() const {
  std::vector<std::string> problems;
  if (nodes.size() < 2) problems.push_back("nodes: at least 2 nodes required");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!std::isfinite(n.coords[0]) || !std::isfinite(n.coords[1]))
      problems.push_back(where + ".coords: non-finite");
    if (n.time_window && n.time_window->earliest > n.time_window->latest)
      problems.push_back(where + ".time_window: earliest > latest");
    if (n.prize && *n.prize < 0) problems.push_back(where + ".prize: negative");
    if (n.penalty && *n.penalty < 0) problems.push_back(where + ".penalty: negative");
    if (n.demand && *n.demand < 0) problems.push_back(where + ".demand: negative");
    if (n.stay_duration && *n.stay_duration < 0)
      problems.push_back(where + ".stay_duration: negative");
    if (i == 0) continue;
    if (has_time_windows(kind) && !n.time_window)
      problems.push_back(where + ".time_window: required for " + std::string(to_string(kind)));
    if (has_prizes(kind) && (!n.prize || !n.penalty))
      problems.push_back(where + ".prize/penalty: required for " + std::string(to_string(kind)));
    if (has_capacity(kind) && !n.demand)
      problems.push_back(where + ".demand: required for cvrp");
  }
  if (has_capacity(kind) && (!capacity || *capacity <= 0))
    problems.push_back("capacity: positive integer required for cvrp");
  if (has_prizes(kind) && (!min_total_prize || *min_total_prize <= 0))
    problems.push_back("min_total_prize: positive value required for " + std::string(to_string(kind)));
  if (distance_matrix) {
    const auto& m = *distance_matrix;
    if (m.size() != nodes.size()) {
      problems.push_back("distance_matrix: expected " + std::to_string(nodes.size()) + " rows");
    } else {
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].size() != nodes.size()) {
          problems.push_back("distance_matrix[" + std::to_string(i) + "]: wrong row length");
          continue;
        }
        if (m[i][i] != 0.0)
          problems.push_back("distance_matrix[" + std::to_string(i) + "][" + std::to_string(i) +
                             "]: diagonal must be zero");
        for (double d : m[i]) {
          if (!(d >= 0.0) || !std::isfinite(d)) {
            problems.push_back("distance_matrix[" + std::to_string(i) + "]: negative or non-finite entry");
            break;
          }
        }
      }
    }
  }
  if (!problems.empty())
    throw Error("invalid_instance", "instance failed validation", json(problems));
}

/// Copy of `instance` reduced to the fields `kind` uses. Used to build the
/// simplified problems that edge annotation compares against.
inline VrpInstance restrict_to_kind(const VrpInstance& instance, ProblemKind kind) {
  VrpInstance out = instance;
  out.kind = kind;
  for (auto& n : out.nodes) {
    if (!has_time_windows(kind)) {
      n.time_window.reset();
      n.stay_duration.reset();
    }
    if (!has_prizes(kind)) {
      n.prize.reset();
      n.penalty.reset();
    }
    if (!has_capacity(kind)) n.demand.reset();
  }
  if (!has_prizes(kind)) out.min_total_prize.reset();
  if (!has_capacity(kind)) out.capacity.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Global state

/// Accumulated quantities upon arrival at a node. Only the components relevant
/// to the instance kind are populated.
struct GlobalState {
  double route_length = 0.0;
  std::optional<double> travel_time;
  std::optional<double> accumulated_prize;
  std::optional<double> accumulated_penalty_avoided;
  std::optional<int> remaining_capacity;

  bool operator==(const GlobalState&) const = default;
};

inline GlobalState initial_state(const VrpInstance& instance) {
  GlobalState s;
  if (has_time_windows(instance.kind))
    s.travel_time = std::max(0.0, instance.window(kDepot).earliest);
  if (has_prizes(instance.kind)) {
    s.accumulated_prize = 0.0;
    s.accumulated_penalty_avoided = 0.0;
  }
  if (has_capacity(instance.kind)) s.remaining_capacity = instance.capacity.value_or(0);
  return s;
}

struct StepOutcome {
  GlobalState state;
  double arrival_time = 0.0;  // before waiting; equals travel_time when no window applies
  bool late = false;          // arrival after the latest time of `to`
  bool over_capacity = false; // remaining capacity went negative
};

/// One traversal of edge (from, to): the structural equation of the edge
/// influence model extended with waiting, stays, prizes and loads.
inline StepOutcome step_state(const VrpInstance& instance, const GlobalState& state, int from, int to) {
  const double d = instance.distance(from, to);
  StepOutcome out;
  out.state = state;
  out.state.route_length += d;
  if (state.travel_time) {
    const double arrival = *state.travel_time + instance.stay(from) + d;
    out.arrival_time = arrival;
    const auto tw = instance.window(to);
    out.late = arrival > tw.latest;
    out.state.travel_time = std::max(arrival, tw.earliest);
  }
  if (state.accumulated_prize && to != kDepot) {
    *out.state.accumulated_prize += instance.prize(to);
    *out.state.accumulated_penalty_avoided += instance.penalty(to);
  }
  if (state.remaining_capacity) {
    if (to == kDepot) {
      out.state.remaining_capacity = instance.capacity.value_or(0);
    } else {
      *out.state.remaining_capacity -= instance.demand(to);
      out.over_capacity = *out.state.remaining_capacity < 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Routes

struct Edge {
  int tail = 0;
  int head = 0;
  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

struct Violation {
  std::size_t position = 0;  // index into Route::order (0 for route-level)
  std::string kind;          // time_window, capacity, depot_revisit, unvisited, min_prize, not_closed
  int node = -1;
  bool operator==(const Violation&) const = default;
};

struct Route {
  std::vector<int> order;
  std::vector<GlobalState> states;  // states[k] is the state upon arrival at order[k]
  std::vector<Violation> violations;

  std::size_t num_edges() const noexcept { return order.empty() ? 0 : order.size() - 1; }
  Edge edge(std::size_t t) const { return {order.at(t), order.at(t + 1)}; }
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t t = 0; t + 1 < order.size(); ++t) out.push_back({order[t], order[t + 1]});
    return out;
  }
  std::set<int> visited_set() const { return {order.begin(), order.end()}; }
  const GlobalState& final_state() const { return states.back(); }

  bool operator==(const Route&) const = default;
};

inline Route evaluate_route(const VrpInstance& instance, std::span<const int> order) {
  if (order.empty()) throw Error("empty_order", "route order is empty");
  if (order.front() != kDepot) throw Error("invalid_order", "route must start at the depot");
  std::vector<char> seen(instance.size(), 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    instance.check_index(order[k]);
    if (order[k] == kDepot) continue;
    if (seen[order[k]])
      throw Error("duplicate_node", "node " + std::to_string(order[k]) + " visited twice");
    seen[order[k]] = 1;
  }

  Route route;
  route.order.assign(order.begin(), order.end());
  route.states.reserve(order.size());
  route.states.push_back(initial_state(instance));
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto step = step_state(instance, route.states.back(), order[k - 1], order[k]);
    if (step.late) route.violations.push_back({k, "time_window", order[k]});
    if (step.over_capacity) route.violations.push_back({k, "capacity", order[k]});
    if (order[k] == kDepot && k + 1 < order.size() && !has_capacity(instance.kind))
      route.violations.push_back({k, "depot_revisit", kDepot});
    route.states.push_back(step.state);
  }
  return route;
}

inline std::vector<int> unvisited_nodes(const VrpInstance& instance, const Route& route) {
  std::vector<char> seen(instance.size(), 0);
  for (int v : route.order) seen[v] = 1;
  std::vector<int> out;
  for (std::size_t i = 1; i < instance.size(); ++i)
    if (!seen[i]) out.push_back(static_cast<int>(i));
  return out;
}

inline double unvisited_penalty(const VrpInstance& instance, const Route& route) {
  double total = 0.0;
  for (int v : unvisited_nodes(instance, route)) total += instance.penalty(v);
  return total;
}

/// TSP/CVRP: route length. TSPTW: final travel time (waits and stays
/// included). PCTSP/PCTSPTW: route length plus penalties of unvisited nodes.
inline double objective(const VrpInstance& instance, const Route& route) {
  const auto& last = route.final_state();
  switch (instance.kind) {
    case ProblemKind::TSPTW: return last.travel_time.value_or(last.route_length);
    case ProblemKind::PCTSP:
    case ProblemKind::PCTSPTW: return last.route_length + unvisited_penalty(instance, route);
    default: return last.route_length;
  }
}

struct Feasibility {
  bool feasible = true;
  std::vector<Violation> violations;
};

inline Feasibility is_feasible(const VrpInstance& instance, const Route& route) {
  Feasibility f;
  f.violations = route.violations;
  if (route.order.size() < 2 || route.order.back() != kDepot)
    f.violations.push_back({route.order.size() - 1, "not_closed", route.order.back()});
  if (visits_all(instance.kind)) {
    for (int v : unvisited_nodes(instance, route)) f.violations.push_back({0, "unvisited", v});
  }
  if (has_prizes(instance.kind)) {
    const double prize = route.final_state().accumulated_prize.value_or(0.0);
    if (prize < instance.min_total_prize.value_or(0.0)) f.violations.push_back({0, "min_prize", -1});
  }
  f.feasible = f.violations.empty();
  return f;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const Node& n) {
  j = json{{"coords", {n.coords[0], n.coords[1]}}};
  if (n.time_window) j["time_window"] = {n.time_window->earliest, n.time_window->latest};
  if (n.prize) j["prize"] = *n.prize;
  if (n.penalty) j["penalty"] = *n.penalty;
  if (n.demand) j["demand"] = *n.demand;
  if (n.stay_duration) j["stay_duration"] = *n.stay_duration;
  if (n.label) j["label"] = *n.label;
  if (n.remarks) j["remarks"] = *n.remarks;
}

namespace detail {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

inline void from_json(const json& j, Node& n) {
  const auto& c = j.at("coords");
  if (!c.is_array() || c.size() != 2) throw Error("invalid_instance", "coords must be [x, y]");
  n.coords = {c[0].get<double>(), c[1].get<double>()};
  if (j.contains("time_window") && !j.at("time_window").is_null()) {
    const auto& tw = j.at("time_window");
    if (!tw.is_array() || tw.size() != 2) throw Error("invalid_instance", "time_window must be [e, l]");
    n.time_window = TimeWindow{tw[0].get<double>(), tw[1].get<double>()};
  }
  n.prize = detail::optional_field<double>(j, "prize");
  n.penalty = detail::optional_field<double>(j, "penalty");
  n.demand = detail::optional_field<int>(j, "demand");
  n.stay_duration = detail::optional_field<double>(j, "stay_duration");
  n.label = detail::optional_field<std::string>(j, "label");
  n.remarks = detail::optional_field<std::string>(j, "remarks");
}

inline void to_json(json& j, const VrpInstance& inst) {
  j = json{{"schema_version", kInstanceSchemaVersion},
           {"kind", std::string(to_string(inst.kind))},
           {"nodes", inst.nodes}};
  if (inst.capacity) j["capacity"] = *inst.capacity;
  if (inst.min_total_prize) j["min_total_prize"] = *inst.min_total_prize;
  if (inst.distance_matrix) j["distance_matrix"] = *inst.distance_matrix;
}

inline void from_json(const json& j, VrpInstance& inst) {
  inst.kind = parse_kind(j.at("kind").get<std::string>());
  inst.nodes = j.at("nodes").get<std::vector<Node>>();
  inst.capacity = detail::optional_field<int>(j, "capacity");
  inst.min_total_prize = detail::optional_field<double>(j, "min_total_prize");
  inst.distance_matrix = detail::optional_field<std::vector<std::vector<double>>>(j, "distance_matrix");
}

/// Parse and validate an instance document; every failure is reported as
/// Error("invalid_instance") with field diagnostics.
inline VrpInstance parse_instance(const json& j) {
  VrpInstance inst;
  try {
    inst = j.get<VrpInstance>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("invalid_instance", "malformed instance document", json::array({e.what()}));
  }
  inst.validate();
  return inst;
}

inline void to_json(json& j, const GlobalState& s) {
  j = json{{"route_length", s.route_length}};
  if (s.travel_time) j["travel_time"] = *s.travel_time;
  if (s.accumulated_prize) j["accumulated_prize"] = *s.accumulated_prize;
  if (s.accumulated_penalty_avoided) j["accumulated_penalty_avoided"] = *s.accumulated_penalty_avoided;
  if (s.remaining_capacity) j["remaining_capacity"] = *s.remaining_capacity;
}

inline void from_json(const json& j, GlobalState& s) {
  s.route_length = j.at("route_length").get<double>();
  s.travel_time = detail::optional_field<double>(j, "travel_time");
  s.accumulated_prize = detail::optional_field<double>(j, "accumulated_prize");
  s.accumulated_penalty_avoided = detail::optional_field<double>(j, "accumulated_penalty_avoided");
  s.remaining_capacity = detail::optional_field<int>(j, "remaining_capacity");
}

inline void to_json(json& j, const Edge& e) { j = json::array({e.tail, e.head}); }
inline void from_json(const json& j, Edge& e) {
  e.tail = j.at(0).get<int>();
  e.head = j.at(1).get<int>();
}

inline void to_json(json& j, const Violation& v) {
  j = json{{"position", v.position}, {"kind", v.kind}, {"node", v.node}};
}
inline void from_json(const json& j, Violation& v) {
  v.position = j.at("position").get<std::size_t>();
  v.kind = j.at("kind").get<std::string>();
  v.node = j.at("node").get<int>();
}

inline void to_json(json& j, const Route& r) {
  j = json{{"order", r.order}, {"states", r.states}};
  if (!r.violations.empty()) j["violations"] = r.violations;
}

inline void from_json(const json& j, Route& r) {
  r.order = j.at("order").get<std::vector<int>>();
  r.states = j.contains("states") ? j.at("states").get<std::vector<GlobalState>>() : std::vector<GlobalState>{};
  r.violations = j.contains("violations") ? j.at("violations").get<std::vector<Violation>>()
                                          : std::vector<Violation>{};
}

/// A route document only needs "order"; states are always recomputed.
inline Route parse_route(const json& j, const VrpInstance& instance) {
  return evaluate_route(instance, j.at("order").get<std::vector<int>>());
}

}  // namespace routex
