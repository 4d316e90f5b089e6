#pragma once

// Route generation honoring a fixed edge prefix. Two engines share one
// contract: an exhaustive branch-and-bound oracle for small instances and a
// construction + local search + perturbation heuristic for everything else.
//
// Both rank complete routes by the same lexicographic key:
//   1. constraint violations introduced after the prefix (late depot return),
//   2. shortfall: unvisited required nodes, or missing prize for PC kinds,
//   3. the kind's objective,
//   4. geometric route length,
//   5. lexicographic order of the node sequence.

#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "routex/core.hpp"

namespace routex {

struct FixedPrefix {
  std::vector<Edge> edges;

  /// The first `k` edges of an order.
  static FixedPrefix from_order(std::span<const int> order, std::size_t k) {
    FixedPrefix p;
    for (std::size_t t = 0; t < k && t + 1 < order.size(); ++t) p.edges.push_back({order[t], order[t + 1]});
    return p;
  }

  /// Node sequence spanned by the prefix, starting at the depot.
  std::vector<int> nodes() const {
    std::vector<int> out{kDepot};
    for (const auto& e : edges) out.push_back(e.head);
    return out;
  }

  bool empty() const noexcept { return edges.empty(); }
  std::size_t size() const noexcept { return edges.size(); }
};

enum class Engine { heuristic, exact };
/// What to do when the prefix itself breaks a time window or the capacity.
enum class PrefixPolicy { reject, flag };

struct SolverConfig {
  Engine engine = Engine::heuristic;
  int local_search_iterations = 10000;  // cap on applied improving moves per descent
  int perturbation_rounds = 40;
  std::optional<double> time_limit_seconds;
  std::uint64_t rng_seed = 1234;
  int exact_max_nodes = 12;
  PrefixPolicy prefix_policy = PrefixPolicy::reject;
};

inline Engine parse_engine(std::string_view s) {
  if (s == "heuristic") return Engine::heuristic;
  if (s == "exact") return Engine::exact;
  throw Error("invalid_engine", "unknown engine '" + std::string(s) + "'");
}
inline std::string_view to_string(Engine e) { return e == Engine::exact ? "exact" : "heuristic"; }

inline void to_json(json& j, const SolverConfig& c) {
  j = json{{"engine", std::string(to_string(c.engine))},
           {"local_search_iterations", c.local_search_iterations},
           {"perturbation_rounds", c.perturbation_rounds},
           {"rng_seed", c.rng_seed},
           {"exact_max_nodes", c.exact_max_nodes},
           {"prefix_policy", c.prefix_policy == PrefixPolicy::flag ? "flag" : "reject"}};
  if (c.time_limit_seconds) j["time_limit_seconds"] = *c.time_limit_seconds;
}

/// Missing fields keep their defaults.
inline void from_json(const json& j, SolverConfig& c) {
  if (j.contains("engine")) c.engine = parse_engine(j.at("engine").get<std::string>());
  c.local_search_iterations = j.value("local_search_iterations", c.local_search_iterations);
  c.perturbation_rounds = j.value("perturbation_rounds", c.perturbation_rounds);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.exact_max_nodes = j.value("exact_max_nodes", c.exact_max_nodes);
  if (j.contains("time_limit_seconds")) c.time_limit_seconds = detail::optional_field<double>(j, "time_limit_seconds");
  if (j.contains("prefix_policy")) {
    const auto p = j.at("prefix_policy").get<std::string>();
    if (p != "flag" && p != "reject") throw Error("invalid_config", "prefix_policy must be flag or reject");
    c.prefix_policy = p == "flag" ? PrefixPolicy::flag : PrefixPolicy::reject;
  }
}

struct RouteScore {
  int violations = 0;
  double shortfall = 0.0;
  double objective = 0.0;
  double length = 0.0;
};

namespace detail {

inline bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

/// -1 if a ranks before b, +1 if after, 0 if tied up to tolerance.
inline int compare_scores(const RouteScore& a, const RouteScore& b) {
  if (a.violations != b.violations) return a.violations < b.violations ? -1 : 1;
  for (auto [x, y] : {std::pair{a.shortfall, b.shortfall}, std::pair{a.objective, b.objective},
                      std::pair{a.length, b.length}}) {
    if (!nearly_equal(x, y)) return x < y ? -1 : 1;
  }
  return 0;
}

}  // namespace detail

inline bool better(const RouteScore& a, const RouteScore& b) { return detail::compare_scores(a, b) < 0; }

namespace detail {

/// Dense per-instance tables used by both engines.
class Evaluator {
 public:
  explicit Evaluator(const VrpInstance& inst) : inst_(inst), n_(inst.size()), dist_(n_ * n_), min_in_(n_) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) dist_[i * n_ + j] = inst.distance(int(i), int(j));
    for (std::size_t j = 0; j < n_; ++j) {
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n_; ++i)
        if (i != j) m = std::min(m, d(int(i), int(j)));
      min_in_[j] = n_ > 1 ? m : 0.0;
    }
    shortest_ = dist_;
    for (std::size_t k = 0; k < n_; ++k)
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j)
          shortest_[i * n_ + j] = std::min(shortest_[i * n_ + j], shortest_[i * n_ + k] + shortest_[k * n_ + j]);
  }

  const VrpInstance& instance() const { return inst_; }
  ProblemKind kind() const { return inst_.kind; }
  std::size_t size() const { return n_; }
  double d(int i, int j) const { return dist_[std::size_t(i) * n_ + std::size_t(j)]; }
  double shortest(int i, int j) const { return shortest_[std::size_t(i) * n_ + std::size_t(j)]; }
  double min_in(int j) const { return min_in_[std::size_t(j)]; }

  /// Score of a complete order whose first `fixed` edges are the prefix.
  RouteScore score(std::span<const int> order, std::size_t fixed) const {
    const auto kind = inst_.kind;
    RouteScore s;
    double time = has_time_windows(kind) ? std::max(0.0, inst_.window(kDepot).earliest) : 0.0;
    double prize = 0.0;
    int load = inst_.capacity.value_or(0);
    std::vector<char> seen(n_, 0);
    for (std::size_t k = 1; k < order.size(); ++k) {
      const int from = order[k - 1];
      const int to = order[k];
      s.length += d(from, to);
      bool violated = false;
      if (has_time_windows(kind)) {
        const double arrival = time + inst_.stay(from) + d(from, to);
        const auto tw = inst_.window(to);
        violated |= arrival > tw.latest;
        time = std::max(arrival, tw.earliest);
      }
      if (to == kDepot) {
        load = inst_.capacity.value_or(0);
        if (!has_capacity(kind) && k + 1 < order.size()) violated = true;
      } else {
        seen[std::size_t(to)] = 1;
        prize += inst_.prize(to);
        load -= inst_.demand(to);
        if (has_capacity(kind) && load < 0) violated = true;
      }
      if (violated && k > fixed) ++s.violations;
    }
    double penalty = 0.0;
    int unvisited = 0;
    for (std::size_t i = 1; i < n_; ++i) {
      if (seen[i]) continue;
      ++unvisited;
      penalty += inst_.penalty(int(i));
    }
    if (has_prizes(kind)) {
      s.shortfall = std::max(0.0, inst_.min_total_prize.value_or(0.0) - prize);
      s.objective = s.length + penalty;
    } else {
      s.shortfall = unvisited;
      s.objective = kind == ProblemKind::TSPTW ? time : s.length;
    }
    return s;
  }

 private:
  const VrpInstance& inst_;
  std::size_t n_;
  std::vector<double> dist_;
  std::vector<double> min_in_;
  std::vector<double> shortest_;
};

struct Deadline {
  std::optional<std::chrono::steady_clock::time_point> at;
  explicit Deadline(std::optional<double> seconds) {
    if (seconds)
      at = std::chrono::steady_clock::now() +
           std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(*seconds));
  }
  bool expired() const { return at && std::chrono::steady_clock::now() >= *at; }
};

inline bool lex_less(std::span<const int> a, std::span<const int> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Prefix checks shared by both engines. Returns the prefix node sequence.
inline std::vector<int> check_prefix(const VrpInstance& inst, const FixedPrefix& prefix, PrefixPolicy policy) {
  int expected_tail = kDepot;
  std::vector<char> seen(inst.size(), 0);
  for (std::size_t t = 0; t < prefix.edges.size(); ++t) {
    const auto& e = prefix.edges[t];
    if (e.tail < 0 || e.head < 0 || std::size_t(e.tail) >= inst.size() || std::size_t(e.head) >= inst.size())
      throw Error("infeasible_prefix", "prefix edge " + std::to_string(t) + " has an out-of-range node");
    if (e.tail != expected_tail)
      throw Error("infeasible_prefix", "prefix edges do not chain from the depot at edge " + std::to_string(t));
    if (e.tail == e.head) throw Error("infeasible_prefix", "prefix edge " + std::to_string(t) + " is a self loop");
    if (e.head != kDepot) {
      if (seen[std::size_t(e.head)])
        throw Error("infeasible_prefix", "prefix visits node " + std::to_string(e.head) + " twice");
      seen[std::size_t(e.head)] = 1;
    }
    expected_tail = e.head;
  }
  auto nodes = prefix.nodes();
  if (policy == PrefixPolicy::reject) {
    const auto route = evaluate_route(inst, nodes);
    if (!route.violations.empty())
      throw Error("infeasible_prefix", "prefix violates " + route.violations.front().kind + " at node " +
                                           std::to_string(route.violations.front().node),
                  json(route.violations));
  }
  return nodes;
}

/// Exhaustive depth-first search with lower-bound pruning. Children are
/// expanded in increasing node index (depot first), so the first optimum
/// found is the lexicographically smallest one.
class ExactSearch {
 public:
  ExactSearch(const Evaluator& ev, std::vector<int> prefix_nodes) : ev_(ev), path_(std::move(prefix_nodes)) {
    fixed_ = path_.size() - 1;
    inst_ = &ev.instance();
    remaining_.assign(ev.size(), 1);
    remaining_[kDepot] = 0;
    for (int v : path_) remaining_[std::size_t(v)] = 0;
  }

  std::vector<int> run() {
    // Replay the prefix to obtain the state at its tip.
    const auto kind = inst_->kind;
    State s;
    s.time = has_time_windows(kind) ? std::max(0.0, inst_->window(kDepot).earliest) : 0.0;
    s.load = inst_->capacity.value_or(0);
    for (std::size_t k = 1; k < path_.size(); ++k) s = advance(s, path_[k - 1], path_[k]);
    dfs(s);
    if (!found_) {
      best_order_ = path_;
      if (best_order_.back() != kDepot || best_order_.size() == 1) best_order_.push_back(kDepot);
    }
    return best_order_;
  }

 private:
  struct State {
    double length = 0.0;
    double time = 0.0;
    double prize = 0.0;
    int load = 0;
  };

  State advance(State s, int from, int to) const {
    s.length += ev_.d(from, to);
    if (has_time_windows(inst_->kind))
      s.time = std::max(s.time + inst_->stay(from) + ev_.d(from, to), inst_->window(to).earliest);
    if (to == kDepot) {
      s.load = inst_->capacity.value_or(0);
    } else {
      s.prize += inst_->prize(to);
      s.load -= inst_->demand(to);
    }
    return s;
  }

  bool can_reach(const State& s, int cur, int j) const {
    const auto kind = inst_->kind;
    if (has_time_windows(kind) &&
        s.time + inst_->stay(cur) + ev_.shortest(cur, j) > inst_->window(j).latest)
      return false;
    if (has_capacity(kind) && inst_->demand(j) > inst_->capacity.value_or(0)) return false;
    return true;
  }

  void consider(const std::vector<int>& order) {
    const auto s = ev_.score(order, fixed_);
    if (!found_ || better(s, best_)) {
      found_ = true;
      best_ = s;
      best_order_ = order;
    }
  }

  RouteScore lower_bound(const State& s, int cur) const {
    const auto kind = inst_->kind;
    RouteScore lb;
    lb.length = s.length;  // finite: an infinite bound would compare "nearly equal" to anything
    double visit_cost = 0.0;
    double reachable_prize = 0.0;
    int unreachable = 0;
    double forced_penalty = 0.0;
    for (std::size_t j = 1; j < ev_.size(); ++j) {
      if (!remaining_[j]) continue;
      const int v = int(j);
      if (!can_reach(s, cur, v)) {
        ++unreachable;
        forced_penalty += inst_->penalty(v);
        continue;
      }
      reachable_prize += inst_->prize(v);
      if (has_prizes(kind)) {
        visit_cost += std::min(inst_->penalty(v), ev_.min_in(v));
      } else {
        visit_cost += ev_.min_in(v) + (kind == ProblemKind::TSPTW ? inst_->stay(v) : 0.0);
      }
    }
    const double closing = ev_.min_in(kDepot);
    if (has_prizes(kind)) {
      lb.shortfall = std::max(0.0, inst_->min_total_prize.value_or(0.0) - s.prize - reachable_prize);
      lb.objective = s.length + visit_cost + forced_penalty + closing;
    } else {
      lb.shortfall = unreachable;
      lb.objective = (kind == ProblemKind::TSPTW ? s.time + inst_->stay(cur) : s.length) + visit_cost + closing;
    }
    return lb;
  }

  void dfs(const State& s) {
    const int cur = path_.back();
    const bool cvrp = has_capacity(inst_->kind);
    if (cur == kDepot && path_.size() > 1) {
      consider(path_);
    } else if (cur != kDepot && !cvrp) {
      path_.push_back(kDepot);
      consider(path_);
      path_.pop_back();
    }
    if (found_ && !better(lower_bound(s, cur), best_)) return;

    if (cvrp && cur != kDepot) {
      path_.push_back(kDepot);
      dfs(advance(s, cur, kDepot));
      path_.pop_back();
    }
    for (std::size_t j = 1; j < ev_.size(); ++j) {
      if (!remaining_[j]) continue;
      const int v = int(j);
      const State next = advance(s, cur, v);
      if (has_time_windows(inst_->kind) &&
          s.time + inst_->stay(cur) + ev_.d(cur, v) > inst_->window(v).latest)
        continue;
      if (cvrp && next.load < 0) continue;
      remaining_[j] = 0;
      path_.push_back(v);
      dfs(next);
      path_.pop_back();
      remaining_[j] = 1;
    }
  }

  const Evaluator& ev_;
  const VrpInstance* inst_ = nullptr;
  std::vector<int> path_;
  std::vector<char> remaining_;
  std::size_t fixed_ = 0;
  bool found_ = false;
  RouteScore best_;
  std::vector<int> best_order_;
};

/// Route = fixed node sequence + free nodes + closing depot.
inline std::vector<int> materialize(std::span<const int> fixed, std::span<const int> free) {
  std::vector<int> order(fixed.begin(), fixed.end());
  order.insert(order.end(), free.begin(), free.end());
  const bool ends_at_depot_already = free.empty() && fixed.size() > 1 && fixed.back() == kDepot;
  if (!ends_at_depot_already) order.push_back(kDepot);
  return order;
}

class LocalSearch {
 public:
  LocalSearch(const Evaluator& ev, std::vector<int> fixed, const SolverConfig& config, const Deadline& deadline)
      : ev_(ev), fixed_(std::move(fixed)), config_(config), deadline_(deadline) {}

  struct Candidate {
    std::vector<int> free;
    std::vector<int> order;
    RouteScore score;
  };

  Candidate make(std::vector<int> free) const {
    // moves can leave two depots side by side; an empty trip never helps
    std::vector<int> kept;
    kept.reserve(free.size());
    for (int v : free)
      if (v != kDepot || (kept.empty() ? fixed_.back() : kept.back()) != kDepot) kept.push_back(v);
    if (!kept.empty() && kept.back() == kDepot) kept.pop_back();
    free = std::move(kept);
    Candidate c;
    c.order = materialize(fixed_, free);
    c.free = std::move(free);
    c.score = ev_.score(c.order, fixed_.size() - 1);
    return c;
  }

  /// Strictly better score, or an equal score with a lexicographically smaller order.
  static bool improves(const Candidate& a, const Candidate& b) {
    const int c = compare_scores(a.score, b.score);
    return c < 0 || (c == 0 && lex_less(a.order, b.order));
  }

  std::vector<int> unused(const std::vector<int>& free) const {
    std::vector<char> used(ev_.size(), 0);
    for (int v : fixed_) used[std::size_t(v)] = 1;
    for (int v : free) used[std::size_t(v)] = 1;
    std::vector<int> out;
    for (std::size_t j = 1; j < ev_.size(); ++j)
      if (!used[j]) out.push_back(int(j));
    return out;
  }

  Candidate descend(Candidate current) const {
    int applied = 0;
    while (applied < config_.local_search_iterations && !deadline_.expired()) {
      auto next = first_improvement(current);
      if (!next) break;
      current = std::move(*next);
      ++applied;
    }
    return current;
  }

 private:
  std::optional<Candidate> first_improvement(const Candidate& cur) const {
    const auto kind = ev_.kind();
    const auto& f = cur.free;
    const std::size_t n = f.size();
    auto attempt = [&](std::vector<int> free) -> std::optional<Candidate> {
      auto c = make(std::move(free));
      if (improves(c, cur)) return c;
      return std::nullopt;
    };

    // 2-opt: reverse f[i..j]
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        auto g = f;
        std::reverse(g.begin() + long(i), g.begin() + long(j) + 1);
        if (auto c = attempt(std::move(g))) return c;
      }
    }
    // or-opt: relocate a segment of 1..3 nodes
    for (std::size_t len = 1; len <= 3; ++len) {
      for (std::size_t i = 0; i + len <= n; ++i) {
        std::vector<int> seg(f.begin() + long(i), f.begin() + long(i + len));
        std::vector<int> rest(f.begin(), f.begin() + long(i));
        rest.insert(rest.end(), f.begin() + long(i + len), f.end());
        for (std::size_t p = 0; p <= rest.size(); ++p) {
          if (p == i) continue;
          auto g = rest;
          g.insert(g.begin() + long(p), seg.begin(), seg.end());
          if (auto c = attempt(std::move(g))) return c;
        }
      }
    }
    const auto outside = unused(f);
    // insert an unvisited node
    for (int u : outside) {
      for (std::size_t p = 0; p <= n; ++p) {
        auto g = f;
        g.insert(g.begin() + long(p), u);
        if (auto c = attempt(std::move(g))) return c;
      }
    }
    if (has_prizes(kind)) {
      for (std::size_t i = 0; i < n; ++i) {
        auto g = f;
        g.erase(g.begin() + long(i));
        if (auto c = attempt(std::move(g))) return c;
      }
    }
    // swap a visited node for a left-out one; for must-visit kinds this only
    // matters when some node is already left out
    for (std::size_t i = 0; i < n; ++i) {
      if (f[i] == kDepot) continue;
      for (int u : outside) {
        auto g = f;
        g[i] = u;
        if (auto c = attempt(std::move(g))) return c;
      }
    }
    if (has_capacity(kind)) {
      for (std::size_t i = 0; i < n; ++i) {
        if (f[i] != kDepot) continue;
        auto g = f;
        g.erase(g.begin() + long(i));
        if (auto c = attempt(std::move(g))) return c;
      }
      for (std::size_t p = 0; p <= n; ++p) {
        const int before = p == 0 ? fixed_.back() : f[p - 1];
        const int after = p == n ? kDepot : f[p];
        if (before == kDepot || after == kDepot) continue;
        auto g = f;
        g.insert(g.begin() + long(p), kDepot);
        if (auto c = attempt(std::move(g))) return c;
      }
    }
    return std::nullopt;
  }

  const Evaluator& ev_;
  std::vector<int> fixed_;
  const SolverConfig& config_;
  const Deadline& deadline_;
};

/// Greedy completion from the prefix tip.
inline std::vector<int> greedy_free_part(const VrpInstance& inst, std::span<const int> fixed, bool by_deadline) {
  const auto kind = inst.kind;
  const auto replay = evaluate_route(inst, fixed);
  GlobalState state = replay.final_state();
  std::vector<char> used(inst.size(), 0);
  for (int v : fixed) used[std::size_t(v)] = 1;
  std::vector<int> free;
  int cur = fixed.back();
  const double min_prize = inst.min_total_prize.value_or(0.0);

  for (;;) {
    int pick = -1;
    double best_key = std::numeric_limits<double>::infinity();
    bool need_reload = false;
    for (std::size_t j = 1; j < inst.size(); ++j) {
      if (used[j]) continue;
      const int v = int(j);
      const auto step = step_state(inst, state, cur, v);
      if (step.late) continue;
      if (step.over_capacity) {
        need_reload = true;
        continue;
      }
      double key;
      if (has_prizes(kind)) {
        if (state.accumulated_prize.value_or(0.0) >= min_prize) continue;
        const double marginal = inst.distance(cur, v) + inst.distance(v, kDepot) - inst.distance(cur, kDepot);
        key = -(inst.prize(v) - marginal);
      } else if (by_deadline) {
        key = inst.window(v).latest;
      } else {
        key = inst.distance(cur, v);
      }
      if (key < best_key) {  // strict: ties keep the lowest index
        best_key = key;
        pick = v;
      }
    }
    if (pick < 0) {
      if (has_capacity(kind) && need_reload && cur != kDepot) {
        state = step_state(inst, state, cur, kDepot).state;
        free.push_back(kDepot);
        cur = kDepot;
        continue;
      }
      break;
    }
    state = step_state(inst, state, cur, pick).state;
    used[std::size_t(pick)] = 1;
    free.push_back(pick);
    cur = pick;
  }
  return free;
}

}  // namespace detail

/// Greedy nearest-feasible-neighbor completion of the prefix. Nodes that
/// cannot be reached feasibly are left out (see unvisited_nodes()).
inline Route construct_initial(const VrpInstance& instance, ProblemKind kind, const FixedPrefix& prefix,
                               std::uint64_t /*rng_seed*/ = 0) {
  const VrpInstance work = kind == instance.kind ? instance : restrict_to_kind(instance, kind);
  const auto fixed = detail::check_prefix(work, prefix, PrefixPolicy::flag);
  const auto free = detail::greedy_free_part(work, fixed, false);
  return evaluate_route(work, detail::materialize(fixed, free));
}

/// 2-opt, or-opt (segments of 1..3), node insertion and, for prize kinds,
/// removal and swap; for CVRP, depot insertion and removal. Only positions
/// after the prefix move. Never returns a worse route than its input.
inline Route local_search(const VrpInstance& instance, ProblemKind kind, const Route& route,
                          const FixedPrefix& prefix, const SolverConfig& config) {
  const VrpInstance work = kind == instance.kind ? instance : restrict_to_kind(instance, kind);
  const auto fixed = detail::check_prefix(work, prefix, PrefixPolicy::flag);
  for (std::size_t k = 0; k < fixed.size(); ++k)
    if (k >= route.order.size() || route.order[k] != fixed[k])
      throw Error("prefix_mismatch", "route does not start with the fixed prefix");
  std::vector<int> free(route.order.begin() + long(fixed.size()), route.order.end());
  if (!free.empty() && free.back() == kDepot) free.pop_back();

  detail::Evaluator ev(work);
  detail::Deadline deadline(config.time_limit_seconds);
  detail::LocalSearch ls(ev, fixed, config, deadline);
  auto start = ls.make(free);
  // An input that is not in canonical closed form (e.g. missing the closing
  // depot) is scored as given; only return a different route if it improves.
  const auto given = ev.score(route.order, fixed.size() - 1);
  auto result = ls.descend(start);
  if (detail::compare_scores(result.score, given) > 0) return evaluate_route(work, route.order);
  return evaluate_route(work, result.order);
}

inline Route solve_exact(const VrpInstance& instance, ProblemKind kind, const FixedPrefix& prefix,
                         int max_free_nodes = 12, PrefixPolicy policy = PrefixPolicy::reject) {
  const VrpInstance work = kind == instance.kind ? instance : restrict_to_kind(instance, kind);
  auto fixed = detail::check_prefix(work, prefix, policy);
  const std::size_t free_nodes = work.size() - 1 - (fixed.size() - 1 - std::size_t(std::count(fixed.begin() + 1, fixed.end(), kDepot)));
  if (free_nodes > std::size_t(max_free_nodes))
    throw Error("instance_too_large", std::to_string(free_nodes) + " free nodes exceed the exact engine limit of " +
                                          std::to_string(max_free_nodes));
  detail::Evaluator ev(work);
  detail::ExactSearch search(ev, std::move(fixed));
  return evaluate_route(work, search.run());
}

namespace detail {

inline std::vector<int> perturb(std::vector<int> free, const std::vector<int>& outside, ProblemKind kind,
                                std::mt19937_64& rng) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const std::size_t n = free.size();
  enum Move { bridge, reverse, insert, drop, swap_in };
  std::vector<Move> moves{bridge, reverse};
  // with hard windows some nodes may be left out; inserting or swapping one in
  // (the descent can often repair the violation) lets the search trade which
  // nodes are skipped
  if (!outside.empty()) moves.insert(moves.end(), {insert, swap_in});
  if (has_prizes(kind)) moves.push_back(drop);
  const Move choice = moves[pick(moves.size())];
  if (choice == swap_in && n > 0) {
    const std::size_t i = pick(n);
    if (free[i] != kDepot) free[i] = outside[pick(outside.size())];
  } else if (choice == insert) {
    const std::size_t p = n == 0 ? 0 : pick(n + 1);
    free.insert(free.begin() + long(p), outside[pick(outside.size())]);
  } else if (choice == drop && n > 0) {
    free.erase(free.begin() + long(pick(n)));
  } else if (choice == bridge && n >= 4) {
    // double bridge: A B C D -> A C B D
    std::vector<std::size_t> cuts{pick(n - 2) + 1, pick(n - 2) + 1, pick(n - 2) + 1};
    std::sort(cuts.begin(), cuts.end());
    if (cuts[0] < cuts[1] && cuts[1] < cuts[2]) {
      std::vector<int> g(free.begin(), free.begin() + long(cuts[0]));
      g.insert(g.end(), free.begin() + long(cuts[1]), free.begin() + long(cuts[2]));
      g.insert(g.end(), free.begin() + long(cuts[0]), free.begin() + long(cuts[1]));
      g.insert(g.end(), free.begin() + long(cuts[2]), free.end());
      free = std::move(g);
    } else {
      std::shuffle(free.begin(), free.end(), rng);
    }
  } else if (n >= 2) {
    std::size_t i = pick(n), j = pick(n);
    if (i > j) std::swap(i, j);
    if (i == j) j = std::min(n - 1, i + 1), i = j - 1;
    std::reverse(free.begin() + long(i), free.begin() + long(j) + 1);
  }
  // no two consecutive depots (CVRP)
  std::vector<int> cleaned;
  for (int v : free)
    if (!(v == kDepot && !cleaned.empty() && cleaned.back() == kDepot)) cleaned.push_back(v);
  if (!cleaned.empty() && cleaned.front() == kDepot) cleaned.erase(cleaned.begin());
  if (!cleaned.empty() && cleaned.back() == kDepot) cleaned.pop_back();
  return cleaned;
}

inline Route solve_heuristic(const VrpInstance& work, std::vector<int> fixed, const SolverConfig& config) {
  Evaluator ev(work);
  Deadline deadline(config.time_limit_seconds);
  LocalSearch ls(ev, fixed, config, deadline);
  std::mt19937_64 rng(config.rng_seed);

  auto best = ls.descend(ls.make(greedy_free_part(work, fixed, false)));
  if (has_time_windows(work.kind)) {
    auto alt = ls.descend(ls.make(greedy_free_part(work, fixed, true)));
    if (LocalSearch::improves(alt, best)) best = std::move(alt);
  }
  for (int round = 0; round < config.perturbation_rounds && !deadline.expired(); ++round) {
    auto trial = ls.descend(ls.make(perturb(best.free, ls.unused(best.free), work.kind, rng)));
    if (LocalSearch::improves(trial, best)) best = std::move(trial);
  }
  return evaluate_route(work, best.order);
}

}  // namespace detail

/// Solve `kind` on `instance` (restricted to the fields `kind` uses) with the
/// route forced to begin with `prefix`.
inline Route solve(const VrpInstance& instance, ProblemKind kind, const FixedPrefix& prefix,
                   const SolverConfig& config = {}) {
  if (config.engine == Engine::exact)
    return solve_exact(instance, kind, prefix, config.exact_max_nodes, config.prefix_policy);
  const VrpInstance work = kind == instance.kind ? instance : restrict_to_kind(instance, kind);
  auto fixed = detail::check_prefix(work, prefix, config.prefix_policy);
  return detail::solve_heuristic(work, std::move(fixed), config);
}

inline RouteScore score_route(const VrpInstance& instance, const Route& route, std::size_t fixed_edges = 0) {
  detail::Evaluator ev(instance);
  return ev.score(route.order, fixed_edges);
}

/// Parse "0-3,3-7" into a prefix.
inline FixedPrefix parse_prefix(std::string_view text) {
  FixedPrefix p;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) throw Error("invalid_prefix", "expected 'a-b' in '" + std::string(item) + "'");
    try {
      p.edges.push_back({std::stoi(std::string(item.substr(0, dash))), std::stoi(std::string(item.substr(dash + 1)))});
    } catch (const std::logic_error&) {
      throw Error("invalid_prefix", "non-numeric node in '" + std::string(item) + "'");
    }
    pos = comma + 1;
  }
  return p;
}

}  // namespace routex
