#pragma once

// Synthetic instances, solved routes and labels for TSPTW, PCTSP, PCTSPTW and
// CVRP, plus counterfactual-route datasets derived from them.

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "routex/annotator.hpp"

namespace routex {

struct GenConfig {
  ProblemKind kind = ProblemKind::TSPTW;
  int n_nodes = 20;  // depot included
  int n_samples = 1000;
  std::optional<double> t_max;  // default: 10, or 50 for PCTSPTW with N >= 50
  std::optional<double> K;      // default: 2 for N <= 20, else 3
  std::uint64_t rng_seed = 1234;
  SolverConfig solver;             // route generation
  SolverConfig annotation_solver;  // labels: simplified-kind comparisons
  std::array<double, 3> split{0.9, 0.05, 0.05};
  unsigned threads = 1;
  int max_attempts = 100;  // per sample, before giving up

  double time_scale() const {
    if (t_max) return *t_max;
    return kind == ProblemKind::PCTSPTW && n_nodes >= 50 ? 50.0 : 10.0;
  }
  double penalty_scale() const { return K.value_or(n_nodes <= 20 ? 2.0 : 3.0); }
  int capacity() const { return n_nodes <= 20 ? 20 : 40; }
};

namespace detail {

inline void sample_coords(VrpInstance& inst, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  inst.nodes.assign(std::size_t(n), Node{});
  for (auto& node : inst.nodes) {
    node.coords[0] = u(rng);
    node.coords[1] = u(rng);
  }
}

/// Windows around the arrival times of a uniformly random tour; returns
/// that tour.
inline std::vector<int> sample_windows(VrpInstance& inst, double t_max, std::mt19937_64& rng) {
  const int n = int(inst.size());
  std::vector<int> tour(std::size_t(n - 1));
  std::iota(tour.begin(), tour.end(), 1);
  std::shuffle(tour.begin(), tour.end(), rng);
  inst.nodes[kDepot].time_window = TimeWindow{0.0, kDepotHorizon};
  double arrival = 0.0;
  int prev = kDepot;
  for (int v : tour) {
    arrival += inst.distance(prev, v);
    std::uniform_real_distribution<double> early(arrival - t_max / 2, arrival);
    std::uniform_real_distribution<double> late(arrival, arrival + t_max / 2);
    const double e = early(rng);
    const double l = late(rng);
    inst.nodes[std::size_t(v)].time_window = TimeWindow{std::max(0.0, e), l};
    prev = v;
  }
  return tour;
}

inline void sample_prizes(VrpInstance& inst, double K, std::mt19937_64& rng) {
  const double n = double(inst.size());
  std::uniform_real_distribution<double> prize(0.0, 4.0 / n);
  std::uniform_real_distribution<double> penalty(0.0, 3.0 * K / n);
  for (;;) {
    double total = 0.0;
    for (std::size_t i = 1; i < inst.size(); ++i) {
      inst.nodes[i].prize = prize(rng);
      inst.nodes[i].penalty = penalty(rng);
      total += *inst.nodes[i].prize;
    }
    if (total >= 1.0) break;
  }
  inst.min_total_prize = 1.0;
}

}  // namespace detail

inline VrpInstance gen_tsptw_instance(const GenConfig& cfg, std::mt19937_64& rng) {
  VrpInstance inst;
  inst.kind = ProblemKind::TSPTW;
  detail::sample_coords(inst, cfg.n_nodes, rng);
  detail::sample_windows(inst, cfg.time_scale(), rng);
  return inst;
}

inline VrpInstance gen_pctsp_instance(const GenConfig& cfg, std::mt19937_64& rng) {
  VrpInstance inst;
  inst.kind = ProblemKind::PCTSP;
  detail::sample_coords(inst, cfg.n_nodes, rng);
  detail::sample_prizes(inst, cfg.penalty_scale(), rng);
  return inst;
}

inline VrpInstance gen_pctsptw_instance(const GenConfig& cfg, std::mt19937_64& rng) {
  VrpInstance inst;
  inst.kind = ProblemKind::PCTSPTW;
  detail::sample_coords(inst, cfg.n_nodes, rng);
  detail::sample_prizes(inst, cfg.penalty_scale(), rng);
  detail::sample_windows(inst, cfg.time_scale(), rng);
  return inst;
}

inline VrpInstance gen_cvrp_instance(const GenConfig& cfg, std::mt19937_64& rng) {
  VrpInstance inst;
  inst.kind = ProblemKind::CVRP;
  detail::sample_coords(inst, cfg.n_nodes, rng);
  std::uniform_int_distribution<int> demand(1, 9);
  inst.nodes[kDepot].demand = 0;
  for (std::size_t i = 1; i < inst.size(); ++i) inst.nodes[i].demand = demand(rng);
  inst.capacity = cfg.capacity();
  return inst;
}

inline VrpInstance gen_instance(const GenConfig& cfg, std::mt19937_64& rng) {
  if (cfg.n_nodes < 2) throw Error("invalid_config", "n_nodes must be at least 2");
  switch (cfg.kind) {
    case ProblemKind::TSPTW: return gen_tsptw_instance(cfg, rng);
    case ProblemKind::PCTSP: return gen_pctsp_instance(cfg, rng);
    case ProblemKind::PCTSPTW: return gen_pctsptw_instance(cfg, rng);
    case ProblemKind::CVRP: return gen_cvrp_instance(cfg, rng);
    case ProblemKind::TSP: {
      VrpInstance inst;
      detail::sample_coords(inst, cfg.n_nodes, rng);
      return inst;
    }
  }
  return {};
}

struct Sample {
  std::string sample_id;
  VrpInstance instance;
  Route route;
  std::vector<int> labels;
  // Counterfactual samples only.
  std::optional<std::vector<int>> actual_order;
  std::optional<int> t_ex;  // 1-based step of the changed edge
  std::optional<Edge> cf_edge;
};

inline void to_json(json& j, const Sample& s) {
  j = json{{"sample_id", s.sample_id}, {"instance", s.instance}, {"route", s.route}, {"labels", s.labels}};
  if (s.actual_order) j["actual_order"] = *s.actual_order;
  if (s.t_ex) j["t_ex"] = *s.t_ex;
  if (s.cf_edge) j["cf_edge"] = *s.cf_edge;
}

inline Sample parse_sample(const json& j) {
  Sample s;
  s.sample_id = j.contains("sample_id") ? j.at("sample_id").get<std::string>() : std::string();
  s.instance = parse_instance(j.at("instance"));
  s.route = parse_route(j.at("route"), s.instance);
  if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<int>>();
  s.actual_order = detail::optional_field<std::vector<int>>(j, "actual_order");
  s.t_ex = detail::optional_field<int>(j, "t_ex");
  s.cf_edge = detail::optional_field<Edge>(j, "cf_edge");
  return s;
}

inline void from_json(const json& j, Sample& s) { s = parse_sample(j); }

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error("invalid_jsonl", path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Sample> read_samples(const std::filesystem::path& path) {
  std::vector<Sample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(parse_sample(j));
  return out;
}

inline void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  for (const auto& s : samples) out << json(s).dump() << '\n';
}

struct Dataset {
  std::vector<Sample> samples;
  ComparisonPlan plan;
  StepHistogram step_counts;
  std::size_t skipped = 0;

  json stats() const {
    return json{{"samples", samples.size()},
                {"skipped", skipped},
                {"plan", plan},
                {"step_class_counts", step_counts}};
  }
};

/// Heads reachable from the tail of step `t` (1-based) without an immediate
/// violation, excluding the actual head. Candidates are nodes not yet visited
/// before the step, plus the depot where returning is meaningful (CVRP
/// mid-route, prize kinds once the minimum prize is collected).
inline std::vector<int> feasible_alternatives(const VrpInstance& instance, const Route& route, int t) {
  if (t < 1 || std::size_t(t) > route.num_edges()) return {};
  const std::size_t k = std::size_t(t) - 1;
  const int tail = route.order[k];
  const int actual_head = route.order[k + 1];
  std::vector<char> visited(instance.size(), 0);
  for (std::size_t i = 0; i <= k; ++i) visited[std::size_t(route.order[i])] = 1;
  const auto& state = route.states[k];
  std::vector<int> out;
  if (tail != kDepot && actual_head != kDepot) {
    const bool depot_ok =
        has_capacity(instance.kind) ||
        (has_prizes(instance.kind) && state.accumulated_prize.value_or(0) >= instance.min_total_prize.value_or(0));
    if (depot_ok) out.push_back(kDepot);
  }
  for (std::size_t j = 1; j < instance.size(); ++j) {
    const int v = int(j);
    if (visited[j] || v == actual_head) continue;
    const auto step = step_state(instance, state, tail, v);
    if (step.late || step.over_capacity) continue;
    out.push_back(v);
  }
  return out;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < std::max(1u, threads); ++k) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

inline std::string sample_name(const GenConfig& cfg, std::size_t i) {
  return std::string(to_string(cfg.kind)) + std::to_string(cfg.n_nodes) + "-" + std::to_string(cfg.rng_seed) + "-" +
         std::to_string(i);
}

}  // namespace detail

/// Sample i uses its own generator seeded with seed + i, so the output does
/// not depend on the thread count. Instances whose solved route is not
/// feasible (or whose annotation fails) are redrawn from the same generator.
inline Dataset gen_actual_route_dataset(const GenConfig& cfg) {
  Dataset ds;
  ds.plan = builtin_plan(cfg.kind);
  ds.samples.resize(std::size_t(std::max(0, cfg.n_samples)));
  std::vector<std::size_t> skips(ds.samples.size(), 0);
  std::vector<char> gave_up(ds.samples.size(), 0);
  SolverConfig route_cfg = cfg.solver;
  route_cfg.prefix_policy = PrefixPolicy::flag;
  const auto annotate_with = make_solve_fn(cfg.annotation_solver);

  detail::parallel_for(ds.samples.size(), cfg.threads, [&](std::size_t i) {
    std::mt19937_64 rng(cfg.rng_seed + i);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      auto inst = gen_instance(cfg, rng);
      Route route;
      try {
        route = solve(inst, cfg.kind, {}, route_cfg);
      } catch (const Error&) {
        ++skips[i];
        continue;
      }
      if (!is_feasible(inst, route).feasible) {
        ++skips[i];
        continue;
      }
      auto ann = annotate_route(inst, route, ds.plan, annotate_with);
      if (!ann.warnings.empty()) {
        ++skips[i];
        continue;
      }
      ds.samples[i] = Sample{detail::sample_name(cfg, i), std::move(inst), std::move(route), std::move(ann.labels),
                             std::nullopt, std::nullopt, std::nullopt};
      return;
    }
    gave_up[i] = 1;
  });
  for (std::size_t i = 0; i < gave_up.size(); ++i)
    if (gave_up[i])
      throw Error("generation_failed", "sample " + std::to_string(i) + ": no usable instance after " +
                                           std::to_string(cfg.max_attempts) + " attempts");

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    ds.skipped += skips[i];
    add_to_histogram(ds.step_counts, ds.samples[i].labels, ds.plan.num_classes());
  }
  return ds;
}

/// For each actual sample: a uniformly drawn step with at least one feasible
/// alternative, a uniformly drawn alternative head there, and the best route
/// that keeps the earlier edges and takes the alternative. Samples without
/// any alternative are skipped.
inline Dataset gen_cf_route_dataset(const std::vector<Sample>& actual, const GenConfig& cfg) {
  Dataset ds;
  ds.plan = builtin_plan(cfg.kind);
  std::vector<std::optional<Sample>> out(actual.size());
  SolverConfig route_cfg = cfg.solver;
  route_cfg.prefix_policy = PrefixPolicy::flag;
  const auto annotate_with = make_solve_fn(cfg.annotation_solver);

  detail::parallel_for(actual.size(), cfg.threads, [&](std::size_t i) {
    const auto& a = actual[i];
    std::mt19937_64 rng(cfg.rng_seed + i);
    std::vector<int> steps;
    for (int t = 1; t <= int(a.route.num_edges()); ++t)
      if (!feasible_alternatives(a.instance, a.route, t).empty()) steps.push_back(t);
    if (steps.empty()) return;
    const int t = steps[std::uniform_int_distribution<std::size_t>(0, steps.size() - 1)(rng)];
    const auto alts = feasible_alternatives(a.instance, a.route, t);
    const int head = alts[std::uniform_int_distribution<std::size_t>(0, alts.size() - 1)(rng)];
    auto prefix = FixedPrefix::from_order(a.route.order, std::size_t(t) - 1);
    const Edge cf{a.route.order[std::size_t(t) - 1], head};
    prefix.edges.push_back(cf);
    try {
      auto route = solve(a.instance, a.instance.kind, prefix, route_cfg);
      auto ann = annotate_route(a.instance, route, ds.plan, annotate_with);
      Sample s{a.sample_id + "-cf", a.instance, std::move(route), std::move(ann.labels), a.route.order, t, cf};
      out[i] = std::move(s);
    } catch (const Error&) {
    }
  });

  for (auto& s : out) {
    if (!s) {
      ++ds.skipped;
      continue;
    }
    add_to_histogram(ds.step_counts, s->labels, ds.plan.num_classes());
    ds.samples.push_back(std::move(*s));
  }
  return ds;
}

/// Contiguous train/val/test split by the configured fractions.
inline std::array<std::vector<Sample>, 3> split_dataset(std::vector<Sample> samples, std::array<double, 3> fractions) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (!(total > 0)) throw Error("invalid_config", "split fractions must sum to a positive value");
  const std::size_t n = samples.size();
  const std::size_t n_train = std::size_t(std::llround(double(n) * fractions[0] / total));
  const std::size_t n_val = std::min(n - n_train, std::size_t(std::llround(double(n) * fractions[1] / total)));
  std::array<std::vector<Sample>, 3> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int bucket = i < n_train ? 0 : i < n_train + n_val ? 1 : 2;
    out[std::size_t(bucket)].push_back(std::move(samples[i]));
  }
  return out;
}

/// train.jsonl, val.jsonl, test.jsonl and stats.json under `dir`.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds, std::array<double, 3> fractions,
                          json extra_stats = json::object()) {
  std::filesystem::create_directories(dir);
  auto parts = split_dataset(ds.samples, fractions);
  const char* names[] = {"train", "val", "test"};
  json stats = ds.stats();
  for (int k = 0; k < 3; ++k) {
    write_samples(dir / (std::string(names[k]) + ".jsonl"), parts[std::size_t(k)]);
    stats["splits"][names[k]] = parts[std::size_t(k)].size();
  }
  stats.update(extra_stats);
  std::ofstream(dir / "stats.json") << stats.dump(2) << '\n';
}

}  // namespace routex
