#pragma once

// Rule-based intention labels: an edge gets the class of the first simpler
// problem whose solution (under the same fixed prefix) takes the same edge,
// or the last class when none does.

#include <atomic>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "routex/solver.hpp"

namespace routex {

struct ComparisonPlan {
  ProblemKind primary_kind = ProblemKind::TSPTW;
  std::vector<ProblemKind> compared_kinds;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
};

inline ComparisonPlan builtin_plan(ProblemKind kind) {
  using K = ProblemKind;
  switch (kind) {
    case K::TSPTW: return {kind, {K::TSP}, {"route_length", "time_window"}};
    case K::PCTSP: return {kind, {K::TSP}, {"route_length", "prize_penalty"}};
    case K::PCTSPTW: return {kind, {K::TSP, K::TSPTW}, {"route_length", "time_window", "prize_penalty"}};
    case K::CVRP: return {kind, {K::TSP}, {"route_length", "capacity"}};
    case K::TSP: break;
  }
  throw Error("invalid_plan", "no comparison plan for " + std::string(to_string(kind)));
}

inline void to_json(json& j, const ComparisonPlan& p) {
  std::vector<std::string> compared;
  for (auto k : p.compared_kinds) compared.emplace_back(to_string(k));
  j = json{{"primary_kind", std::string(to_string(p.primary_kind))},
           {"compared_kinds", compared},
           {"class_names", p.class_names}};
}

/// Solver contract as used by the annotator: returns a route that starts with
/// the prefix.
using SolveFn = std::function<Route(const VrpInstance&, ProblemKind, const FixedPrefix&)>;

/// Default binding of the solver contract. The prefix is the actual route's,
/// which may already violate a simplified problem's constraints (e.g. an
/// interior depot when comparing a CVRP route against TSP), so prefixes are
/// flagged rather than rejected.
inline SolveFn make_solve_fn(SolverConfig config) {
  config.prefix_policy = PrefixPolicy::flag;
  return [config](const VrpInstance& inst, ProblemKind kind, const FixedPrefix& prefix) {
    return solve(inst, kind, prefix, config);
  };
}

struct Annotation {
  std::vector<int> labels;
  std::vector<std::string> warnings;
};

/// Labels for every edge of `route` (length T-1).
///
/// A compared problem's solution at step t is reused at step t+1 when it
/// already follows the actual route through step t: it is then a feasible
/// candidate for the more constrained problem and, for an exact solver, its
/// optimum.
inline Annotation annotate_route(const VrpInstance& instance, const Route& route, const ComparisonPlan& plan,
                                 const SolveFn& solver) {
  if (plan.compared_kinds.size() + 1 != plan.num_classes())
    throw Error("invalid_plan", "plan needs exactly one more class than compared kinds");
  const int fallback = int(plan.num_classes()) - 1;
  const std::size_t steps = route.num_edges();
  Annotation out;
  out.labels.assign(steps, fallback);

  std::vector<std::optional<Route>> cache(plan.compared_kinds.size());
  auto follows_actual = [&](const Route& r, std::size_t edges) {
    if (r.order.size() < edges + 1) return false;
    return std::equal(route.order.begin(), route.order.begin() + long(edges) + 1, r.order.begin());
  };

  for (std::size_t t = 0; t < steps; ++t) {  // t is 0-based; edges 0..t-1 fixed
    const auto prefix = FixedPrefix::from_order(route.order, t);
    const Edge actual = route.edge(t);
    for (std::size_t c = 0; c < plan.compared_kinds.size(); ++c) {
      auto& cached = cache[c];
      if (!cached || !follows_actual(*cached, t)) {
        try {
          cached = solver(instance, plan.compared_kinds[c], prefix);
        } catch (const std::exception& e) {
          cached.reset();
          out.warnings.push_back("step " + std::to_string(t + 1) + ": " + std::string(to_string(plan.compared_kinds[c])) +
                                 " solve failed: " + e.what());
          continue;
        }
      }
      if (cached->num_edges() > t && cached->edge(t) == actual) {
        out.labels[t] = int(c);
        break;
      }
    }
  }
  return out;
}

struct AnnotationInput {
  std::string sample_id;
  VrpInstance instance;
  Route route;
};

struct AnnotatedSample {
  std::string sample_id;
  std::vector<int> labels;
  std::vector<std::string> warnings;
  bool failed = false;
};

/// counts[t][c]: number of routes whose edge at step t+1 has class c.
using StepHistogram = std::vector<std::vector<long>>;

inline void add_to_histogram(StepHistogram& hist, const std::vector<int>& labels, std::size_t num_classes) {
  if (hist.size() < labels.size()) hist.resize(labels.size(), std::vector<long>(num_classes, 0));
  for (std::size_t t = 0; t < labels.size(); ++t) ++hist[t][std::size_t(labels[t])];
}

struct AnnotatedDataset {
  std::vector<AnnotatedSample> samples;
  StepHistogram step_counts;
  std::size_t failures = 0;
};

/// Annotates every sample; output order follows input order regardless of
/// the number of worker threads.
inline AnnotatedDataset annotate_dataset(const std::vector<AnnotationInput>& inputs, const ComparisonPlan& plan,
                                         const SolveFn& solver, unsigned threads = 1) {
  AnnotatedDataset out;
  out.samples.resize(inputs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      auto& s = out.samples[i];
      s.sample_id = inputs[i].sample_id;
      try {
        auto a = annotate_route(inputs[i].instance, inputs[i].route, plan, solver);
        s.labels = std::move(a.labels);
        s.warnings = std::move(a.warnings);
      } catch (const std::exception& e) {
        s.failed = true;
        s.warnings.push_back(e.what());
      }
    }
  };
  threads = std::max(1u, threads);
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  for (const auto& s : out.samples) {
    if (s.failed) {
      ++out.failures;
      continue;
    }
    add_to_histogram(out.step_counts, s.labels, plan.num_classes());
  }
  return out;
}

}  // namespace routex
