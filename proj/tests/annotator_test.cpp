#include <gtest/gtest.h>

#include "routex/annotator.hpp"
#include "test_util.hpp"

using namespace routex;

namespace {

/// The annotator run with the brute-force enumerator instead of a solver.
std::vector<int> oracle_labels(const VrpInstance& inst, const Route& route, const ComparisonPlan& plan) {
  std::vector<int> labels;
  for (std::size_t t = 0; t < route.num_edges(); ++t) {
    const std::vector<int> prefix(route.order.begin(), route.order.begin() + long(t) + 1);
    int label = int(plan.num_classes()) - 1;
    for (std::size_t c = 0; c < plan.compared_kinds.size(); ++c) {
      const auto best = testutil::brute_force(restrict_to_kind(inst, plan.compared_kinds[c]), prefix);
      if (best.size() > t + 1 && best[t + 1] == route.order[t + 1]) {
        label = int(c);
        break;
      }
    }
    labels.push_back(label);
  }
  return labels;
}

VrpInstance detour_instance() {
  // Exhaustive enumeration: the TSPTW optimum is 0-1-4-3-2-0 and only its
  // second edge differs from what the unconstrained tour would take.
  VrpInstance inst;
  inst.kind = ProblemKind::TSPTW;
  const std::array<std::array<double, 2>, 5> coords{{{0, 0}, {0.5, 0.5}, {0.8, 0.1}, {0.5, 1.5}, {1.0, 1.0}}};
  for (auto c : coords) {
    Node n;
    n.coords = c;
    n.time_window = TimeWindow{0, 100};
    inst.nodes.push_back(n);
  }
  inst.nodes[0].time_window = TimeWindow{0, 1e9};
  inst.nodes[4].time_window = TimeWindow{0, 1.5};
  return inst;
}

const SolveFn kExact = [](const VrpInstance& inst, ProblemKind kind, const FixedPrefix& prefix) {
  return solve_exact(inst, kind, prefix, 12, PrefixPolicy::flag);
};

}  // namespace

TEST(Annotator, BuiltinPlans) {
  EXPECT_EQ(builtin_plan(ProblemKind::TSPTW).class_names, (std::vector<std::string>{"route_length", "time_window"}));
  const auto p = builtin_plan(ProblemKind::PCTSPTW);
  EXPECT_EQ(p.compared_kinds, (std::vector<ProblemKind>{ProblemKind::TSP, ProblemKind::TSPTW}));
  EXPECT_EQ(p.num_classes(), 3u);
  EXPECT_EQ(builtin_plan(ProblemKind::CVRP).class_names[1], "capacity");
  EXPECT_THROW(builtin_plan(ProblemKind::TSP), Error);
}

TEST(Annotator, DetourAtStepTwoIsTimeWindow) {
  const auto inst = detour_instance();
  const auto route = solve_exact(inst, ProblemKind::TSPTW, {});
  ASSERT_EQ(route.order, (std::vector<int>{0, 1, 4, 3, 2, 0}));
  const auto ann = annotate_route(inst, route, builtin_plan(ProblemKind::TSPTW), kExact);
  EXPECT_EQ(ann.labels, (std::vector<int>{0, 1, 0, 0, 0}));
  EXPECT_EQ(ann.labels, oracle_labels(inst, route, builtin_plan(ProblemKind::TSPTW)));
}

TEST(Annotator, WideWindowsGiveAllRouteLength) {
  auto inst = detour_instance();
  inst.nodes[4].time_window = TimeWindow{0, 100};
  const auto route = solve_exact(inst, ProblemKind::TSPTW, {});
  const auto ann = annotate_route(inst, route, builtin_plan(ProblemKind::TSPTW), kExact);
  EXPECT_EQ(ann.labels, std::vector<int>(route.num_edges(), 0));
}

TEST(Annotator, ExactAnnotationMatchesOracle) {
  for (auto kind : {ProblemKind::TSPTW, ProblemKind::PCTSP, ProblemKind::PCTSPTW, ProblemKind::CVRP}) {
    const auto plan = builtin_plan(kind);
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      const auto inst = testutil::random_instance(kind, 6, 500 + seed);
      const auto route = solve_exact(inst, kind, {}, 12, PrefixPolicy::flag);
      const auto ann = annotate_route(inst, route, plan, kExact);
      EXPECT_EQ(ann.labels, oracle_labels(inst, route, plan)) << to_string(kind) << " seed " << seed;
      EXPECT_TRUE(ann.warnings.empty());
      for (int l : ann.labels) {
        EXPECT_GE(l, 0);
        EXPECT_LT(l, int(plan.num_classes()));
      }
    }
  }
}

TEST(Annotator, SelfComparisonLabelsEverythingZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = testutil::random_instance(ProblemKind::TSPTW, 8, seed);
    const ComparisonPlan self{ProblemKind::TSPTW, {ProblemKind::TSPTW}, {"same", "other"}};
    const auto route = solve(inst, ProblemKind::TSPTW, {}, {.prefix_policy = PrefixPolicy::flag});
    const auto ann = annotate_route(inst, route, self, make_solve_fn({}));
    EXPECT_EQ(ann.labels, std::vector<int>(route.num_edges(), 0));
  }
}

TEST(Annotator, SolverFailureFallsThroughToLastClass) {
  const auto inst = detour_instance();
  const auto route = solve_exact(inst, ProblemKind::TSPTW, {});
  const SolveFn broken = [](const VrpInstance&, ProblemKind, const FixedPrefix&) -> Route {
    throw Error("solver_failed", "no");
  };
  const auto ann = annotate_route(inst, route, builtin_plan(ProblemKind::TSPTW), broken);
  EXPECT_EQ(ann.labels, std::vector<int>(route.num_edges(), 1));
  EXPECT_EQ(ann.warnings.size(), route.num_edges());
}

TEST(Annotator, DatasetHistogramCountsRoutesPerStep) {
  std::vector<AnnotationInput> inputs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = testutil::random_instance(ProblemKind::CVRP, 7, seed);
    auto route = solve(inst, ProblemKind::CVRP, {});
    inputs.push_back({std::to_string(seed), std::move(inst), std::move(route)});
  }
  const auto plan = builtin_plan(ProblemKind::CVRP);
  const auto one = annotate_dataset(inputs, plan, make_solve_fn({}), 1);
  const auto three = annotate_dataset(inputs, plan, make_solve_fn({}), 3);
  ASSERT_EQ(one.samples.size(), inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(one.samples[i].labels, three.samples[i].labels);
  for (std::size_t t = 0; t < one.step_counts.size(); ++t) {
    long reaching = 0;
    for (const auto& in : inputs) reaching += in.route.num_edges() > t;
    long sum = 0;
    for (long c : one.step_counts[t]) sum += c;
    EXPECT_EQ(sum, reaching) << "step " << t;
  }
  EXPECT_TRUE(annotate_dataset({}, plan, make_solve_fn({})).samples.empty());
}
