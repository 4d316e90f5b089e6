#include <gtest/gtest.h>

#include <filesystem>

#include "routex/datagen.hpp"

using namespace routex;

namespace {

GenConfig small(ProblemKind kind, int n, int samples) {
  GenConfig cfg;
  cfg.kind = kind;
  cfg.n_nodes = n;
  cfg.n_samples = samples;
  cfg.solver.perturbation_rounds = 5;
  cfg.annotation_solver.perturbation_rounds = 5;
  return cfg;
}

}  // namespace

TEST(Datagen, TsptwWindowsContainGeneratingTour) {
  GenConfig cfg = small(ProblemKind::TSPTW, 20, 0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto inst = gen_tsptw_instance(cfg, rng);
    EXPECT_NO_THROW(inst.validate());
    EXPECT_EQ(inst.window(0).earliest, 0.0);
    EXPECT_EQ(inst.window(0).latest, kDepotHorizon);
    for (std::size_t i = 1; i < inst.size(); ++i) {
      const auto tw = inst.window(int(i));
      EXPECT_LE(tw.latest - tw.earliest, cfg.time_scale() + 1e-12);
      EXPECT_GE(tw.earliest, 0.0);
    }
  }
}

TEST(Datagen, GeneratingTourMeetsEveryWindow) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    VrpInstance inst;
    inst.kind = ProblemKind::TSPTW;
    detail::sample_coords(inst, 15, rng);
    auto tour = detail::sample_windows(inst, 10.0, rng);
    tour.insert(tour.begin(), kDepot);
    tour.push_back(kDepot);
    EXPECT_TRUE(is_feasible(inst, evaluate_route(inst, tour)).feasible);
  }
}

TEST(Datagen, PrizeAndPenaltySupports) {
  for (auto kind : {ProblemKind::PCTSP, ProblemKind::PCTSPTW}) {
    for (int n : {20, 50}) {
      GenConfig cfg = small(kind, n, 0);
      std::mt19937_64 rng(7);
      const auto inst = gen_instance(cfg, rng);
      const double K = n <= 20 ? 2.0 : 3.0;
      double total = 0;
      for (std::size_t i = 1; i < inst.size(); ++i) {
        EXPECT_GE(inst.prize(int(i)), 0.0);
        EXPECT_LE(inst.prize(int(i)), 4.0 / n);
        EXPECT_GE(inst.penalty(int(i)), 0.0);
        EXPECT_LE(inst.penalty(int(i)), 3.0 * K / n);
        total += inst.prize(int(i));
      }
      EXPECT_GE(total, 1.0);
      EXPECT_EQ(*inst.min_total_prize, 1.0);
      if (has_time_windows(kind)) EXPECT_TRUE(inst.nodes[1].time_window);
    }
  }
  EXPECT_EQ(small(ProblemKind::PCTSPTW, 50, 0).time_scale(), 50.0);
  EXPECT_EQ(small(ProblemKind::PCTSPTW, 20, 0).time_scale(), 10.0);
}

TEST(Datagen, CvrpDemandsAndCapacity) {
  std::mt19937_64 rng(3);
  const auto inst = gen_cvrp_instance(small(ProblemKind::CVRP, 20, 0), rng);
  EXPECT_EQ(*inst.capacity, 20);
  EXPECT_EQ(inst.demand(0), 0);
  int total = 0;
  for (std::size_t i = 1; i < inst.size(); ++i) {
    EXPECT_GE(inst.demand(int(i)), 1);
    EXPECT_LE(inst.demand(int(i)), 9);
    total += inst.demand(int(i));
  }
  EXPECT_GT(total, 20);
  std::mt19937_64 rng50(3);
  EXPECT_EQ(*gen_cvrp_instance(small(ProblemKind::CVRP, 50, 0), rng50).capacity, 40);
}

TEST(Datagen, SameSeedSameInstance) {
  std::mt19937_64 a(1234), b(1234);
  const auto cfg = small(ProblemKind::PCTSPTW, 20, 0);
  EXPECT_EQ(gen_instance(cfg, a), gen_instance(cfg, b));
}

TEST(Datagen, ActualDatasetIsFeasibleLabeledAndThreadIndependent) {
  for (auto kind : {ProblemKind::TSPTW, ProblemKind::PCTSP, ProblemKind::PCTSPTW, ProblemKind::CVRP}) {
    auto cfg = small(kind, 8, 12);
    const auto ds = gen_actual_route_dataset(cfg);
    ASSERT_EQ(ds.samples.size(), 12u);
    for (const auto& s : ds.samples) {
      EXPECT_TRUE(is_feasible(s.instance, s.route).feasible);
      EXPECT_EQ(s.labels.size(), s.route.num_edges());
    }
    cfg.threads = 3;
    const auto again = gen_actual_route_dataset(cfg);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      EXPECT_EQ(json(ds.samples[i]).dump(), json(again.samples[i]).dump());
    }
  }
}

TEST(Datagen, TsptwEarlyStepsLeanOnTimeWindows) {
  auto cfg = small(ProblemKind::TSPTW, 10, 150);
  cfg.solver.engine = Engine::exact;
  cfg.annotation_solver.engine = Engine::exact;
  const auto ds = gen_actual_route_dataset(cfg);
  auto share = [&](std::size_t t) {
    const auto& c = ds.step_counts[t];
    return double(c[1]) / double(c[0] + c[1]);
  };
  const std::size_t last = ds.step_counts.size() - 1;
  EXPECT_GT(share(0) + share(1), share(last - 1) + share(last));
}

TEST(Datagen, CfDatasetHonorsContract) {
  for (auto kind : {ProblemKind::TSPTW, ProblemKind::PCTSP, ProblemKind::CVRP}) {
    const auto cfg = small(kind, 8, 15);
    const auto actual = gen_actual_route_dataset(cfg);
    const auto cf = gen_cf_route_dataset(actual.samples, cfg);
    EXPECT_EQ(cf.samples.size() + cf.skipped, actual.samples.size());
    for (const auto& s : cf.samples) {
      const std::size_t t = std::size_t(*s.t_ex);
      ASSERT_GE(t, 1u);
      for (std::size_t k = 0; k + 1 < t; ++k) EXPECT_EQ(s.route.edge(k), (Edge{(*s.actual_order)[k], (*s.actual_order)[k + 1]}));
      EXPECT_EQ(s.route.edge(t - 1), *s.cf_edge);
      EXPECT_NE(s.cf_edge->head, (*s.actual_order)[t]);
      EXPECT_EQ(s.labels.size(), s.route.num_edges());
    }
  }
}

TEST(Datagen, SplitAndWrite) {
  const auto ds = gen_actual_route_dataset(small(ProblemKind::CVRP, 6, 20));
  const auto parts = split_dataset(ds.samples, {0.9, 0.05, 0.05});
  EXPECT_EQ(parts[0].size(), 18u);
  EXPECT_EQ(parts[1].size(), 1u);
  EXPECT_EQ(parts[2].size(), 1u);
  const auto dir = std::filesystem::temp_directory_path() / "routex_datagen_test";
  std::filesystem::remove_all(dir);
  write_dataset(dir, ds, {0.9, 0.05, 0.05});
  const auto back = read_samples(dir / "train.jsonl");
  ASSERT_EQ(back.size(), 18u);
  EXPECT_EQ(json(back[3]).dump(), json(ds.samples[3]).dump());
  const auto stats = json::parse(std::ifstream(dir / "stats.json"));
  EXPECT_EQ(stats["splits"]["test"], 1);
  std::filesystem::remove_all(dir);
}
