#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "routex/explainer.hpp"
#include "routex/kyoto.hpp"
#include "test_util.hpp"

using namespace routex;

namespace {

const char* kDemoQuestion = "Why do we visit Ginkaku-ji Temple after Fushimi-Inari Shrine, instead of Kiyomizu-dera?";

SolveFn exact_solver() {
  SolverConfig cfg;
  cfg.engine = Engine::exact;
  return make_solve_fn(cfg);
}

std::string read_file(const std::string& rel) {
  std::ifstream in(std::string(ROUTEX_SOURCE_DIR) + "/" + rel);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

struct KyotoFixture {
  VrpInstance inst = kyoto_instance();
  Route actual = solve(inst, inst.kind, {}, [] {
    SolverConfig c;
    c.engine = Engine::exact;
    return c;
  }());
};

/// Random valid question on a route, or nullopt if the route has none.
std::optional<WhyNotQuestion> random_question(const VrpInstance& inst, const Route& route, std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> options;
  for (std::size_t t = 1; t <= route.num_edges(); ++t)
    for (int v = 0; v < int(inst.size()); ++v)
      if (v != route.order[t] && cf_head_allowed(inst, route, int(t), v)) options.emplace_back(int(t), v);
  if (options.empty()) return std::nullopt;
  const auto [t, v] = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  return make_question(inst, route, t, v);
}

}  // namespace

TEST(Kyoto, DemoFileMatchesBuiltInInstance) {
  const auto doc = json::parse(read_file("demo/kyoto.json"));
  EXPECT_EQ(parse_instance(doc), kyoto_instance());
}

TEST(Kyoto, ExactRouteStartsAndEndsAtStation) {
  KyotoFixture k;
  // exhaustive search over all 8! orders with the same matrix
  EXPECT_EQ(k.actual.order, (std::vector<int>{0, 3, 2, 6, 5, 7, 1, 4, 8, 0}));
  EXPECT_NEAR(*k.actual.final_state().travel_time, 20.21, 1e-9);
  EXPECT_NEAR(k.actual.final_state().route_length, 2.4, 1e-9);
  EXPECT_TRUE(k.actual.violations.empty());
}

TEST(Kyoto, DemoQuestionReadsAsFushimiDeparture) {
  KyotoFixture k;
  const auto q = parse_question(k.inst, k.actual, json(kDemoQuestion));
  EXPECT_EQ(q.t_ex, 2);
  EXPECT_EQ(q.actual_edge, (Edge{3, 2}));
  EXPECT_EQ(q.cf_edge, (Edge{3, 4}));
}

TEST(Kyoto, DemoBundleValues) {
  KyotoFixture k;
  const auto q = parse_question(k.inst, k.actual, json(kDemoQuestion));
  const auto b = explain(k.inst, q, exact_solver(), annotator_intentions(k.inst.kind, exact_solver()));

  // best completion of 0-3-4 by enumeration: Ginkaku-ji no longer fits its window
  EXPECT_EQ(b.cf_route.order, (std::vector<int>{0, 3, 4, 6, 5, 7, 1, 8, 0}));
  EXPECT_EQ(b.cf_unvisited, std::vector<int>{2});
  EXPECT_EQ(b.e_fixed, (std::vector<Edge>{{0, 3}, {3, 4}}));

  for (const auto* r : {&b.rep_actual, &b.rep_cf}) {
    ASSERT_TRUE(r->class_ratio.has_value());
    EXPECT_GE(*r->class_ratio, 0.0);
    EXPECT_LE(*r->class_ratio, 1.0);
  }
  EXPECT_NEAR(b.rep_actual.short_term_objective, 10.01, 1e-9);
  EXPECT_NEAR(b.rep_cf.short_term_objective, 9.76, 1e-9);
  EXPECT_NEAR(b.rep_actual.long_term_objective, 20.21, 1e-9);
  EXPECT_NEAR(b.rep_cf.long_term_objective, 20.21, 1e-9);
  EXPECT_DOUBLE_EQ(b.rep_actual.feasibility_ratio, 1.0);
  EXPECT_DOUBLE_EQ(b.rep_cf.feasibility_ratio, 6.0 / 7.0);

  EXPECT_NEAR(b.comparison.at("short_term_objective"), -0.25, 1e-9);
  EXPECT_NEAR(b.comparison.at("long_term_objective"), 0.0, 1e-9);
  EXPECT_NEAR(b.comparison.at("feasibility_ratio"), 6.0 / 7.0 - 1.0, 1e-12);
  EXPECT_NEAR(b.comparison.at("total_length"), 1.97 - 2.4, 1e-9);
  EXPECT_TRUE(b.comparison.contains("class_ratio"));

  EXPECT_EQ(b.text_source, TextSource::template_text);
  EXPECT_NE(b.text.find("Ginkaku-ji Temple (November schedule)"), std::string::npos);
}

TEST(Question, ValidationRules) {
  KyotoFixture k;
  const auto& r = k.actual;
  auto code = [&](int t, int v) {
    try {
      make_question(k.inst, r, t, v);
      return std::string("ok");
    } catch (const Error& e) {
      return e.code();
    }
  };
  EXPECT_EQ(code(2, 4), "ok");
  EXPECT_EQ(code(2, 2), "question_mismatch");   // same as the actual edge
  EXPECT_EQ(code(0, 4), "question_mismatch");   // no step 0
  EXPECT_EQ(code(10, 4), "question_mismatch");  // past the last edge
  EXPECT_EQ(code(3, 3), "question_mismatch");   // already visited
  EXPECT_EQ(code(3, 0), "question_mismatch");   // depot mid-route for TSPTW
  EXPECT_EQ(code(2, 42), "question_mismatch");

  auto q = make_question(k.inst, r, 2, 4);
  q.cf_edge.tail = 0;
  EXPECT_THROW(validate_question(k.inst, q), Error);
}

TEST(Question, DepotAllowedWhereTheKindPermitsIt) {
  auto cvrp = testutil::random_instance(ProblemKind::CVRP, 6, 3);
  const auto route = evaluate_route(cvrp, std::vector<int>{0, 1, 2, 3, 4, 5, 0});
  EXPECT_NO_THROW(make_question(cvrp, route, 2, 0));
}

TEST(Question, StructuredBypass) {
  KyotoFixture k;
  const auto expected = make_question(k.inst, k.actual, 2, 4);
  EXPECT_EQ(parse_question(k.inst, k.actual, json{{"t_ex", 2}, {"cf_to", 4}}), expected);
  EXPECT_EQ(parse_question(k.inst, k.actual, json{{"t_ex", 2}, {"cf_to", "Kiyomizu-dera Temple"}}), expected);
  EXPECT_EQ(parse_question(k.inst, k.actual, json{{"t_ex", 2}, {"cf_to", "kiyomizu"}}), expected);
  try {
    parse_question(k.inst, k.actual, json{{"t_ex", 0}, {"cf_to", 4}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "question_mismatch");
    EXPECT_EQ(e.details().at("question").at("t_ex"), 0);
  }
}

TEST(Question, LlmReplies) {
  KyotoFixture k;
  json seen;
  auto reply_with = [&](std::string reply) -> ChatFn {
    return [&seen, reply](const json& req) {
      seen = req;
      return reply;
    };
  };
  auto q = parse_question(k.inst, k.actual, json(kDemoQuestion),
                          reply_with("```json\n{\"t_ex\": 2, \"cf_target_node\": 4}\n```"));
  EXPECT_EQ(q.cf_edge, (Edge{3, 4}));
  const auto system = seen.at("messages").at(0).at("content").get<std::string>();
  EXPECT_NE(system.find(kDemoQuestion), std::string::npos);
  EXPECT_NE(system.find("step 2: Fushimi-Inari Shrine (node 3) -> Ginkaku-ji Temple (node 2)"), std::string::npos);
  EXPECT_EQ(seen.at("temperature"), 0);

  try {
    parse_question(k.inst, k.actual, json(kDemoQuestion), reply_with("{\"t_ex\": 3, \"cf_target_node\": 3}"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "question_mismatch");
  }
  try {
    parse_question(k.inst, k.actual, json(kDemoQuestion), reply_with("I am not sure."));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "parse_failed");
    EXPECT_EQ(e.details().at("raw"), "I am not sure.");
  }
}

TEST(Question, KeywordReaderRejectsUnrelatedText) {
  KyotoFixture k;
  EXPECT_THROW(parse_question(k.inst, k.actual, json("why is the sky blue?")), Error);
}

TEST(CounterfactualRoute, FirstStepFixesOnlyTheCfEdge) {
  const auto inst = testutil::random_instance(ProblemKind::TSPTW, 6, 11);
  const auto route = solve(inst, inst.kind, {});
  const int cf = route.order[1] == 1 ? 2 : 1;
  const auto q = make_question(inst, route, 1, cf);
  EXPECT_EQ(cf_prefix(q).edges, (std::vector<Edge>{{0, cf}}));
  const auto r = generate_cf_route(inst, q, make_solve_fn({}));
  EXPECT_EQ(r.order[1], cf);
}

TEST(CounterfactualRoute, MatchesExhaustiveCompletion) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = testutil::random_instance(ProblemKind::TSPTW, 6, seed);
    const auto route = solve(inst, inst.kind, {}, [] {
      SolverConfig c;
      c.engine = Engine::exact;
      return c;
    }());
    std::mt19937_64 rng(seed);
    const auto q = random_question(inst, route, rng);
    ASSERT_TRUE(q);
    const auto cf = generate_cf_route(inst, *q, exact_solver());
    EXPECT_EQ(cf.order, testutil::brute_force(inst, cf_prefix(*q).nodes())) << "seed " << seed;
  }
}

TEST(CounterfactualRoute, PrefixAndCfEdgeAlwaysKept) {
  const auto solver = make_solve_fn({});
  std::mt19937_64 rng(5);
  int checked = 0;
  for (auto kind : {ProblemKind::TSPTW, ProblemKind::PCTSP, ProblemKind::PCTSPTW, ProblemKind::CVRP}) {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
      const auto inst = testutil::random_instance(kind, 8, seed + 100);
      const auto route = solver(inst, kind, {});
      const auto q = random_question(inst, route, rng);
      if (!q) continue;
      SCOPED_TRACE(std::string(to_string(kind)) + " seed " + std::to_string(seed) + " " + json(*q).dump());
      const auto cf = generate_cf_route(inst, *q, solver);
      for (int t = 0; t + 1 < q->t_ex; ++t) EXPECT_EQ(cf.order[std::size_t(t + 1)], route.order[std::size_t(t + 1)]);
      EXPECT_EQ(cf.edge(std::size_t(q->t_ex - 1)), q->cf_edge);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Influence, SlicesTheTrajectory) {
  KyotoFixture k;
  const std::vector<int> y(k.actual.num_edges(), 1);
  const int last = int(k.actual.num_edges());
  const auto end = influence(k.actual, y, last);
  EXPECT_EQ(end.states.size(), 1u);
  EXPECT_EQ(end.states[0], k.actual.final_state());
  EXPECT_TRUE(end.intentions.empty());

  const auto first = influence(k.actual, y, 1);
  EXPECT_EQ(first.states.size(), k.actual.states.size() - 1);
  EXPECT_EQ(first.intentions.size(), y.size() - 1);
  for (std::size_t i = 0; i < first.states.size(); ++i) EXPECT_EQ(first.states[i], k.actual.states[i + 1]);

  EXPECT_THROW(influence(k.actual, y, 0), Error);
  EXPECT_THROW(influence(k.actual, y, last + 1), Error);
  EXPECT_THROW(influence(k.actual, std::vector<int>(2, 0), 1), Error);
}

TEST(RepresentativeValues, Boundaries) {
  KyotoFixture k;
  const int last = int(k.actual.num_edges());
  const std::vector<int> zeros(k.actual.num_edges(), 0);
  for (int t = 1; t <= last; ++t) {
    const auto r = representative_values(k.inst, k.actual, zeros, t);
    EXPECT_DOUBLE_EQ(r.feasibility_ratio, 1.0);
    if (t < last) {
      EXPECT_DOUBLE_EQ(*r.class_ratio, 1.0);
    } else {
      EXPECT_FALSE(r.class_ratio.has_value());
    }
    EXPECT_DOUBLE_EQ(r.long_term_objective, 20.21);
  }
  std::vector<int> mixed(k.actual.num_edges(), 1);
  mixed[5] = 0;  // one of the seven edges after step 2
  EXPECT_DOUBLE_EQ(*representative_values(k.inst, k.actual, mixed, 2).class_ratio, 1.0 / 7.0);
}

TEST(RepresentativeValues, PrizeKindsCountNoRequiredNodes) {
  const auto inst = testutil::random_instance(ProblemKind::PCTSP, 7, 4);
  const auto route = evaluate_route(inst, std::vector<int>{0, 2, 0});
  const auto r = representative_values(inst, route, {1, 1}, 1);
  EXPECT_DOUBLE_EQ(r.feasibility_ratio, 1.0);
  EXPECT_DOUBLE_EQ(r.long_term_objective, objective(inst, route));
  EXPECT_DOUBLE_EQ(r.extras.at("total_prize"), inst.prize(2));
}

TEST(Compare, IdentityAntisymmetryAndMissingKeys) {
  RepresentativeValues a{1.0, 10.0, 0.5, 1.0, {{"total_length", 3.0}}};
  RepresentativeValues b{1.5, 12.0, std::nullopt, 0.75, {{"total_length", 2.0}, {"late_arrivals", 1.0}}};
  for (const auto& [key, v] : compare(a, a)) EXPECT_EQ(v, 0.0) << key;
  const auto ab = compare(a, b), ba = compare(b, a);
  EXPECT_DOUBLE_EQ(ab.at("long_term_objective"), 2.0);
  EXPECT_FALSE(ab.contains("class_ratio"));
  EXPECT_FALSE(ab.contains("late_arrivals"));
  ASSERT_EQ(ab.size(), ba.size());
  for (const auto& [key, v] : ab) EXPECT_DOUBLE_EQ(v, -ba.at(key)) << key;
}

TEST(Bundle, RoundTripAndDeterminism) {
  KyotoFixture k;
  const auto q = make_question(k.inst, k.actual, 4, 1);
  auto run = [&] {
    return explain(k.inst, q, make_solve_fn({}), annotator_intentions(k.inst.kind, make_solve_fn({})));
  };
  const auto b1 = run(), b2 = run();
  const auto j = json(b1);
  EXPECT_EQ(j.dump(), json(b2).dump());
  EXPECT_EQ(j.get<ExplanationBundle>(), b1);
  EXPECT_EQ(json::parse(j.dump()).get<ExplanationBundle>(), b1);
  for (const char* key : {"e_fixed", "cf_route", "actual_intentions", "cf_intentions", "actual_influence",
                          "cf_influence", "rep_actual", "rep_cf", "comparison", "text"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Bundle, CausalPrefixIdenticalUnderTheClassifier) {
  KyotoFixture k;
  auto cfg = ModelConfig::for_kind(ProblemKind::TSPTW, 2);
  cfg.hidden_dim = 16;
  cfg.n_heads = 4;
  Checkpoint ckpt{cfg, ModelParams<double>::random(cfg, 9), json::object()};
  const auto q = make_question(k.inst, k.actual, 5, 4);
  const auto b = explain(k.inst, q, make_solve_fn({}), classifier_intentions(ckpt));
  for (int t = 0; t + 1 < q.t_ex; ++t) EXPECT_EQ(b.actual_intentions[std::size_t(t)], b.cf_intentions[std::size_t(t)]);
}

TEST(Text, TemplateNamesEveryKeyOnce) {
  KyotoFixture k;
  for (int t = 1; t <= 8; ++t) {
    const auto& r = k.actual;
    for (int v = 1; v < int(k.inst.size()); ++v) {
      if (v == r.order[std::size_t(t)] || !cf_head_allowed(k.inst, r, t, v)) continue;
      const auto b = explain(k.inst, make_question(k.inst, r, t, v), make_solve_fn({}),
                             annotator_intentions(k.inst.kind, make_solve_fn({})));
      for (const auto& [key, _] : b.comparison) EXPECT_EQ(count_of(b.text, key), 1u) << key << " in\n" << b.text;
      EXPECT_EQ(render_template(k.inst, b), b.text);
    }
  }
}

TEST(Text, LlmRequestCarriesComparison) {
  KyotoFixture k;
  json seen;
  TextOptions opts;
  opts.user_question = kDemoQuestion;
  opts.chat = [&](const json& req) {
    seen = req;
    return std::string("Because of the opening hours.");
  };
  const auto q = make_question(k.inst, k.actual, 2, 4);
  const auto b = explain(k.inst, q, make_solve_fn({}), annotator_intentions(k.inst.kind, make_solve_fn({})), opts);
  EXPECT_EQ(b.text_source, TextSource::llm);
  EXPECT_EQ(b.text, "Because of the opening hours.");
  const auto system = seen.at("messages").at(0).at("content").get<std::string>();
  EXPECT_NE(system.find(json(b.comparison).dump()), std::string::npos);
  EXPECT_EQ(system.find("{input}"), std::string::npos);
  EXPECT_EQ(seen.at("messages").at(1).at("content"), kDemoQuestion);
  EXPECT_EQ(seen.at("temperature"), 0);
}

TEST(Text, LlmFailureFallsBackToTemplate) {
  KyotoFixture k;
  TextOptions opts;
  opts.chat = [](const json&) -> std::string { throw Error("llm_error", "connection refused"); };
  const auto q = make_question(k.inst, k.actual, 2, 4);
  const auto b = explain(k.inst, q, make_solve_fn({}), annotator_intentions(k.inst.kind, make_solve_fn({})), opts);
  EXPECT_EQ(b.text_source, TextSource::template_text);
  EXPECT_EQ(b.text, render_template(k.inst, b));
  ASSERT_EQ(b.warnings.size(), 1u);
}

TEST(Text, HttpChatClient) {
  httplib::Server server;
  json received;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    received = json::parse(req.body);
    received["auth"] = req.get_header_value("Authorization");
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "hello"}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmConfig cfg{"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "m", "secret", 5.0};
  EXPECT_EQ(http_chat(cfg)(chat_request(cfg, "sys", "user")), "hello");
  EXPECT_EQ(received.at("model"), "m");
  EXPECT_EQ(received.at("auth"), "Bearer secret");
  server.stop();
  th.join();

  LlmConfig dead{"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "m", "", 1.0};
  EXPECT_THROW(http_chat(dead)(chat_request(dead, "sys", "")), Error);
}

TEST(Prompts, AssetsMatchBuiltIns) {
  EXPECT_EQ(read_file("assets/prompts/question_extraction.txt"), kQuestionPrompt);
  EXPECT_EQ(read_file("assets/prompts/explanation.txt"), kExplanationPrompt);
  const auto loaded = PromptSet::load(std::string(ROUTEX_SOURCE_DIR) + "/assets/prompts");
  EXPECT_EQ(loaded.question, kQuestionPrompt);
  for (const char* part : {"Terminology:", "Example:", "Instructions:", "{input}"})
    EXPECT_NE(std::string(kExplanationPrompt).find(part), std::string::npos) << part;
  for (const char* slot : {"{route_info}", "{whynot_question}"})
    EXPECT_NE(std::string(kQuestionPrompt).find(slot), std::string::npos) << slot;
}
