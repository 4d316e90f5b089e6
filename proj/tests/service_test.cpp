#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "routex/kyoto.hpp"
#include "routex/service/http.hpp"
#include "test_util.hpp"

using namespace routex;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("routex-test-" + random_id());
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

ServiceConfig test_config(const fs::path& dir) {
  ServiceConfig c;
  c.session_dir = dir / "sessions";
  c.use_llm = false;
  return c;
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

/// Random-weight checkpoint for `kind` written to `path`.
void write_checkpoint(const fs::path& path, ProblemKind kind) {
  auto cfg = ModelConfig::for_kind(kind, int(builtin_plan(kind).num_classes()));
  cfg.hidden_dim = 16;
  cfg.n_heads = 4;
  save_checkpoint(path, cfg, ModelParams<double>::random(cfg, 3));
}

}  // namespace

TEST(Sessions, KyotoSessionStartsAndEndsAtStation) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const auto s = svc.create_session(json{{"instance", kyoto_instance()}});
  const auto order = s.at("route").at("order").get<std::vector<int>>();
  EXPECT_EQ(order.front(), 0);
  EXPECT_EQ(order.back(), 0);
  EXPECT_EQ(order.size(), 10u);
  EXPECT_EQ(s.at("intentions").size(), order.size() - 1);
  EXPECT_EQ(s.at("class_names"), json({"route_length", "time_window"}));
  EXPECT_TRUE(SessionStore::valid_id(s.at("id")));
}

TEST(Sessions, TwoNodeInstanceIsOutAndBack) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  VrpInstance inst;
  inst.kind = ProblemKind::TSP;
  inst.nodes = {Node{{0, 0}}, Node{{3, 4}}};
  const auto s = svc.create_session(json(inst));
  EXPECT_EQ(s.at("route").at("order"), json({0, 1, 0}));
  EXPECT_EQ(s.at("intentions"), json({0, 0}));
}

TEST(Sessions, MalformedInstanceListsFields) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  auto bad = json(testutil::random_instance(ProblemKind::TSPTW, 5, 1));
  bad["nodes"][2]["time_window"] = {5.0, 1.0};
  bad["nodes"][3]["stay_duration"] = -1.0;
  try {
    svc.create_session(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid_instance");
    const auto text = e.details().dump();
    EXPECT_NE(text.find("nodes[2]"), std::string::npos) << text;
    EXPECT_NE(text.find("nodes[3]"), std::string::npos) << text;
  }
  EXPECT_EQ(error_code([&] { svc.create_session(json{{"nodes", 3}}); }), "invalid_instance");
}

TEST(Sessions, CrudRoundTrip) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const auto a = svc.create_session(json(testutil::random_instance(ProblemKind::TSPTW, 6, 1)));
  const auto b = svc.create_session(json(testutil::random_instance(ProblemKind::CVRP, 6, 2)));
  EXPECT_EQ(svc.get_session(a.at("id")), a);
  EXPECT_EQ(svc.get_session(a.at("id")).dump(), svc.get_session(a.at("id")).dump());
  auto ids = svc.list_sessions().at("sessions").get<std::vector<std::string>>();
  std::sort(ids.begin(), ids.end());
  std::vector<std::string> expected{a.at("id"), b.at("id")};
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(ids, expected);

  // a second service on the same directory sees the stored sessions
  Service again(test_config(tmp.path));
  EXPECT_EQ(again.get_session(b.at("id")), b);

  svc.delete_session(a.at("id"));
  EXPECT_EQ(error_code([&] { svc.get_session(a.at("id")); }), "not_found");
  EXPECT_EQ(error_code([&] { svc.delete_session(a.at("id")); }), "not_found");
  EXPECT_EQ(error_code([&] { svc.get_session("../etc/passwd"); }), "not_found");
}

TEST(Sessions, ScriptedAskReplaceAskKeep) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const auto s0 = svc.create_session(json(kyoto_instance()));
  const std::string id = s0.at("id");

  const auto r1 = svc.ask(id, json{{"question", {{"t_ex", 2}, {"cf_to", 4}}}});
  const auto s1 = svc.get_session(id);
  EXPECT_EQ(s1.at("route"), s0.at("route"));  // asking never moves the route
  EXPECT_EQ(s1.at("history").size(), 1u);
  EXPECT_EQ(r1.at("bundle").at("text_source"), "template");

  const auto s2 = svc.decide(id, json{{"bundle_id", r1.at("bundle_id")}, {"decision", "replace"}});
  EXPECT_EQ(s2.at("route"), r1.at("bundle").at("cf_route"));
  EXPECT_EQ(s2.at("intentions"), r1.at("bundle").at("cf_intentions"));
  EXPECT_EQ(s2.at("history").at(0).at("decision"), "replaced");
  EXPECT_EQ(error_code([&] { svc.decide(id, json{{"bundle_id", r1.at("bundle_id")}, {"decision", "keep"}}); }),
            "already_decided");

  const auto r2 = svc.ask(id, json{{"question", {{"t_ex", 3}, {"cf_to", "Nijo-jo Castle"}}}});
  EXPECT_EQ(r2.at("bundle").at("question").at("actual_route"), r1.at("bundle").at("cf_route"));
  const auto before = svc.get_session(id).at("route").dump();
  const auto s3 = svc.decide(id, json{{"bundle_id", r2.at("bundle_id")}, {"decision", "keep"}});
  EXPECT_EQ(s3.at("route").dump(), before);
  EXPECT_EQ(s3.at("history").size(), 2u);
  EXPECT_EQ(s3.at("history").at(1).at("decision"), "kept");
}

TEST(Sessions, QuestionErrorsEchoTheQuestion) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const std::string id = svc.create_session(json(kyoto_instance())).at("id");
  try {
    svc.ask(id, json{{"question", {{"t_ex", 0}, {"cf_to", 4}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "question_mismatch");
    EXPECT_EQ(e.details().at("question").at("t_ex"), 0);
  }
  try {
    svc.ask(id, json{{"question", "what about lunch?"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "parse_failed");
    EXPECT_EQ(e.details().at("question"), "what about lunch?");
  }
  EXPECT_EQ(svc.get_session(id).at("history").size(), 0u);
}

TEST(Sessions, FreeTextDemoQuestionWithoutLlm) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const std::string id = svc.create_session(json(kyoto_instance())).at("id");
  const auto r = svc.ask(
      id, json{{"question", "Why do we visit Ginkaku-ji Temple after Fushimi-Inari Shrine, instead of Kiyomizu-dera?"}});
  EXPECT_EQ(r.at("bundle").at("question").at("cf_edge"), json({3, 4}));
  EXPECT_EQ(r.at("bundle").at("class_names").size(), 2u);
}

TEST(Sessions, ReplacingAStaleBundleIsRefused) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const std::string id = svc.create_session(json(kyoto_instance())).at("id");
  const auto a = svc.ask(id, json{{"question", {{"t_ex", 2}, {"cf_to", 4}}}});
  const auto b = svc.ask(id, json{{"question", {{"t_ex", 3}, {"cf_to", 5}}}});
  svc.decide(id, json{{"bundle_id", a.at("bundle_id")}, {"decision", "replace"}});
  EXPECT_EQ(error_code([&] { svc.decide(id, json{{"bundle_id", b.at("bundle_id")}, {"decision", "replace"}}); }),
            "stale_bundle");
  EXPECT_EQ(error_code([&] { svc.decide(id, json{{"bundle_id", "nope"}, {"decision", "keep"}}); }), "unknown_bundle");
}

TEST(Batch, SolveHonorsPrefix) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const auto inst = testutil::random_instance(ProblemKind::TSP, 7, 5);
  const auto r = svc.solve_request(json{{"instance", inst}, {"prefix", "0-4,4-2"}, {"solver", {{"engine", "exact"}}}});
  const auto order = r.at("route").at("order").get<std::vector<int>>();
  EXPECT_EQ(order[1], 4);
  EXPECT_EQ(order[2], 2);
  EXPECT_EQ(error_code([&] { svc.solve_request(json{{"instance", inst}, {"prefix", "0-4,2-3"}}); }),
            "infeasible_prefix");
}

TEST(Batch, PredictReturnsOneLabelArrayPerRoute) {
  TempDir tmp;
  auto cfg = test_config(tmp.path);
  EXPECT_EQ(error_code([&] { Service(cfg).predict(json{{"items", json::array()}}); }), "model_unavailable");
  cfg.model = tmp.path / "model.json";
  write_checkpoint(*cfg.model, ProblemKind::TSPTW);
  Service svc(cfg);
  json items = json::array();
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto inst = testutil::random_instance(ProblemKind::TSPTW, 6, i);
    items.push_back(json{{"instance", inst}, {"route", {0, 1, 2, 3, 4, 5, 0}}});
  }
  const auto out = svc.predict(json{{"items", items}});
  ASSERT_EQ(out.at("labels").size(), 100u);
  for (const auto& l : out.at("labels")) EXPECT_EQ(l.size(), 6u);

  // sessions of the model's kind take their intentions from it
  const auto s = svc.create_session(json(kyoto_instance()));
  const auto r = svc.ask(s.at("id"), json{{"question", {{"t_ex", 2}, {"cf_to", 4}}}});
  EXPECT_EQ(r.at("bundle").at("intention_source"), "classifier");
}

TEST(Batch, AnnotateMatchesTheLibrary) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  const auto inst = testutil::random_instance(ProblemKind::CVRP, 6, 8);
  const auto route = solve(inst, inst.kind, {});
  const auto out = svc.annotate(json{{"items", json::array({json{{"instance", inst}, {"route", route.order}}})}});
  const auto expected = annotate_route(inst, route, builtin_plan(inst.kind), make_solve_fn({}));
  EXPECT_EQ(out.at("labels").at(0), json(expected.labels));
}

TEST(Jobs, TrainJobRunsToDone) {
  TempDir tmp;
  Service svc(test_config(tmp.path));
  GenConfig g;
  g.n_nodes = 6;
  g.n_samples = 24;
  const auto ds = gen_actual_route_dataset(g);
  const json body{{"train", ds.samples},
                  {"val", ds.samples},
                  {"model", {{"hidden_dim", 8}, {"n_heads", 2}, {"encoder_layers", 1}, {"decoder_layers", 1}}},
                  {"training", {{"max_epochs", 3}, {"batch_size", 8}}},
                  {"output", (tmp.path / "trained.json").string()},
                  {"activate", true}};
  const std::string first = svc.train(body).at("job_id");
  const std::string second = svc.train(body).at("job_id");
  const auto seen = svc.job(second).at("state").get<std::string>();
  EXPECT_TRUE(seen == "queued" || seen == "running" || seen == "done") << seen;
  const auto done = svc.jobs().wait(first);
  EXPECT_EQ(done.at("state"), "done") << done.dump();
  EXPECT_EQ(done.at("result").at("history").size(), 3u);
  EXPECT_EQ(done.at("progress").at("epoch"), 3);
  EXPECT_EQ(svc.jobs().wait(second).at("state"), "done");
  EXPECT_NO_THROW(load_checkpoint(tmp.path / "trained.json"));
  EXPECT_FALSE(svc.health().at("model").is_null());
  EXPECT_EQ(error_code([&] { svc.job("0123"); }), "not_found");

  EXPECT_EQ(error_code([&] { svc.train(json{{"train", (tmp.path / "missing.jsonl").string()}}); }),
            "dataset_not_found");
}

TEST(Http, EndToEnd) {
  TempDir tmp;
  auto cfg = test_config(tmp.path);
  cfg.token = "t0ken";
  fs::create_directories(tmp.path / "ui");
  std::ofstream(tmp.path / "ui" / "index.html") << "<html>ui</html>";
  cfg.static_dir = tmp.path / "ui";
  Service svc(cfg);
  httplib::Server server;
  mount_api(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const httplib::Headers auth{{"Authorization", "Bearer t0ken"}};
  auto post = [&](const std::string& path, const json& body) {
    auto r = client.Post(path, auth, body.dump(), "application/json");
    return std::make_pair(r->status, json::parse(r->body));
  };
  auto get = [&](const std::string& path) {
    auto r = client.Get(path, auth);
    return std::make_pair(r->status, json::parse(r->body));
  };

  EXPECT_EQ(client.Get("/v1/sessions")->status, 401);
  EXPECT_EQ(client.Get("/index.html")->body, "<html>ui</html>");

  auto [st, s] = post("/v1/sessions", json(kyoto_instance()));
  ASSERT_EQ(st, 200) << s.dump();
  const std::string id = s.at("id");
  EXPECT_EQ(get("/v1/sessions/" + id).second, s);
  EXPECT_EQ(get("/v1/sessions").second.at("sessions"), json({id}));

  auto [qs, q] = post("/v1/sessions/" + id + "/questions", json{{"question", {{"t_ex", 2}, {"cf_to", 4}}}});
  ASSERT_EQ(qs, 200) << q.dump();
  auto [ds, d] = post("/v1/sessions/" + id + "/decisions", json{{"bundle_id", q.at("bundle_id")}, {"decision", "replace"}});
  EXPECT_EQ(ds, 200);
  EXPECT_EQ(d.at("route"), q.at("bundle").at("cf_route"));
  EXPECT_EQ(post("/v1/sessions/" + id + "/decisions", json{{"bundle_id", q.at("bundle_id")}, {"decision", "keep"}}).first,
            409);
  auto [bs, b] = post("/v1/sessions/" + id + "/questions", json{{"question", {{"t_ex", 0}, {"cf_to", 4}}}});
  EXPECT_EQ(bs, 400);
  EXPECT_EQ(b.at("error"), "question_mismatch");
  EXPECT_EQ(post("/v1/sessions", json{{"kind", "TSP"}}).first, 400);
  auto bad_json = client.Post("/v1/sessions", auth, "{nope", "application/json");
  EXPECT_EQ(bad_json->status, 400);

  const auto inst = testutil::random_instance(ProblemKind::TSPTW, 6, 2);
  auto [ss, sol] = post("/v1/solve", json{{"instance", inst}, {"prefix", {{0, 3}}}});
  EXPECT_EQ(ss, 200);
  EXPECT_EQ(sol.at("route").at("order").at(1), 3);
  EXPECT_EQ(post("/v1/predict", json{{"items", json::array()}}).first, 503);

  EXPECT_EQ(client.Delete("/v1/sessions/" + id, auth)->status, 200);
  EXPECT_EQ(get("/v1/sessions/" + id).first, 404);
  EXPECT_EQ(get("/v1/jobs/abc").first, 404);

  server.stop();
  th.join();
}
