// routex command line: solve, annotate, datagen, train, eval, predict,
// explain, serve.

#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>

#include "routex/classifier.hpp"
#include "routex/explainer.hpp"
#include "routex/service/http.hpp"

using namespace routex;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("invalid_json", path.string() + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw Error("io_error", "cannot write " + out);
  f << j.dump(2) << '\n';
}

SolverConfig solver_config(const std::string& engine, std::uint64_t seed, double time_limit) {
  SolverConfig c;
  c.engine = parse_engine(engine);
  c.rng_seed = seed;
  if (time_limit > 0) c.time_limit_seconds = time_limit;
  return c;
}

std::array<double, 3> parse_split(const std::string& text) {
  std::array<double, 3> out{};
  std::stringstream ss(text);
  std::string part;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!std::getline(ss, part, ',')) throw Error("invalid_config", "--split needs three fractions, got " + text);
    out[k] = std::stod(part);
  }
  return out;
}

// The route file may hold a route object, a bare order or a sample line.
Route load_route(const fs::path& path, const VrpInstance& inst) {
  const auto j = read_json(path);
  return detail::route_from(j.is_object() && j.contains("route") ? j.at("route") : j, inst);
}

EdgeClassifier<float> load_model(const fs::path& path) {
  const auto ckpt = load_checkpoint(path);
  return EdgeClassifier<float>(ckpt.config, ckpt.params.cast<float>());
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Route explanation toolkit"};
  app.require_subcommand(1);

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Solve an instance, optionally with a fixed edge prefix");
  std::string instance_path, kind_name, prefix_text, engine = "heuristic", out;
  std::uint64_t seed = 1234;
  double time_limit = 0;
  solve_cmd->add_option("--instance", instance_path, "Instance JSON")->required();
  solve_cmd->add_option("--kind", kind_name, "Problem kind (defaults to the instance's)");
  solve_cmd->add_option("--prefix", prefix_text, "Fixed edges, e.g. \"0-3,3-7\"");
  solve_cmd->add_option("--engine", engine, "heuristic | exact");
  solve_cmd->add_option("--seed", seed);
  solve_cmd->add_option("--time-limit", time_limit, "Seconds; 0 for none");
  solve_cmd->add_option("--out", out, "Output file (stdout if omitted)");

  // annotate
  auto* annotate_cmd = app.add_subcommand("annotate", "Label route edges with intentions");
  std::string routes_path, instances_path, plan_name;
  annotate_cmd->add_option("--routes", routes_path, "JSON-lines of routes")->required();
  annotate_cmd->add_option("--instances", instances_path, "JSON-lines of instances, one per route")->required();
  annotate_cmd->add_option("--plan", plan_name, "Comparison plan kind (defaults to each instance's)");
  annotate_cmd->add_option("--engine", engine);
  annotate_cmd->add_option("--seed", seed);
  annotate_cmd->add_option("--out", out, "Label JSON-lines (stdout if omitted)");

  // datagen
  auto* datagen_cmd = app.add_subcommand("datagen", "Generate an annotated dataset");
  int n_nodes = 20, n_samples = 1000;
  std::string split = "0.9,0.05,0.05", out_dir;
  std::string annotation_engine = "heuristic";
  unsigned threads = 1;
  bool with_cf = false;
  kind_name = "tsptw";
  datagen_cmd->add_option("--kind", kind_name);
  datagen_cmd->add_option("--n", n_nodes, "Nodes per instance, depot included");
  datagen_cmd->add_option("--samples", n_samples);
  datagen_cmd->add_option("--seed", seed);
  datagen_cmd->add_option("--split", split, "train,val,test fractions");
  datagen_cmd->add_option("--engine", engine, "Engine for the routes");
  datagen_cmd->add_option("--annotation-engine", annotation_engine, "Engine for the labels");
  datagen_cmd->add_option("--threads", threads);
  datagen_cmd->add_flag("--cf", with_cf, "Also write a counterfactual-route dataset under <out>/cf");
  datagen_cmd->add_option("--out", out_dir)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the edge classifier");
  std::string data_dir, loss = "scbce";
  double beta = 0.99, lr = 1e-3;
  int epochs = 100, batch_size = 256, hidden = 128, heads = 8, layers = 2, patience = 0;
  train_cmd->add_option("--data", data_dir, "Directory with train.jsonl and val.jsonl")->required();
  train_cmd->add_option("--loss", loss, "ce | cbce | scbce");
  train_cmd->add_option("--beta", beta);
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch-size", batch_size);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--hidden", hidden);
  train_cmd->add_option("--heads", heads);
  train_cmd->add_option("--layers", layers, "Encoder and decoder layers");
  train_cmd->add_option("--patience", patience, "Early stopping; 0 disables");
  train_cmd->add_option("--out", out, "Checkpoint path (default <data>/model.ckpt)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Macro-F1 and confusion matrices on a labeled set");
  std::string model_path, seqconf_path;
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--data", data_dir, "Labeled JSON-lines")->required();
  eval_cmd->add_option("--emit-seqconfmat", seqconf_path, "Write the per-step confusion matrices here");
  eval_cmd->add_option("--threads", threads);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Classify the edges of one route");
  std::string route_path;
  predict_cmd->add_option("--model", model_path)->required();
  predict_cmd->add_option("--instance", instance_path)->required();
  predict_cmd->add_option("--route", route_path)->required();

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "Answer a why-not question about a route");
  int t_ex = 0;
  std::string cf_to, question_text, text_mode = "template", prompts_dir;
  explain_cmd->add_option("--instance", instance_path)->required();
  explain_cmd->add_option("--route", route_path, "Actual route (solved if omitted)");
  explain_cmd->add_option("--t-ex", t_ex, "1-based step of the questioned edge");
  explain_cmd->add_option("--cf-to", cf_to, "Counterfactual next node, index or name");
  explain_cmd->add_option("--question", question_text, "Free-text question instead of --t-ex/--cf-to");
  explain_cmd->add_option("--model", model_path, "Classifier checkpoint (annotator if omitted)");
  explain_cmd->add_option("--text", text_mode, "template | llm");
  explain_cmd->add_option("--prompts", prompts_dir, "Directory with prompt assets");
  explain_cmd->add_option("--engine", engine);
  explain_cmd->add_option("--seed", seed);
  explain_cmd->add_option("--out", out);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  std::string config_path, host;
  int port = 0;
  serve_cmd->add_option("--config", config_path, "Service config JSON");
  serve_cmd->add_option("--port", port, "Overrides the config port");
  serve_cmd->add_option("--host", host, "Overrides the config host");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve_cmd) {
      const auto inst = parse_instance(read_json(instance_path));
      const auto kind = kind_name.empty() ? inst.kind : parse_kind(kind_name);
      auto cfg = solver_config(engine, seed, time_limit);
      const auto route = solve(inst, kind, parse_prefix(prefix_text), cfg);
      const auto work = kind == inst.kind ? inst : restrict_to_kind(inst, kind);
      emit(json{{"route", route}, {"objective", objective(work, route)}, {"feasible", is_feasible(work, route).feasible}},
           out);
    } else if (*annotate_cmd) {
      const auto routes = read_jsonl(routes_path);
      const auto instances = read_jsonl(instances_path);
      if (routes.size() != instances.size())
        throw Error("length_mismatch", std::to_string(routes.size()) + " routes for " +
                                           std::to_string(instances.size()) + " instances");
      const auto solver = make_solve_fn(solver_config(engine, seed, 0));
      std::ofstream file;
      if (!out.empty()) {
        file.open(out);
        if (!file) throw Error("io_error", "cannot write " + out);
      }
      std::ostream& sink = out.empty() ? std::cout : file;
      for (std::size_t i = 0; i < routes.size(); ++i) {
        const auto inst = parse_instance(instances[i].contains("instance") ? instances[i].at("instance") : instances[i]);
        const auto& r = routes[i];
        const auto route = detail::route_from(r.is_object() && r.contains("route") ? r.at("route") : r, inst);
        const auto plan = builtin_plan(plan_name.empty() ? inst.kind : parse_kind(plan_name));
        const auto ann = annotate_route(inst, route, plan, solver);
        const std::string id = r.is_object() && r.contains("sample_id") ? r.at("sample_id").get<std::string>()
                                                                        : std::to_string(i);
        json line{{"sample_id", id}, {"labels", ann.labels}, {"class_names", plan.class_names}};
        if (!ann.warnings.empty()) line["warnings"] = ann.warnings;
        sink << line.dump() << '\n';
      }
    } else if (*datagen_cmd) {
      GenConfig cfg;
      cfg.kind = parse_kind(kind_name);
      cfg.n_nodes = n_nodes;
      cfg.n_samples = n_samples;
      cfg.rng_seed = seed;
      cfg.split = parse_split(split);
      cfg.threads = threads;
      cfg.solver = solver_config(engine, seed, 0);
      cfg.annotation_solver = solver_config(annotation_engine, seed, 0);
      const auto ds = gen_actual_route_dataset(cfg);
      const json meta{{"kind", kind_name}, {"n_nodes", n_nodes}, {"seed", seed}, {"engine", engine},
                      {"annotation_engine", annotation_engine}};
      write_dataset(out_dir, ds, cfg.split, meta);
      std::cerr << "wrote " << ds.samples.size() << " samples to " << out_dir << " (" << ds.skipped << " redrawn)\n";
      if (with_cf) {
        const auto cf = gen_cf_route_dataset(ds.samples, cfg);
        write_dataset(fs::path(out_dir) / "cf", cf, cfg.split, meta);
        std::cerr << "wrote " << cf.samples.size() << " counterfactual samples\n";
      }
    } else if (*train_cmd) {
      const auto train_samples = read_samples(fs::path(data_dir) / "train.jsonl");
      const auto val_file = fs::path(data_dir) / "val.jsonl";
      const auto val_samples = fs::exists(val_file) ? read_samples(val_file) : std::vector<Sample>{};
      if (train_samples.empty()) throw Error("empty_dataset", "no training samples in " + data_dir);
      const auto kind = train_samples.front().instance.kind;
      auto mc = ModelConfig::for_kind(kind, int(builtin_plan(kind).num_classes()));
      mc.hidden_dim = hidden;
      mc.n_heads = heads;
      mc.encoder_layers = mc.decoder_layers = layers;
      mc.validate();
      TrainingConfig tc;
      tc.loss = parse_loss(loss);
      tc.beta = beta;
      tc.batch_size = batch_size;
      tc.learning_rate = lr;
      tc.max_epochs = epochs;
      tc.rng_seed = seed;
      if (patience > 0) tc.patience = patience;
      const auto result = train<float>(to_sequences(train_samples, mc), to_sequences(val_samples, mc), mc, tc,
                                       [](const EpochRecord& r) { std::cerr << json(r).dump() << '\n'; });
      if (result.diverged) std::cerr << "training diverged; keeping the best epoch so far\n";
      const auto path = out.empty() ? fs::path(data_dir) / "model.ckpt" : fs::path(out);
      save_checkpoint(path, mc, result.params, json{{"config", tc}, {"history", result.history}});
      std::cout << json{{"checkpoint", path.string()},
                        {"best_epoch", result.best_epoch},
                        {"best_val_macro_f1", result.best_val_macro_f1}}
                       .dump(2)
                << '\n';
    } else if (*eval_cmd) {
      const auto model = load_model(model_path);
      const auto data = to_sequences(read_samples(data_dir), model.config());
      const auto e = evaluate(model, data, threads);
      if (!seqconf_path.empty()) emit(e.sequential.to_json(), seqconf_path);
      std::cout << json{{"samples", data.size()}, {"macro_f1", e.macro_f1}, {"confusion", e.confusion}}.dump(2) << '\n';
    } else if (*predict_cmd) {
      const auto model = load_model(model_path);
      const auto inst = parse_instance(read_json(instance_path));
      const auto route = load_route(route_path, inst);
      const auto labels = model.predict(encode_sample(inst, route, model.config()));
      std::cout << json{{"labels", labels}, {"class_names", builtin_plan(model.config().kind).class_names}}.dump(2)
                << '\n';
    } else if (*explain_cmd) {
      const auto inst = parse_instance(read_json(instance_path));
      const auto cfg = solver_config(engine, seed, 0);
      const auto solver = make_solve_fn(cfg);
      const auto route = route_path.empty() ? solve(inst, inst.kind, {}, cfg) : load_route(route_path, inst);
      const auto source = model_path.empty() ? annotator_intentions(inst.kind, solver)
                                             : classifier_intentions(load_checkpoint(model_path));

      TextOptions text;
      if (!prompts_dir.empty()) text.prompts = PromptSet::load(prompts_dir);
      LlmConfig llm;
      if (text_mode == "llm") {
        const auto env = LlmConfig::from_env();
        if (!env) throw Error("invalid_config", "--text llm needs LLM_ENDPOINT and LLM_MODEL");
        llm = *env;
        text.chat = http_chat(llm);
      } else if (text_mode != "template") {
        throw Error("invalid_config", "--text must be template or llm");
      }

      json input;
      if (!question_text.empty()) {
        input = question_text;
        text.user_question = question_text;
      } else {
        if (t_ex == 0 || cf_to.empty()) throw Error("invalid_request", "give --t-ex and --cf-to, or --question");
        const bool numeric = cf_to.find_first_not_of("0123456789") == std::string::npos;
        input = json{{"t_ex", t_ex}, {"cf_to", numeric ? json(std::stoi(cf_to)) : json(cf_to)}};
      }
      const auto q = parse_question(inst, route, input, text.chat, text.prompts, llm);
      const auto bundle = explain(inst, q, solver, source, text, llm);
      if (out.empty()) {
        std::cout << bundle.text << '\n';
        for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << '\n';
      } else {
        emit(json(bundle), out);
      }
    } else if (*serve_cmd) {
      ServiceConfig cfg;
      if (!config_path.empty()) cfg = read_json(config_path).get<ServiceConfig>();
      if (port > 0) cfg.port = port;
      if (!host.empty()) cfg.host = host;
      Service svc(cfg);
      httplib::Server server;
      mount_api(server, svc);
      g_server = &server;
      std::signal(SIGINT, [](int) { g_server->stop(); });
      std::signal(SIGTERM, [](int) { g_server->stop(); });
      std::cerr << "listening on " << cfg.host << ':' << cfg.port << '\n';
      if (!server.listen(cfg.host, cfg.port)) throw Error("io_error", "cannot listen on port " + std::to_string(cfg.port));
    }
  } catch (const Error& e) {
    std::cerr << e.to_json().dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
