#pragma once

// Request handlers behind the /v1 API. Every handler takes and returns JSON
// and reports failures as routex::Error; http.hpp maps those to statuses.

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "routex/explainer.hpp"
#include "routex/service/jobs.hpp"
#include "routex/service/session.hpp"

namespace routex {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path session_dir = "sessions";
  std::optional<std::filesystem::path> model;  // checkpoint used for intentions and /v1/predict
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::filesystem::path> prompts_dir;
  std::string token;                // bearer token for /v1; empty disables the check
  SolverConfig solver;              // routes and CF routes
  SolverConfig annotation_solver;   // intentions when no model matches the kind
  unsigned threads = 1;             // predict / annotate batches
  bool use_llm = true;              // read LLM_* from the environment
};

inline void from_json(const json& j, ServiceConfig& c) {
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  if (j.contains("session_dir")) c.session_dir = j.at("session_dir").get<std::string>();
  if (auto m = detail::optional_field<std::string>(j, "model")) c.model = *m;
  if (auto d = detail::optional_field<std::string>(j, "static_dir")) c.static_dir = *d;
  if (auto d = detail::optional_field<std::string>(j, "prompts_dir")) c.prompts_dir = *d;
  c.token = j.value("token", c.token);
  if (j.contains("solver")) c.solver = j.at("solver").get<SolverConfig>();
  if (j.contains("annotation_solver")) c.annotation_solver = j.at("annotation_solver").get<SolverConfig>();
  c.threads = j.value("threads", c.threads);
  c.use_llm = j.value("use_llm", c.use_llm);
}

namespace detail {

inline json require(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw Error("invalid_request", std::string("missing field \"") + key + "\"");
  return body.at(key);
}

/// A route given as {"order": [...]} or as a bare order array.
inline Route route_from(const json& j, const VrpInstance& inst) {
  try {
    return j.is_array() ? evaluate_route(inst, j.get<std::vector<int>>()) : parse_route(j, inst);
  } catch (const json::exception& e) {
    throw Error("invalid_route", e.what());
  }
}

inline FixedPrefix prefix_from(const json& j) {
  if (j.is_null()) return {};
  if (j.is_string()) return parse_prefix(j.get<std::string>());
  try {
    return FixedPrefix{j.get<std::vector<Edge>>()};
  } catch (const json::exception& e) {
    throw Error("invalid_prefix", std::string("prefix must be \"a-b,b-c\" or [[a,b],...]: ") + e.what());
  }
}

inline std::vector<Sample> samples_from(const json& j) {
  if (j.is_string()) {
    const std::filesystem::path path = j.get<std::string>();
    if (!std::filesystem::is_regular_file(path)) throw Error("dataset_not_found", "no dataset at " + path.string());
    return read_samples(path);
  }
  std::vector<Sample> out;
  for (const auto& s : j) out.push_back(parse_sample(s));
  return out;
}

}  // namespace detail

class Service {
 public:
  explicit Service(ServiceConfig cfg, std::optional<LlmConfig> llm = std::nullopt)
      : cfg_(std::move(cfg)), store_(cfg_.session_dir), llm_(std::move(llm)) {
    if (!llm_ && cfg_.use_llm) llm_ = LlmConfig::from_env();
    if (llm_) chat_ = http_chat(*llm_);
    if (cfg_.prompts_dir) prompts_ = PromptSet::load(*cfg_.prompts_dir);
    if (cfg_.model) set_model(load_checkpoint(*cfg_.model));
  }

  const ServiceConfig& config() const { return cfg_; }
  SessionStore& store() { return store_; }

  /// Replaces the chat backend (tests inject fakes here).
  void set_chat(ChatFn chat) { chat_ = std::move(chat); }

  void set_model(Checkpoint ckpt) {
    auto source = std::make_shared<IntentionSource>(classifier_intentions(ckpt));
    auto model = std::make_shared<EdgeClassifier<float>>(ckpt.config, ckpt.params.cast<float>());
    std::unique_lock lock(model_mu_);
    model_ = std::move(model);
    model_source_ = std::move(source);
  }

  json health() const {
    std::shared_lock lock(model_mu_);
    return json{{"status", "ok"},
                {"model", model_ ? json(model_->config()) : json()},
                {"llm", bool(chat_)}};
  }

  // -- sessions -------------------------------------------------------------

  json create_session(const json& body) {
    const json doc = body.is_object() && body.contains("instance") ? body.at("instance") : body;
    Session s;
    s.instance = parse_instance(doc);
    s.id = random_id();
    s.created_at = utc_now();
    s.route = solve(s.instance, s.instance.kind, {}, cfg_.solver);
    const auto source = intentions_for(s.instance.kind);
    s.class_names = source.class_names;
    s.intentions = source.classify(s.instance, s.route);
    auto lock = store_.lock(s.id);
    store_.save(s);
    return json(s);
  }

  json get_session(const std::string& id) {
    auto lock = store_.lock(id);
    return json(store_.load(id));
  }

  json list_sessions() const { return json{{"sessions", store_.list()}}; }

  json delete_session(const std::string& id) {
    auto lock = store_.lock(id);
    if (!store_.remove(id)) throw Error("not_found", "no session " + id);
    return json{{"deleted", id}};
  }

  /// Body: {"question": "free text" | {"t_ex": 2, "cf_to": 4}}.
  json ask(const std::string& id, const json& body) {
    const json question = detail::require(body, "question");
    auto lock = store_.lock(id);
    auto s = store_.load(id);
    const auto q = parse_question(s.instance, s.route, question, chat_, prompts_, llm_.value_or(LlmConfig{}));
    TextOptions text;
    text.chat = chat_;
    text.prompts = prompts_;
    if (question.is_string()) text.user_question = question.get<std::string>();
    auto bundle = explain(s.instance, q, make_solve_fn(cfg_.solver), intentions_for(s.instance.kind), text,
                          llm_.value_or(LlmConfig{}));
    HistoryEntry entry{random_id(), question, std::move(bundle), std::nullopt, utc_now(), std::nullopt};
    s.history.push_back(entry);
    store_.save(s);
    return json{{"bundle_id", entry.bundle_id}, {"bundle", entry.bundle}};
  }

  /// Body: {"bundle_id": ..., "decision": "keep" | "replace"}.
  json decide(const std::string& id, const json& body) {
    const auto bundle_id = detail::require(body, "bundle_id").get<std::string>();
    const auto choice = detail::require(body, "decision").get<std::string>();
    if (choice != "keep" && choice != "replace")
      throw Error("invalid_request", "decision must be keep or replace", json{{"decision", choice}});
    auto lock = store_.lock(id);
    auto s = store_.load(id);
    auto it = std::find_if(s.history.begin(), s.history.end(), [&](const auto& h) { return h.bundle_id == bundle_id; });
    if (it == s.history.end()) throw Error("unknown_bundle", "no bundle " + bundle_id + " in session " + id);
    if (it->decision) throw Error("already_decided", "bundle " + bundle_id + " was already " + std::string(to_string(*it->decision)));
    if (choice == "replace") {
      if (it->bundle.question.actual_route.order != s.route.order)
        throw Error("stale_bundle", "the route has changed since this question was asked");
      s.route = it->bundle.cf_route;
      s.intentions = it->bundle.cf_intentions;
      it->decision = Decision::replaced;
    } else {
      it->decision = Decision::kept;
    }
    it->decided_at = utc_now();
    store_.save(s);
    return json(s);
  }

  // -- batch endpoints ------------------------------------------------------

  /// Body: {"instance", "prefix"?, "kind"?, "solver"?}.
  json solve_request(const json& body) const {
    const auto inst = parse_instance(detail::require(body, "instance"));
    const auto kind = body.contains("kind") ? parse_kind(body.at("kind").get<std::string>()) : inst.kind;
    auto cfg = cfg_.solver;
    if (body.contains("solver")) from_json(body.at("solver"), cfg);
    const auto prefix = detail::prefix_from(body.value("prefix", json()));
    const auto route = solve(inst, kind, prefix, cfg);
    const auto work = kind == inst.kind ? inst : restrict_to_kind(inst, kind);
    const auto feas = is_feasible(work, route);
    return json{{"route", route},
                {"objective", objective(work, route)},
                {"feasible", feas.feasible},
                {"violations", feas.violations}};
  }

  /// Body: {"items": [{"instance", "route"}, ...]}; needs a loaded model.
  json predict(const json& body) const {
    std::shared_ptr<EdgeClassifier<float>> model;
    {
      std::shared_lock lock(model_mu_);
      model = model_;
    }
    if (!model) throw Error("model_unavailable", "no classifier checkpoint is loaded");
    std::vector<EncodedSample> xs;
    for (const auto& item : detail::require(body, "items")) {
      const auto inst = parse_instance(detail::require(item, "instance"));
      xs.push_back(encode_sample(inst, detail::route_from(detail::require(item, "route"), inst), model->config()));
    }
    return json{{"labels", predict_many(*model, xs, cfg_.threads)},
                {"class_names", builtin_plan(model->config().kind).class_names}};
  }

  /// Body: {"items": [{"instance", "route"}, ...], "solver"?}.
  json annotate(const json& body) const {
    auto cfg = cfg_.annotation_solver;
    if (body.contains("solver")) from_json(body.at("solver"), cfg);
    const auto solver = make_solve_fn(cfg);
    json labels = json::array(), warnings = json::array(), names = json::array();
    for (const auto& item : detail::require(body, "items")) {
      const auto inst = parse_instance(detail::require(item, "instance"));
      const auto route = detail::route_from(detail::require(item, "route"), inst);
      const auto plan = builtin_plan(inst.kind);
      const auto a = annotate_route(inst, route, plan, solver);
      labels.push_back(a.labels);
      warnings.push_back(a.warnings);
      names.push_back(plan.class_names);
    }
    return json{{"labels", labels}, {"warnings", warnings}, {"class_names", names}};
  }

  /// Body: {"train": path | [samples], "val"?: path | [samples], "model"?:
  /// {hidden_dim, n_heads, encoder_layers, decoder_layers}, "training"?:
  /// TrainingConfig, "output"?: checkpoint path, "activate"?: bool}.
  json train(const json& body) {
    auto train_set = detail::samples_from(detail::require(body, "train"));
    auto val_set = body.contains("val") ? detail::samples_from(body.at("val")) : std::vector<Sample>{};
    if (train_set.empty()) throw Error("empty_dataset", "no training samples");
    const auto kind = train_set.front().instance.kind;
    auto mc = ModelConfig::for_kind(kind, int(builtin_plan(kind).num_classes()));
    const auto m = body.value("model", json::object());
    mc.hidden_dim = m.value("hidden_dim", mc.hidden_dim);
    mc.n_heads = m.value("n_heads", mc.n_heads);
    mc.encoder_layers = m.value("encoder_layers", mc.encoder_layers);
    mc.decoder_layers = m.value("decoder_layers", mc.decoder_layers);
    mc.validate();
    const auto tc = body.value("training", json::object()).get<TrainingConfig>();
    const auto output = detail::optional_field<std::string>(body, "output");
    const bool activate = body.value("activate", false);

    const auto job = jobs_.submit("train", [this, train_set = std::move(train_set), val_set = std::move(val_set), mc, tc,
                                            output, activate](const auto& progress) {
      const auto tr = to_sequences(train_set, mc);
      const auto va = to_sequences(val_set, mc);
      auto result = routex::train<float>(tr, va, mc, tc, [&](const EpochRecord& r) { progress(json(r)); });
      json out{{"best_epoch", result.best_epoch},
               {"best_val_macro_f1", result.best_val_macro_f1},
               {"diverged", result.diverged},
               {"history", result.history}};
      if (output) {
        save_checkpoint(*output, mc, result.params, json{{"config", tc}, {"history", result.history}});
        out["checkpoint"] = *output;
      }
      if (activate) set_model(parse_checkpoint(checkpoint_json(mc, result.params)));
      return out;
    });
    return json{{"job_id", job}};
  }

  json job(const std::string& id) const { return jobs_.status(id); }
  JobQueue& jobs() { return jobs_; }

 private:
  IntentionSource intentions_for(ProblemKind kind) const {
    {
      std::shared_lock lock(model_mu_);
      if (model_source_ && model_->config().kind == kind) return *model_source_;
    }
    return annotator_intentions(kind, make_solve_fn(cfg_.annotation_solver));
  }

  ServiceConfig cfg_;
  SessionStore store_;
  std::optional<LlmConfig> llm_;
  ChatFn chat_;
  PromptSet prompts_;
  mutable std::shared_mutex model_mu_;
  std::shared_ptr<EdgeClassifier<float>> model_;
  std::shared_ptr<IntentionSource> model_source_;
  JobQueue jobs_;  // last: its worker may call set_model
};

}  // namespace routex
