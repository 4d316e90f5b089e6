#pragma once

// /v1 routes on an httplib server.

#include <iostream>
#include <string>

#include "routex/service/service.hpp"

namespace routex {

inline int http_status(const std::string& code) {
  if (code == "not_found" || code == "unknown_bundle") return 404;
  if (code == "already_decided" || code == "stale_bundle") return 409;
  if (code == "unauthorized") return 401;
  if (code == "model_unavailable") return 503;
  if (code == "io_error" || code == "corrupt_session" || code == "internal" || code == "llm_error") return 500;
  return 400;  // validation failures: invalid_*, parse_failed, question_mismatch, infeasible_prefix, ...
}

namespace detail {

inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler handle(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      json body;
      if (!req.body.empty()) {
        try {
          body = json::parse(req.body);
        } catch (const json::exception& e) {
          throw Error("invalid_json", std::string("request body is not JSON: ") + e.what());
        }
      }
      reply(res, 200, fn(req, body));
    } catch (const Error& e) {
      reply(res, http_status(e.code()), e.to_json());
    } catch (const json::exception& e) {
      reply(res, 400, json{{"error", "invalid_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, json{{"error", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace detail

/// Registers every /v1 endpoint, the bearer-token check and the static UI
/// mount on `server`.
inline void mount_api(httplib::Server& server, Service& svc) {
  using detail::handle;
  using Req = httplib::Request;
  const auto& cfg = svc.config();

  if (!cfg.token.empty()) {
    server.set_pre_routing_handler([token = cfg.token](const Req& req, httplib::Response& res) {
      if (!req.path.starts_with("/v1/") || req.get_header_value("Authorization") == "Bearer " + token)
        return httplib::Server::HandlerResponse::Unhandled;
      detail::reply(res, 401, Error("unauthorized", "missing or wrong bearer token").to_json());
      return httplib::Server::HandlerResponse::Handled;
    });
  }
  if (cfg.static_dir && !server.set_mount_point("/", cfg.static_dir->string()))
    throw Error("invalid_config", "static_dir " + cfg.static_dir->string() + " does not exist");

  const std::string id = "([0-9a-zA-Z]+)";
  server.Get("/v1/health", handle([&svc](const Req&, const json&) { return svc.health(); }));
  server.Post("/v1/sessions", handle([&svc](const Req&, const json& b) { return svc.create_session(b); }));
  server.Get("/v1/sessions", handle([&svc](const Req&, const json&) { return svc.list_sessions(); }));
  server.Get("/v1/sessions/" + id,
             handle([&svc](const Req& r, const json&) { return svc.get_session(r.matches[1]); }));
  server.Delete("/v1/sessions/" + id,
                handle([&svc](const Req& r, const json&) { return svc.delete_session(r.matches[1]); }));
  server.Post("/v1/sessions/" + id + "/questions",
              handle([&svc](const Req& r, const json& b) { return svc.ask(r.matches[1], b); }));
  server.Post("/v1/sessions/" + id + "/decisions",
              handle([&svc](const Req& r, const json& b) { return svc.decide(r.matches[1], b); }));
  server.Post("/v1/solve", handle([&svc](const Req&, const json& b) { return svc.solve_request(b); }));
  server.Post("/v1/predict", handle([&svc](const Req&, const json& b) { return svc.predict(b); }));
  server.Post("/v1/annotate", handle([&svc](const Req&, const json& b) { return svc.annotate(b); }));
  server.Post("/v1/train", handle([&svc](const Req&, const json& b) { return svc.train(b); }));
  server.Get("/v1/jobs/" + id, handle([&svc](const Req& r, const json&) { return svc.job(r.matches[1]); }));
}

}  // namespace routex
