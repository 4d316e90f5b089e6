#pragma once

// Chat-completion client for the two LLM steps (reading a question, writing
// the explanation) and the prompt templates they fill in.
//
// The endpoint speaks the common JSON chat format: POST {"model",
// "temperature", "messages": [{"role", "content"}]} and read
// choices[0].message.content. Only plain http is compiled in unless
// CPPHTTPLIB_OPENSSL_SUPPORT is defined.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <regex>
#include <sstream>
#include <string>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res, which Eigen uses as a
// parameter name
#ifdef _res
#undef _res
#endif

#include "routex/error.hpp"

namespace routex {

// Copies of assets/prompts/*.txt so the binary works without the asset tree.
inline constexpr const char* kQuestionPrompt = R"PROMPT(You read questions about a vehicle route and turn them into arguments for a counterfactual route generator.

Terminology:
- The route is a sequence of steps. Step t is the edge that leaves the t-th stop of the route (the first step leaves the start point).
- The actual edge is the edge the route takes at the step the user asks about.
- The counterfactual (CF) node is the destination the user would rather go to at that step instead.

Example:
Route:
step 1: Depot (node 0) -> Museum (node 2)
step 2: Museum (node 2) -> Harbor (node 1)
step 3: Harbor (node 1) -> Depot (node 0)
Question: Why do we go to the Harbor after the Museum and not back to the Depot?
Answer: {"t_ex": 2, "cf_target_node": 0}

Instructions:
Answer with a single JSON object {"t_ex": <step number>, "cf_target_node": <node index>} and nothing else. Use the step numbers and node indices of the route below. The CF node must differ from the node the actual edge goes to.

Route:
{route_info}

Question: {whynot_question}
)PROMPT";

inline constexpr const char* kExplanationPrompt = R"PROMPT(You are a route planning assistant. A user is looking at a vehicle route and asked why one edge was chosen instead of another. You explain the consequences of both choices to them in plain language.

Terminology:
- Actual edge: the edge the planned route takes at the step in question. CF edge: the alternative edge the user proposed.
- CF route: the best route that keeps every edge before that step, takes the CF edge, and then continues as well as possible.
- Intention: what an edge prioritizes. "route_length" means the edge follows the shortest tour; the other classes (for example "time_window", "prize_penalty", "capacity") mean the edge was taken to respect that constraint or objective.
- short_term_objective: the objective value right after the edge (for time windows, the time of arrival at its destination).
- long_term_objective: the objective value of the whole route.
- class_ratio: the share of later edges whose intention is "route_length".
- feasibility_ratio: the share of still unvisited stops that the rest of the route manages to visit.
- comparison: CF minus actual. For objectives, lengths, penalties and late arrivals, a positive value means the CF route is worse. For feasibility_ratio and prizes, a positive value means the CF route is better.

Example:
Input: {"question": {"step": 3, "from": "Harbor", "actual_to": "Museum", "cf_to": "Park"}, "actual": {"intention": "time_window"}, "cf": {"intention": "route_length"}, "comparison": {"short_term_objective": -0.4, "long_term_objective": 1.5, "feasibility_ratio": -0.25}}
Answer: Going from the Harbor to the Museum is chosen to respect the Museum's opening hours. Going to the Park first would get you to your next stop 0.4 hours sooner, but the whole trip would end 1.5 hours later, and one in four of the remaining stops could no longer be visited in time.

Instructions:
Explain the comparison below in three to five sentences. Mention the intention of the actual edge, the short-term and long-term effects, and any stop that can no longer be visited. Use the remarks of the stops when they matter. Do not invent numbers that are not in the input.

Input: {input}
)PROMPT";

struct PromptSet {
  std::string question = kQuestionPrompt;
  std::string explanation = kExplanationPrompt;

  /// Prompts from `dir`/question_extraction.txt and `dir`/explanation.txt;
  /// a missing file keeps the built-in text.
  static PromptSet load(const std::filesystem::path& dir) {
    PromptSet p;
    auto read = [&](const char* name, std::string& into) {
      std::ifstream in(dir / name);
      if (!in) return;
      std::ostringstream ss;
      ss << in.rdbuf();
      into = ss.str();
    };
    read("question_extraction.txt", p.question);
    read("explanation.txt", p.explanation);
    return p;
  }
};

/// Replaces every `{name}` with its value.
inline std::string fill_template(std::string text, const std::vector<std::pair<std::string, std::string>>& slots) {
  for (const auto& [name, value] : slots) {
    const std::string key = "{" + name + "}";
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
      text.replace(pos, key.size(), value);
  }
  return text;
}

struct LlmConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key;
  double timeout_seconds = 60.0;

  /// From LLM_ENDPOINT, LLM_MODEL and LLM_API_KEY; nullopt without an endpoint.
  static std::optional<LlmConfig> from_env() {
    auto get = [](const char* name) {
      const char* v = std::getenv(name);
      return std::string(v ? v : "");
    };
    LlmConfig c;
    c.endpoint = get("LLM_ENDPOINT");
    if (c.endpoint.empty()) return std::nullopt;
    c.model = get("LLM_MODEL");
    c.api_key = get("LLM_API_KEY");
    return c;
  }
};

/// Sends a request body, returns the assistant text. Throws on failure.
using ChatFn = std::function<std::string(const json& request)>;

inline json chat_request(const LlmConfig& cfg, const std::string& system, const std::string& user) {
  json messages = json::array({json{{"role", "system"}, {"content", system}}});
  if (!user.empty()) messages.push_back(json{{"role", "user"}, {"content", user}});
  return json{{"model", cfg.model}, {"temperature", 0}, {"messages", std::move(messages)}};
}

inline ChatFn http_chat(const LlmConfig& cfg) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg.endpoint, m, url)) throw Error("llm_error", "bad LLM endpoint " + cfg.endpoint);
  const std::string host = m[1];
  const std::string path = m[2].matched ? std::string(m[2]) : "/v1/chat/completions";
  return [cfg, host, path](const json& request) {
    httplib::Client client(host);
    const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    auto res = client.Post(path, headers, request.dump(), "application/json");
    if (!res) throw Error("llm_error", "LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error("llm_error", "LLM endpoint returned HTTP " + std::to_string(res->status), json{{"body", res->body}});
    try {
      return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error("llm_error", std::string("unexpected LLM response: ") + e.what(), json{{"body", res->body}});
    }
  };
}

/// First {...} block of an LLM reply (replies often wrap JSON in prose or
/// code fences).
inline std::optional<json> extract_json_object(const std::string& text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  try {
    return json::parse(text.substr(open, close - open + 1));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace routex
