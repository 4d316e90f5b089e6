#pragma once

// Counterfactual explanations for why/why-not questions: solve the CF route,
// label the edges of both routes, summarize the influence of the actual and
// CF edges, compare the summaries and phrase the result.

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "routex/annotator.hpp"
#include "routex/classifier.hpp"
#include "routex/explainer/llm.hpp"
#include "routex/explainer/question.hpp"
#include "routex/explainer/values.hpp"
#include "routex/solver.hpp"

namespace routex {

// ---------------------------------------------------------------------------
// Intentions

/// Labels every edge of a route with an intention class.
struct IntentionSource {
  std::string name;  // "classifier" or "annotator"
  std::vector<std::string> class_names;
  std::function<std::vector<int>(const VrpInstance&, const Route&)> classify;
};

inline IntentionSource classifier_intentions(const Checkpoint& ckpt) {
  auto model = std::make_shared<EdgeClassifier<float>>(ckpt.config, ckpt.params.cast<float>());
  IntentionSource s;
  s.name = "classifier";
  s.class_names = builtin_plan(ckpt.config.kind).class_names;
  s.classify = [model](const VrpInstance& inst, const Route& route) {
    return model->predict(encode_sample(inst, route, model->config()));
  };
  return s;
}

/// Rule-based labels from the annotator, for when no trained model is around.
/// Plain TSP has nothing to compare against: every edge is route_length.
inline IntentionSource annotator_intentions(ProblemKind kind, SolveFn solver) {
  IntentionSource s;
  s.name = "annotator";
  if (kind == ProblemKind::TSP) {
    s.class_names = {"route_length"};
    s.classify = [](const VrpInstance&, const Route& route) { return std::vector<int>(route.num_edges(), 0); };
    return s;
  }
  const auto plan = builtin_plan(kind);
  s.class_names = plan.class_names;
  s.classify = [plan, solver = std::move(solver)](const VrpInstance& inst, const Route& route) {
    return annotate_route(inst, route, plan, solver).labels;
  };
  return s;
}

// ---------------------------------------------------------------------------
// Bundle

enum class TextSource { template_text, llm };

inline std::string_view to_string(TextSource s) { return s == TextSource::llm ? "llm" : "template"; }

struct ExplanationBundle {
  WhyNotQuestion question;
  std::vector<Edge> e_fixed;
  Route cf_route;
  std::string intention_source;
  std::vector<std::string> class_names;
  std::vector<int> actual_intentions;
  std::vector<int> cf_intentions;
  InfluenceTuple actual_influence;
  InfluenceTuple cf_influence;
  RepresentativeValues rep_actual;
  RepresentativeValues rep_cf;
  Comparison comparison;
  std::vector<int> cf_unvisited;  // required nodes the CF route leaves out
  std::string text;
  TextSource text_source = TextSource::template_text;
  std::vector<std::string> warnings;

  bool operator==(const ExplanationBundle&) const = default;
};

inline void to_json(json& j, const ExplanationBundle& b) {
  j = json{{"question", b.question},
           {"e_fixed", b.e_fixed},
           {"cf_route", b.cf_route},
           {"intention_source", b.intention_source},
           {"class_names", b.class_names},
           {"actual_intentions", b.actual_intentions},
           {"cf_intentions", b.cf_intentions},
           {"actual_influence", b.actual_influence},
           {"cf_influence", b.cf_influence},
           {"rep_actual", b.rep_actual},
           {"rep_cf", b.rep_cf},
           {"comparison", b.comparison},
           {"cf_unvisited", b.cf_unvisited},
           {"text", b.text},
           {"text_source", std::string(to_string(b.text_source))},
           {"warnings", b.warnings}};
}

inline void from_json(const json& j, ExplanationBundle& b) {
  b.question = j.at("question").get<WhyNotQuestion>();
  b.e_fixed = j.at("e_fixed").get<std::vector<Edge>>();
  b.cf_route = j.at("cf_route").get<Route>();
  b.intention_source = j.at("intention_source").get<std::string>();
  b.class_names = j.at("class_names").get<std::vector<std::string>>();
  b.actual_intentions = j.at("actual_intentions").get<std::vector<int>>();
  b.cf_intentions = j.at("cf_intentions").get<std::vector<int>>();
  b.actual_influence = j.at("actual_influence").get<InfluenceTuple>();
  b.cf_influence = j.at("cf_influence").get<InfluenceTuple>();
  b.rep_actual = j.at("rep_actual").get<RepresentativeValues>();
  b.rep_cf = j.at("rep_cf").get<RepresentativeValues>();
  b.comparison = j.at("comparison").get<Comparison>();
  b.cf_unvisited = j.value("cf_unvisited", std::vector<int>{});
  b.text = j.at("text").get<std::string>();
  b.text_source = j.at("text_source").get<std::string>() == "llm" ? TextSource::llm : TextSource::template_text;
  b.warnings = j.value("warnings", std::vector<std::string>{});
}

// ---------------------------------------------------------------------------
// Text

namespace detail {

inline std::string fmt(double v, bool sign = false) {
  char buf[64];
  std::snprintf(buf, sizeof buf, sign ? "%+.3f" : "%.3f", std::abs(v) < 5e-4 ? 0.0 : v);
  return buf;
}

inline std::string intention_name(const std::vector<std::string>& names, const std::vector<int>& labels, int t) {
  const int y = labels.at(std::size_t(t - 1));
  return y >= 0 && std::size_t(y) < names.size() ? names[std::size_t(y)] : std::to_string(y);
}

// true when a larger value is better for the route
inline bool is_benefit(const std::string& key) {
  return key == "feasibility_ratio" || key == "total_prize";
}

inline std::string describe(const std::string& key) {
  if (key == "short_term_objective") return "objective right after the edge";
  if (key == "long_term_objective") return "objective of the whole route";
  if (key == "class_ratio") return "share of later edges that follow the shortest tour";
  if (key == "feasibility_ratio") return "share of the remaining stops that still get visited";
  if (key == "total_length") return "total distance";
  if (key == "late_arrivals") return "late arrivals from this step on";
  if (key == "total_prize") return "collected prize";
  if (key == "unvisited_penalty") return "penalty for skipped stops";
  if (key == "final_travel_time") return "finishing time";
  if (key == "depot_returns") return "returns to the depot";
  if (key == "capacity_violations") return "capacity overruns";
  return "value";
}

}  // namespace detail

/// Deterministic explanation naming every comparison key exactly once.
inline std::string render_template(const VrpInstance& inst, const ExplanationBundle& b) {
  const auto& q = b.question;
  std::ostringstream out;
  out << "At step " << q.t_ex << " the route goes from " << inst.display_name(q.actual_edge.tail) << " to "
      << inst.display_name(q.actual_edge.head) << " instead of " << inst.display_name(q.cf_edge.head) << ".\n";
  out << "The actual edge prioritizes " << detail::intention_name(b.class_names, b.actual_intentions, q.t_ex)
      << "; the counterfactual edge prioritizes " << detail::intention_name(b.class_names, b.cf_intentions, q.t_ex)
      << ".\n";
  out << "Comparison (counterfactual minus actual):\n";
  for (const auto& [key, diff] : b.comparison) {
    const auto a = flatten(b.rep_actual).at(key);
    const auto c = flatten(b.rep_cf).at(key);
    std::string verdict;
    if (std::abs(diff) < 1e-9) {
      verdict = "no change";
    } else if (key == "class_ratio") {
      verdict = diff > 0 ? "higher with the counterfactual edge" : "lower with the counterfactual edge";
    } else {
      const bool cf_better = detail::is_benefit(key) ? diff > 0 : diff < 0;
      verdict = cf_better ? "better with the counterfactual edge" : "worse with the counterfactual edge";
    }
    out << "- " << key << " (" << detail::describe(key) << "): " << detail::fmt(a) << " -> " << detail::fmt(c)
        << ", " << detail::fmt(diff, true) << ", " << verdict << ".\n";
  }
  if (!b.cf_unvisited.empty()) {
    out << "The counterfactual route can no longer visit:";
    for (std::size_t i = 0; i < b.cf_unvisited.size(); ++i) {
      const int v = b.cf_unvisited[i];
      out << (i ? ", " : " ") << inst.display_name(v);
      if (inst.nodes[std::size_t(v)].remarks) out << " (" << *inst.nodes[std::size_t(v)].remarks << ")";
    }
    out << ".\n";
  }
  return out.str();
}

/// The comparison as handed to the explanation prompt.
inline json explanation_input(const VrpInstance& inst, const ExplanationBundle& b) {
  const auto& q = b.question;
  json skipped = json::array();
  for (int v : b.cf_unvisited) {
    json s{{"name", inst.display_name(v)}};
    if (inst.nodes[std::size_t(v)].remarks) s["remarks"] = *inst.nodes[std::size_t(v)].remarks;
    skipped.push_back(std::move(s));
  }
  return json{{"question",
               {{"step", q.t_ex},
                {"from", inst.display_name(q.actual_edge.tail)},
                {"actual_to", inst.display_name(q.actual_edge.head)},
                {"cf_to", inst.display_name(q.cf_edge.head)}}},
              {"actual",
               {{"intention", detail::intention_name(b.class_names, b.actual_intentions, q.t_ex)},
                {"values", b.rep_actual}}},
              {"cf",
               {{"intention", detail::intention_name(b.class_names, b.cf_intentions, q.t_ex)},
                {"values", b.rep_cf},
                {"unvisited", skipped}}},
              {"comparison", b.comparison}};
}

struct TextOptions {
  ChatFn chat;  // empty: template text
  PromptSet prompts;
  std::string user_question;  // original wording, forwarded to the LLM when present
};

inline json explanation_request(const VrpInstance& inst, const ExplanationBundle& b, const TextOptions& opts,
                                const LlmConfig& cfg = {}) {
  const auto system = fill_template(opts.prompts.explanation, {{"input", explanation_input(inst, b).dump()}});
  return chat_request(cfg, system, opts.user_question);
}

/// Sets text and text_source; an LLM failure falls back to the template and
/// is recorded in warnings.
inline void render_text(const VrpInstance& inst, ExplanationBundle& b, const TextOptions& opts,
                        const LlmConfig& cfg = {}) {
  if (opts.chat) {
    try {
      b.text = opts.chat(explanation_request(inst, b, opts, cfg));
      b.text_source = TextSource::llm;
      return;
    } catch (const std::exception& e) {
      b.warnings.push_back(std::string("LLM unavailable, using template text: ") + e.what());
    }
  }
  b.text = render_template(inst, b);
  b.text_source = TextSource::template_text;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Best route that keeps the actual edges before t_ex and then takes the CF
/// edge. Violations caused by the CF edge stay flagged on the route.
inline Route generate_cf_route(const VrpInstance& inst, const WhyNotQuestion& q, const SolveFn& solver) {
  validate_question(inst, q);
  return solver(inst, inst.kind, cf_prefix(q));
}

inline ExplanationBundle explain(const VrpInstance& inst, const WhyNotQuestion& q, const SolveFn& solver,
                                 const IntentionSource& intentions, const TextOptions& text = {},
                                 const LlmConfig& llm = {}) {
  validate_question(inst, q);
  ExplanationBundle b;
  b.question = q;
  b.e_fixed = cf_prefix(q).edges;
  b.cf_route = generate_cf_route(inst, q, solver);
  b.intention_source = intentions.name;
  b.class_names = intentions.class_names;
  b.actual_intentions = intentions.classify(inst, q.actual_route);
  b.cf_intentions = intentions.classify(inst, b.cf_route);
  b.actual_influence = influence(q.actual_route, b.actual_intentions, q.t_ex);
  b.cf_influence = influence(b.cf_route, b.cf_intentions, q.t_ex);
  b.rep_actual = representative_values(inst, q.actual_route, b.actual_intentions, q.t_ex);
  b.rep_cf = representative_values(inst, b.cf_route, b.cf_intentions, q.t_ex);
  b.comparison = compare(b.rep_actual, b.rep_cf);
  if (!has_prizes(inst.kind)) b.cf_unvisited = unvisited_nodes(inst, b.cf_route);
  render_text(inst, b, text, llm);
  return b;
}

// ---------------------------------------------------------------------------
// Reading questions

/// Route listing embedded in the question prompt.
inline std::string route_info(const VrpInstance& inst, const Route& route) {
  std::ostringstream out;
  for (std::size_t t = 0; t < route.num_edges(); ++t) {
    const auto e = route.edge(t);
    out << "step " << t + 1 << ": " << inst.display_name(e.tail) << " (node " << e.tail << ") -> "
        << inst.display_name(e.head) << " (node " << e.head << ")";
    if (route.states[t + 1].travel_time) out << ", arrive by " << detail::fmt(*route.states[t + 1].travel_time);
    out << "\n";
  }
  return out.str();
}

/// A question is either structured ({"t_ex", "cf_to"}; cf_to may be an index
/// or a name) or free text. Free text goes to the LLM when one is configured
/// and to the keyword reader otherwise.
inline WhyNotQuestion parse_question(const VrpInstance& inst, const Route& route, const json& input,
                                     const ChatFn& chat = {}, const PromptSet& prompts = {},
                                     const LlmConfig& cfg = {}) {
  auto structured = [&](const json& j, const json& raw) {
    const json target = j.contains("cf_to") ? j.at("cf_to") : j.value("cf_target_node", json());
    if (!j.contains("t_ex") || !j.at("t_ex").is_number_integer() || target.is_null())
      throw Error("parse_failed", "expected {\"t_ex\": int, \"cf_to\": node}", json{{"raw", raw}});
    const int node = resolve_node(inst, target);
    if (node < 0) throw Error("question_mismatch", "unknown node " + target.dump(), json{{"question", raw}});
    try {
      return make_question(inst, route, j.at("t_ex").get<int>(), node);
    } catch (Error& e) {
      throw Error(e.code(), e.what(), json{{"question", raw}, {"details", e.details()}});
    }
  };

  if (input.is_object()) return structured(input, input);
  if (!input.is_string()) throw Error("parse_failed", "question must be text or an object", json{{"raw", input}});
  const auto text = input.get<std::string>();
  if (!chat) {
    try {
      return parse_question_keywords(inst, route, text);
    } catch (Error& e) {
      throw Error(e.code(), e.what(), json{{"question", text}});
    }
  }
  const auto system =
      fill_template(prompts.question, {{"route_info", route_info(inst, route)}, {"whynot_question", text}});
  const auto reply = chat(chat_request(cfg, system, ""));
  const auto parsed = extract_json_object(reply);
  if (!parsed) throw Error("parse_failed", "LLM reply is not JSON", json{{"raw", reply}, {"question", text}});
  return structured(*parsed, json{{"question", text}, {"raw", reply}});
}

}  // namespace routex
