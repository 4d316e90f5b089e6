#pragma once

// Why/why-not questions. Steps are 1-based: edge t_ex is (order[t_ex-1],
// order[t_ex]) and the route has T-1 edges for T entries in its order.

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>
#include <vector>

#include "routex/core.hpp"
#include "routex/solver.hpp"

namespace routex {

struct WhyNotQuestion {
  Route actual_route;
  int t_ex = 1;
  Edge actual_edge;
  Edge cf_edge;

  bool operator==(const WhyNotQuestion&) const = default;
};

/// Nodes a CF edge may point to at step t_ex: unvisited nodes other than the
/// actual head, plus the depot where the kind allows going back to it.
inline bool cf_head_allowed(const VrpInstance& inst, const Route& route, int t_ex, int head) {
  if (head < 0 || std::size_t(head) >= inst.size()) return false;
  if (head == route.order.at(std::size_t(t_ex - 1)) || head == route.order.at(std::size_t(t_ex))) return false;
  if (head == kDepot) return has_capacity(inst.kind) || has_prizes(inst.kind);
  const auto visited_end = route.order.begin() + t_ex;  // order[0..t_ex-1] are visited before the edge
  return std::find(route.order.begin(), visited_end, head) == visited_end;
}

inline void validate_question(const VrpInstance& inst, const WhyNotQuestion& q) {
  const auto& r = q.actual_route;
  const int edges = int(r.num_edges());
  if (q.t_ex < 1 || q.t_ex > edges)
    throw Error("question_mismatch",
                "t_ex must be in [1, " + std::to_string(edges) + "], got " + std::to_string(q.t_ex),
                json{{"t_ex", q.t_ex}});
  const Edge actual = r.edge(std::size_t(q.t_ex - 1));
  if (q.actual_edge != actual)
    throw Error("question_mismatch", "actual edge does not match the route at step " + std::to_string(q.t_ex),
                json{{"actual_edge", q.actual_edge}, {"route_edge", actual}});
  if (q.cf_edge.tail != actual.tail)
    throw Error("question_mismatch", "counterfactual edge must leave " + inst.display_name(actual.tail),
                json{{"cf_edge", q.cf_edge}});
  if (q.cf_edge == actual)
    throw Error("question_mismatch", "counterfactual edge equals the actual edge", json{{"cf_edge", q.cf_edge}});
  if (!cf_head_allowed(inst, r, q.t_ex, q.cf_edge.head))
    throw Error("question_mismatch",
                "node " + std::to_string(q.cf_edge.head) + " cannot follow " + inst.display_name(actual.tail) +
                    " at step " + std::to_string(q.t_ex),
                json{{"cf_edge", q.cf_edge}});
}

/// Question for "why the edge at step t_ex, not one to cf_head?" on a route.
inline WhyNotQuestion make_question(const VrpInstance& inst, const Route& route, int t_ex, int cf_head) {
  WhyNotQuestion q;
  q.actual_route = route;
  q.t_ex = t_ex;
  if (t_ex >= 1 && std::size_t(t_ex) <= route.num_edges()) {
    q.actual_edge = route.edge(std::size_t(t_ex - 1));
    q.cf_edge = {q.actual_edge.tail, cf_head};
  }
  validate_question(inst, q);
  return q;
}

/// e_fixed: the actual edges before t_ex followed by the CF edge.
inline FixedPrefix cf_prefix(const WhyNotQuestion& q) {
  auto p = FixedPrefix::from_order(q.actual_route.order, std::size_t(q.t_ex - 1));
  p.edges.push_back(q.cf_edge);
  return p;
}

inline void to_json(json& j, const WhyNotQuestion& q) {
  j = json{{"actual_route", q.actual_route}, {"t_ex", q.t_ex}, {"actual_edge", q.actual_edge}, {"cf_edge", q.cf_edge}};
}

inline void from_json(const json& j, WhyNotQuestion& q) {
  q.actual_route = j.at("actual_route").get<Route>();
  q.t_ex = j.at("t_ex").get<int>();
  q.actual_edge = j.at("actual_edge").get<Edge>();
  q.cf_edge = j.at("cf_edge").get<Edge>();
}

// ---------------------------------------------------------------------------
// Resolving node references in free text

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : lower(s)) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Node index for a reference: an index, "node 7", a label, or a word of a
/// label that no other label contains (case-insensitive). -1 if unresolved.
inline int resolve_node(const VrpInstance& inst, const json& ref) {
  if (ref.is_number_integer()) {
    const int i = ref.get<int>();
    return i >= 0 && std::size_t(i) < inst.size() ? i : -1;
  }
  if (!ref.is_string()) return -1;
  const auto text = detail::lower(ref.get<std::string>());
  std::smatch m;
  static const std::regex numeric(R"(^\s*(?:node\s*)?(\d+)\s*$)");
  if (std::regex_match(text, m, numeric)) return resolve_node(inst, json(std::stoi(m[1])));
  for (std::size_t i = 0; i < inst.size(); ++i)
    if (inst.nodes[i].label && detail::lower(*inst.nodes[i].label) == text) return int(i);
  int found = -1;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (!inst.nodes[i].label) continue;
    const auto label = detail::lower(*inst.nodes[i].label);
    if (label.find(text) != std::string::npos || text.find(label) != std::string::npos) {
      if (found >= 0) return -1;  // ambiguous
      found = int(i);
    }
  }
  return found;
}

/// Positions in `text` where each node is mentioned, ordered by position.
inline std::vector<std::pair<std::size_t, int>> node_mentions(const VrpInstance& inst, const std::string& text) {
  const auto low = detail::lower(text);
  std::vector<std::vector<std::string>> label_words(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i)
    if (inst.nodes[i].label) label_words[i] = detail::words(*inst.nodes[i].label);

  auto unique_word = [&](std::size_t i, const std::string& w) {
    if (w.size() < 4) return false;
    for (std::size_t k = 0; k < inst.size(); ++k)
      if (k != i && std::find(label_words[k].begin(), label_words[k].end(), w) != label_words[k].end()) return false;
    return true;
  };
  auto word_at = [&](std::size_t pos, std::size_t len) {
    auto boundary = [&](std::size_t p) { return p >= low.size() || !std::isalnum(static_cast<unsigned char>(low[p])); };
    return (pos == 0 || boundary(pos - 1)) && boundary(pos + len);
  };

  std::vector<std::pair<std::size_t, int>> out;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    std::size_t best = std::string::npos;
    if (inst.nodes[i].label) {
      const auto full = detail::lower(*inst.nodes[i].label);
      best = low.find(full);
      for (const auto& w : label_words[i]) {
        if (!unique_word(i, w)) continue;
        // also accept the part before a hyphen, e.g. "Kiyomizu" for "Kiyomizu-dera"
        for (const auto& form : {w, w.substr(0, w.find('-'))}) {
          if (form.size() < 4) continue;
          for (auto p = low.find(form); p != std::string::npos; p = low.find(form, p + 1))
            if (word_at(p, form.size())) {
              best = std::min(best, p);
              break;
            }
        }
      }
    }
    const std::regex numbered("\\bnode\\s*" + std::to_string(i) + "\\b");
    std::smatch m;
    if (std::regex_search(low, m, numbered)) best = std::min(best, std::size_t(m.position(0)));
    if (best != std::string::npos) out.emplace_back(best, int(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Keyword reading of "why <head> after <tail>, instead of <cf>?" style
/// questions: finds a route edge whose endpoints are both mentioned and takes
/// another mentioned node as the CF head. Throws parse_failed when no such
/// reading exists.
inline WhyNotQuestion parse_question_keywords(const VrpInstance& inst, const Route& route, const std::string& text) {
  const auto mentions = node_mentions(inst, text);
  std::vector<int> named;
  for (const auto& [pos, node] : mentions) named.push_back(node);
  auto is_named = [&](int v) { return std::find(named.begin(), named.end(), v) != named.end(); };

  for (std::size_t t = 0; t < route.num_edges(); ++t) {
    const Edge e = route.edge(t);
    if (!is_named(e.tail) || !is_named(e.head) || e.tail == e.head) continue;
    for (int v : named) {
      if (v == e.tail || v == e.head) continue;
      if (!cf_head_allowed(inst, route, int(t) + 1, v)) continue;
      return make_question(inst, route, int(t) + 1, v);
    }
  }
  throw Error("parse_failed", "could not identify the actual and counterfactual edges in the question",
              json{{"question", text}});
}

}  // namespace routex
