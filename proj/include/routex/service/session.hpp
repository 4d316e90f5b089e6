#pragma once

// Explanation sessions: one instance, the route currently proposed for it,
// and the questions asked so far. Stored as one JSON document per session.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "routex/explainer.hpp"

namespace routex {

enum class Decision { kept, replaced };

inline std::string_view to_string(Decision d) { return d == Decision::kept ? "kept" : "replaced"; }

struct HistoryEntry {
  std::string bundle_id;
  json question;  // as asked: text or structured
  ExplanationBundle bundle;
  std::optional<Decision> decision;
  std::string asked_at;
  std::optional<std::string> decided_at;
};

struct Session {
  std::string id;
  std::string created_at;
  VrpInstance instance;
  Route route;
  std::vector<int> intentions;
  std::vector<std::string> class_names;
  std::vector<HistoryEntry> history;

  const HistoryEntry* find(const std::string& bundle_id) const {
    for (const auto& h : history)
      if (h.bundle_id == bundle_id) return &h;
    return nullptr;
  }
};

inline void to_json(json& j, const HistoryEntry& h) {
  j = json{{"bundle_id", h.bundle_id},
           {"question", h.question},
           {"bundle", h.bundle},
           {"decision", h.decision ? json(std::string(to_string(*h.decision))) : json()},
           {"asked_at", h.asked_at},
           {"decided_at", h.decided_at ? json(*h.decided_at) : json()}};
}

inline void from_json(const json& j, HistoryEntry& h) {
  h.bundle_id = j.at("bundle_id").get<std::string>();
  h.question = j.at("question");
  h.bundle = j.at("bundle").get<ExplanationBundle>();
  h.decision.reset();
  if (!j.at("decision").is_null())
    h.decision = j.at("decision").get<std::string>() == "kept" ? Decision::kept : Decision::replaced;
  h.asked_at = j.at("asked_at").get<std::string>();
  h.decided_at = detail::optional_field<std::string>(j, "decided_at");
}

inline void to_json(json& j, const Session& s) {
  j = json{{"id", s.id},
           {"created_at", s.created_at},
           {"instance", s.instance},
           {"route", s.route},
           {"intentions", s.intentions},
           {"class_names", s.class_names},
           {"history", s.history}};
}

inline void from_json(const json& j, Session& s) {
  s.id = j.at("id").get<std::string>();
  s.created_at = j.at("created_at").get<std::string>();
  s.instance = j.at("instance").get<VrpInstance>();
  s.route = j.at("route").get<Route>();
  s.intentions = j.at("intentions").get<std::vector<int>>();
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
  s.history = j.at("history").get<std::vector<HistoryEntry>>();
}

/// 128 random bits as 32 hex digits.
inline std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}() ^ (std::uint64_t(std::random_device{}()) << 32)};
  std::lock_guard lock(mu);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, int(ms));
  return buf;
}

/// Sessions on disk, <dir>/<id>.json, replaced atomically by rename. Callers
/// take lock(id) around read-modify-write sequences.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const { return dir_; }

  std::unique_lock<std::mutex> lock(const std::string& id) {
    std::shared_ptr<std::mutex> m;
    {
      std::lock_guard g(table_mu_);
      auto& slot = locks_[id];
      if (!slot) slot = std::make_shared<std::mutex>();
      m = slot;
    }
    // the table keeps the mutex alive; entries are never erased
    return std::unique_lock<std::mutex>(*m);
  }

  bool exists(const std::string& id) const { return valid_id(id) && std::filesystem::exists(path(id)); }

  Session load(const std::string& id) const {
    if (!exists(id)) throw Error("not_found", "no session " + id);
    std::ifstream in(path(id));
    try {
      return json::parse(in).get<Session>();
    } catch (const json::exception& e) {
      throw Error("corrupt_session", std::string("session ") + id + " cannot be read: " + e.what());
    }
  }

  void save(const Session& s) {
    if (!valid_id(s.id)) throw Error("invalid_session_id", "bad session id");
    const auto tmp = dir_ / (s.id + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error("io_error", "cannot write " + tmp.string());
      out << json(s).dump() << '\n';
      out.flush();
      if (!out) throw Error("io_error", "write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path(s.id));
  }

  bool remove(const std::string& id) { return valid_id(id) && std::filesystem::remove(path(id)); }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      const auto name = entry.path().filename().string();
      if (name.size() == 37 && name.ends_with(".json")) ids.push_back(name.substr(0, 32));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  static bool valid_id(const std::string& id) {
    return id.size() == 32 && std::all_of(id.begin(), id.end(), [](char c) {
             return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
  }

 private:
  std::filesystem::path path(const std::string& id) const { return dir_ / (id + ".json"); }

  std::filesystem::path dir_;
  std::mutex table_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace routex
