#pragma once

// Background jobs run one at a time on a worker thread; state is polled.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "routex/service/session.hpp"

namespace routex {

enum class JobState { queued, running, done, failed };

inline std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

class JobQueue {
 public:
  /// The task may call `progress` with any JSON; its return value becomes
  /// the job result.
  using Task = std::function<json(const std::function<void(json)>& progress)>;

  JobQueue() : worker_([this] { run(); }) {}

  ~JobQueue() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  std::string submit(std::string kind, Task task) {
    const auto id = random_id();
    {
      std::lock_guard lock(mu_);
      jobs_[id] = Job{std::move(kind), JobState::queued, json(), json(), json(), utc_now()};
      pending_.emplace_back(id, std::move(task));
    }
    cv_.notify_all();
    return id;
  }

  json status(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error("not_found", "no job " + id);
    const auto& j = it->second;
    json out{{"id", id}, {"kind", j.kind}, {"state", std::string(to_string(j.state))}, {"submitted_at", j.submitted_at}};
    if (!j.progress.is_null()) out["progress"] = j.progress;
    if (!j.result.is_null()) out["result"] = j.result;
    if (!j.error.is_null()) out["error"] = j.error;
    return out;
  }

  /// Blocks until the job has finished; for tests and the CLI.
  json wait(const std::string& id) {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] {
      auto it = jobs_.find(id);
      return it == jobs_.end() || it->second.state == JobState::done || it->second.state == JobState::failed;
    });
    lock.unlock();
    return status(id);
  }

 private:
  struct Job {
    std::string kind;
    JobState state;
    json progress, result, error;
    std::string submitted_at;
  };

  void run() {
    for (;;) {
      std::pair<std::string, Task> next;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
        if (pending_.empty()) return;  // stopping with nothing left
        next = std::move(pending_.front());
        pending_.pop_front();
        jobs_[next.first].state = JobState::running;
      }
      const auto& id = next.first;
      json result, error;
      bool ok = true;
      try {
        result = next.second([&](json p) {
          std::lock_guard lock(mu_);
          jobs_[id].progress = std::move(p);
        });
      } catch (const Error& e) {
        ok = false;
        error = e.to_json();
      } catch (const std::exception& e) {
        ok = false;
        error = json{{"error", "internal"}, {"message", e.what()}};
      }
      {
        std::lock_guard lock(mu_);
        auto& job = jobs_[id];
        job.state = ok ? JobState::done : JobState::failed;
        job.result = std::move(result);
        job.error = std::move(error);
      }
      done_cv_.notify_all();
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::deque<std::pair<std::string, Task>> pending_;
  std::map<std::string, Job> jobs_;
  bool stopping_ = false;
  std::thread worker_;  // last: started after the other members exist
};

}  // namespace routex
