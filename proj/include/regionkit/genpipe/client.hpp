#pragma once

// Chat-completion client: retry with exponential backoff, an append-only
// JSONL request log, replay of completed replies from that log, and a
// bounded worker pool for batches.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/hash.hpp"
#include "regionkit/io/serialize.hpp"
#include "regionkit/promptgen/prompt.hpp"

namespace regionkit::genpipe {

struct HttpResult {
  int status = 0;
  std::string body;
};

/// Sends one request body and returns the HTTP status and body. Throws
/// TransportError (or any std::exception) on network failure.
using Transport = std::function<HttpResult(const std::string& body)>;

inline constexpr std::string_view kDefaultModel = "chat-model";
inline constexpr double kDefaultTemperature = 0.7;

struct GenerationRequest {
  std::string request_id;
  std::vector<promptgen::ChatMessage> messages;
  std::string model_name = std::string(kDefaultModel);
  double temperature = kDefaultTemperature;
  std::size_t max_attempts = 3;

  io::json body() const {
    return {{"model", model_name},
            {"messages", promptgen::to_json(messages)},
            {"temperature", temperature}};
  }
};

/// The request id is a content hash of the wire body, so identical
/// requests share an id across runs.
inline GenerationRequest make_request(std::vector<promptgen::ChatMessage> messages,
                                      std::string model_name = std::string(kDefaultModel),
                                      double temperature = kDefaultTemperature,
                                      std::size_t max_attempts = 3) {
  if (!promptgen::has_prompt_shape(messages)) {
    throw ConfigError("messages must read system (user assistant)* user");
  }
  if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
  GenerationRequest req{"", std::move(messages), std::move(model_name), temperature, max_attempts};
  req.request_id = content_hash(io::dump_line(req.body()));
  return req;
}

inline bool is_retryable_status(int status) {
  return status == 408 || status == 425 || status == 429 || (status >= 500 && status <= 599);
}

/// Pulls choices[0].message.content out of a completion response.
inline std::string extract_reply_content(int status, const std::string& body) {
  try {
    auto j = io::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const io::json::exception&) {
    throw ServiceError(status, "unexpected response body: " + body.substr(0, 200));
  }
}

inline std::string utc_timestamp() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

/// Append-only JSONL log of requests, attempts and raw replies. Safe to
/// share between worker threads.
class RequestLog {
 public:
  explicit RequestLog(std::ostream& out) : out_(out) {}

  void write(io::json entry) {
    entry["time"] = utc_timestamp();
    std::lock_guard<std::mutex> lock(mu_);
    io::write_jsonl(out_, entry);
    out_.flush();
  }

 private:
  std::ostream& out_;
  std::mutex mu_;
};

/// request_id -> reply content for every request that completed in a log.
inline std::unordered_map<std::string, std::string> load_completed_replies(std::istream& in) {
  std::unordered_map<std::string, std::string> out;
  io::for_each_jsonl(
      in,
      [&](std::size_t, const io::json& j) {
        if (j.value("event", "") == "reply" && j.contains("request_id") && j.contains("content")) {
          out[j["request_id"].get<std::string>()] = j["content"].get<std::string>();
        }
      },
      // A torn last line from an interrupted run is skipped.
      [](std::size_t, const std::string&) {});
  return out;
}

struct ClientOptions {
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

class ChatClient {
 public:
  ChatClient(Transport transport, ClientOptions options = {}, RequestLog* log = nullptr)
      : transport_(std::move(transport)), options_(std::move(options)), log_(log) {}

  /// Replies already in a previous log are returned without a network call.
  void set_completed(std::unordered_map<std::string, std::string> completed) {
    completed_ = std::move(completed);
  }

  std::size_t replayed() const { return replayed_.load(); }

  std::string generate(const GenerationRequest& req) {
    if (auto it = completed_.find(req.request_id); it != completed_.end()) {
      ++replayed_;
      return it->second;
    }
    if (req.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
    const std::string body = io::dump_line(req.body());
    log({{"event", "request"}, {"request_id", req.request_id}, {"body", req.body()}});
    std::string last_error;
    for (std::size_t attempt = 1; attempt <= req.max_attempts; ++attempt) {
      if (attempt > 1) options_.sleep(backoff(attempt - 1));
      HttpResult res;
      try {
        res = transport_(body);
      } catch (const std::exception& e) {
        last_error = e.what();
        log({{"event", "attempt"}, {"request_id", req.request_id}, {"attempt", attempt},
             {"error", last_error}});
        continue;
      }
      log({{"event", "attempt"}, {"request_id", req.request_id}, {"attempt", attempt},
           {"status", res.status}});
      if (res.status >= 200 && res.status < 300) {
        std::string content;
        try {
          content = extract_reply_content(res.status, res.body);
        } catch (const ServiceError& e) {
          log({{"event", "failure"}, {"request_id", req.request_id}, {"error", e.what()}});
          throw;
        }
        log({{"event", "reply"}, {"request_id", req.request_id}, {"content", content}});
        return content;
      }
      if (!is_retryable_status(res.status)) {
        ServiceError err(res.status, res.body.substr(0, 200));
        log({{"event", "failure"}, {"request_id", req.request_id}, {"error", err.what()}});
        throw err;
      }
      last_error = "HTTP " + std::to_string(res.status);
    }
    std::string msg = "request " + req.request_id + " failed after " +
                      std::to_string(req.max_attempts) + " attempts: " + last_error;
    log({{"event", "failure"}, {"request_id", req.request_id}, {"error", msg}});
    throw TransportError(msg);
  }

 private:
  std::chrono::milliseconds backoff(std::size_t retry) const {
    auto d = options_.base_delay;
    for (std::size_t i = 1; i < retry && d < options_.max_delay; ++i) d *= 2;
    return std::min(d, options_.max_delay);
  }

  void log(io::json entry) {
    if (log_) log_->write(std::move(entry));
  }

  Transport transport_;
  ClientOptions options_;
  RequestLog* log_;
  std::unordered_map<std::string, std::string> completed_;
  std::atomic<std::size_t> replayed_{0};
};

struct BatchOutcome {
  std::optional<std::string> reply;
  std::string error;
};

/// Runs every request with at most `concurrency` in flight. Outcomes are
/// returned in input order.
inline std::vector<BatchOutcome> run_batch(ChatClient& client,
                                           const std::vector<GenerationRequest>& requests,
                                           std::size_t concurrency = 4) {
  std::vector<BatchOutcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        out[i].reply = client.generate(requests[i]);
      } catch (const Error& e) {
        out[i].error = e.what();
      }
    }
  };
  std::size_t n = std::max<std::size_t>(1, std::min(concurrency, requests.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace regionkit::genpipe
