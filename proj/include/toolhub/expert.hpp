#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "toolhub/protocol.hpp"

namespace toolhub::expert {

enum class RequestStatus { Pending, Claimed, Answered, Expired };
enum class Verdict { Approve, Reject, FreeText };

std::string_view to_string(RequestStatus s);
std::optional<RequestStatus> request_status_from_string(std::string_view s);
std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from_string(std::string_view s);

struct ExpertResponse {
    std::string request_id;
    Verdict verdict = Verdict::FreeText;
    std::string text;
    std::string expert_id;
    double answered_at = 0.0;  // seconds since the epoch
};

struct ExpertRequest {
    std::string id;
    std::string question;
    json context;
    RequestStatus status = RequestStatus::Pending;
    double created_at = 0.0;
    double timeout_seconds = 3600.0;
    /// created_at + timeout_seconds + late-answer window. Past this point an
    /// unanswered request is expired and no longer accepts answers.
    double expires_at = 0.0;
    std::string claimed_by;
    std::optional<ExpertResponse> response;
};

json to_json(const ExpertResponse& r);
json to_json(const ExpertRequest& r);
ExpertResponse expert_response_from_json(const json& j);
ExpertRequest expert_request_from_json(const json& j);

inline constexpr double kDefaultConsultTimeout = 3600.0;
inline constexpr double kDefaultLateAnswerWindow = 3600.0;

struct QueueOptions {
    std::optional<std::filesystem::path> journal;
    double late_answer_window = kDefaultLateAnswerWindow;
    std::function<double()> clock;  // epoch seconds; defaults to system_clock
};

enum class Outcome { Ok, NotFound, Conflict, Expired, Invalid };

struct Event {
    std::uint64_t seq = 0;
    std::string type;  // created, claimed, answered, expired
    json request;
};

/// The single serialization point for expert requests. Every state change is
/// appended to the journal (one JSON object per line) before it becomes
/// visible; the journal is replayed on construction.
class ExpertQueue {
public:
    explicit ExpertQueue(QueueOptions options = {});

    ExpertRequest create(const std::string& question, json context = json::object(),
                         double timeout_seconds = kDefaultConsultTimeout);
    std::optional<ExpertRequest> get(const std::string& id);
    /// Creation order; optionally only one status.
    std::vector<ExpertRequest> list(std::optional<RequestStatus> status = std::nullopt);

    /// Idempotent for the same expert; another expert gets Conflict.
    Outcome claim(const std::string& id, const std::string& expert_id, ExpertRequest* out = nullptr);
    /// Accepted from anyone while unanswered and unexpired.
    Outcome respond(const std::string& id, Verdict verdict, const std::string& text, const std::string& expert_id,
                    ExpertRequest* out = nullptr);

    /// Blocks until the request is answered or expired, or the timeout passes.
    /// Returns the record at that point (nullopt for an unknown id).
    std::optional<ExpertRequest> wait(const std::string& id, double timeout_seconds);

    /// 1-based position among pending requests, 0 when not pending.
    std::size_t position(const std::string& id);

    std::vector<std::string> expire_due();

    /// Events with seq > after_seq, waiting up to timeout for at least one.
    std::vector<Event> events_since(std::uint64_t after_seq, double timeout_seconds);
    std::uint64_t last_seq();
    /// Wakes every blocked wait()/events_since().
    void shutdown();

    double now() const { return options_.clock(); }

private:
    void replay();
    void append(const json& line);
    void publish(const std::string& type, const ExpertRequest& r);
    std::vector<std::string> expire_due_locked();
    ExpertRequest* find_locked(const std::string& id);

    QueueOptions options_;
    std::mutex mutex_;
    std::condition_variable changed_;
    std::map<std::string, ExpertRequest> requests_;
    std::vector<std::string> order_;
    std::uint64_t next_id_ = 1;
    std::ofstream journal_;
    std::deque<Event> events_;
    std::uint64_t seq_ = 0;
    bool shutdown_ = false;
};

/// HTTP API over an ExpertQueue:
///   POST /api/requests                      create
///   GET  /api/requests?status=...           list (creation order)
///   GET  /api/requests/{id}                 record
///   GET  /api/requests/{id}/status          status and queue position
///   GET  /api/requests/{id}/wait?timeout=s  long poll until answered (408 on timeout)
///   POST /api/requests/{id}/claim           {expert_id}
///   POST /api/requests/{id}/response        {verdict, text, expert_id}
///   GET  /api/events                        server-sent events, heartbeat every 15 s
class ExpertServer {
public:
    ExpertServer(ExpertQueue& queue, const std::string& bind, double heartbeat_seconds = 15.0);
    ~ExpertServer();

    ExpertServer(const ExpertServer&) = delete;
    ExpertServer& operator=(const ExpertServer&) = delete;

    int port() const;
    std::string url() const;
    void stop();
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Client used by the expert tools. Transport failures raise
/// ToolFailure(ExpertUnavailable).
class ExpertClient {
public:
    explicit ExpertClient(std::string base_url);

    ExpertRequest create(const std::string& question, const json& context, double timeout_seconds);
    /// nullopt when the id is unknown.
    std::optional<ExpertRequest> get(const std::string& id);
    /// Long-polls until answered/expired or the timeout passes.
    std::optional<ExpertRequest> wait(const std::string& id, double timeout_seconds);
    /// {status, position}; nullopt when the id is unknown.
    std::optional<json> status(const std::string& id);

private:
    std::string base_url_;
};

/// Expert server URL from a tool's settings ("expert_url") or the
/// TOOLHUB_EXPERT_URL environment variable; "" when neither is set.
std::string expert_url_from(const json& settings);

/// Payload of an answered request as returned by the expert tools.
json response_payload(const ExpertRequest& r);

}  // namespace toolhub::expert
