#include "toolhub/expert.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace toolhub::expert {

std::string_view to_string(RequestStatus s) {
    switch (s) {
        case RequestStatus::Pending: return "pending";
        case RequestStatus::Claimed: return "claimed";
        case RequestStatus::Answered: return "answered";
        case RequestStatus::Expired: return "expired";
    }
    return "pending";
}

std::optional<RequestStatus> request_status_from_string(std::string_view s) {
    if (s == "pending") return RequestStatus::Pending;
    if (s == "claimed") return RequestStatus::Claimed;
    if (s == "answered") return RequestStatus::Answered;
    if (s == "expired") return RequestStatus::Expired;
    return std::nullopt;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Approve: return "approve";
        case Verdict::Reject: return "reject";
        case Verdict::FreeText: return "free-text";
    }
    return "free-text";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
    if (s == "approve") return Verdict::Approve;
    if (s == "reject") return Verdict::Reject;
    if (s == "free-text") return Verdict::FreeText;
    return std::nullopt;
}

json to_json(const ExpertResponse& r) {
    return json{{"request_id", r.request_id},
                {"verdict", std::string(to_string(r.verdict))},
                {"text", r.text},
                {"expert_id", r.expert_id},
                {"answered_at", r.answered_at}};
}

json to_json(const ExpertRequest& r) {
    return json{{"id", r.id},
                {"question", r.question},
                {"context", r.context},
                {"status", std::string(to_string(r.status))},
                {"created_at", r.created_at},
                {"timeout_seconds", r.timeout_seconds},
                {"expires_at", r.expires_at},
                {"claimed_by", r.claimed_by.empty() ? json() : json(r.claimed_by)},
                {"answered_at", r.response ? json(r.response->answered_at) : json()},
                {"response", r.response ? to_json(*r.response) : json()}};
}

ExpertResponse expert_response_from_json(const json& j) {
    ExpertResponse r;
    r.request_id = j.at("request_id").get<std::string>();
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>()).value_or(Verdict::FreeText);
    r.text = j.value("text", std::string());
    r.expert_id = j.value("expert_id", std::string());
    r.answered_at = j.value("answered_at", 0.0);
    return r;
}

ExpertRequest expert_request_from_json(const json& j) {
    ExpertRequest r;
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.context = j.value("context", json::object());
    r.status = request_status_from_string(j.value("status", std::string("pending"))).value_or(RequestStatus::Pending);
    r.created_at = j.value("created_at", 0.0);
    r.timeout_seconds = j.value("timeout_seconds", kDefaultConsultTimeout);
    r.expires_at = j.value("expires_at", 0.0);
    if (j.contains("claimed_by") && j["claimed_by"].is_string()) r.claimed_by = j["claimed_by"].get<std::string>();
    if (j.contains("response") && j["response"].is_object()) r.response = expert_response_from_json(j["response"]);
    return r;
}

// --- queue -----------------------------------------------------------------------

namespace {

double system_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string format_id(std::uint64_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "req-%06llu", static_cast<unsigned long long>(n));
    return buf;
}

constexpr std::size_t kEventBacklog = 1024;

}  // namespace

ExpertQueue::ExpertQueue(QueueOptions options) : options_(std::move(options)) {
    if (!options_.clock) options_.clock = system_now;
    if (options_.journal) {
        replay();
        journal_.open(*options_.journal, std::ios::app);
        if (!journal_) throw std::runtime_error("cannot open journal " + options_.journal->string());
    }
}

void ExpertQueue::replay() {
    std::ifstream in(*options_.journal);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        json ev = json::parse(line, nullptr, false);
        if (ev.is_discarded() || !ev.is_object()) continue;  // torn final write
        const std::string type = ev.value("event", std::string());
        try {
            if (type == "created") {
                ExpertRequest r = expert_request_from_json(ev.at("request"));
                if (!requests_.count(r.id)) order_.push_back(r.id);
                if (r.id.size() > 4) next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(r.id.substr(4)) + 1);
                requests_[r.id] = std::move(r);
                continue;
            }
            ExpertRequest* r = find_locked(ev.at("id").get<std::string>());
            if (!r) continue;
            if (type == "claimed") {
                r->claimed_by = ev.at("expert_id").get<std::string>();
                r->status = RequestStatus::Claimed;
            } else if (type == "answered") {
                r->response = expert_response_from_json(ev.at("response"));
                r->status = RequestStatus::Answered;
            } else if (type == "expired") {
                r->status = RequestStatus::Expired;
            }
        } catch (const std::exception&) {
            continue;
        }
    }
}

void ExpertQueue::append(const json& line) {
    if (!journal_.is_open()) return;
    journal_ << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    journal_.flush();
}

void ExpertQueue::publish(const std::string& type, const ExpertRequest& r) {
    events_.push_back({++seq_, type, to_json(r)});
    if (events_.size() > kEventBacklog) events_.pop_front();
    changed_.notify_all();
}

ExpertRequest* ExpertQueue::find_locked(const std::string& id) {
    auto it = requests_.find(id);
    return it == requests_.end() ? nullptr : &it->second;
}

std::vector<std::string> ExpertQueue::expire_due_locked() {
    std::vector<std::string> expired;
    const double t = options_.clock();
    for (const auto& id : order_) {
        ExpertRequest& r = requests_[id];
        if ((r.status == RequestStatus::Pending || r.status == RequestStatus::Claimed) && t >= r.expires_at) {
            r.status = RequestStatus::Expired;
            append(json{{"event", "expired"}, {"id", id}, {"at", t}});
            publish("expired", r);
            expired.push_back(id);
        }
    }
    return expired;
}

std::vector<std::string> ExpertQueue::expire_due() {
    std::lock_guard lock(mutex_);
    return expire_due_locked();
}

ExpertRequest ExpertQueue::create(const std::string& question, json context, double timeout_seconds) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    ExpertRequest r;
    r.id = format_id(next_id_++);
    r.question = question;
    r.context = context.is_null() ? json::object() : std::move(context);
    r.created_at = options_.clock();
    r.timeout_seconds = timeout_seconds > 0 ? timeout_seconds : kDefaultConsultTimeout;
    r.expires_at = r.created_at + r.timeout_seconds + options_.late_answer_window;
    append(json{{"event", "created"}, {"request", to_json(r)}});
    order_.push_back(r.id);
    requests_[r.id] = r;
    publish("created", r);
    return r;
}

std::optional<ExpertRequest> ExpertQueue::get(const std::string& id) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    const ExpertRequest* r = find_locked(id);
    if (!r) return std::nullopt;
    return *r;
}

std::vector<ExpertRequest> ExpertQueue::list(std::optional<RequestStatus> status) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    std::vector<ExpertRequest> out;
    for (const auto& id : order_) {
        const ExpertRequest& r = requests_[id];
        if (!status || r.status == *status) out.push_back(r);
    }
    return out;
}

Outcome ExpertQueue::claim(const std::string& id, const std::string& expert_id, ExpertRequest* out) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    ExpertRequest* r = find_locked(id);
    if (!r) return Outcome::NotFound;
    if (out) *out = *r;
    if (expert_id.empty()) return Outcome::Invalid;
    if (r->status == RequestStatus::Expired) return Outcome::Expired;
    if (r->status == RequestStatus::Answered) return Outcome::Conflict;
    if (r->status == RequestStatus::Claimed) return r->claimed_by == expert_id ? Outcome::Ok : Outcome::Conflict;
    r->claimed_by = expert_id;
    r->status = RequestStatus::Claimed;
    append(json{{"event", "claimed"}, {"id", id}, {"expert_id", expert_id}, {"at", options_.clock()}});
    publish("claimed", *r);
    if (out) *out = *r;
    return Outcome::Ok;
}

Outcome ExpertQueue::respond(const std::string& id, Verdict verdict, const std::string& text,
                             const std::string& expert_id, ExpertRequest* out) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    ExpertRequest* r = find_locked(id);
    if (!r) return Outcome::NotFound;
    if (out) *out = *r;
    if (verdict == Verdict::FreeText && text.empty()) return Outcome::Invalid;
    if (r->status == RequestStatus::Expired) return Outcome::Expired;
    if (r->status == RequestStatus::Answered) return Outcome::Conflict;
    ExpertResponse resp{id, verdict, text, expert_id, options_.clock()};
    append(json{{"event", "answered"}, {"id", id}, {"response", to_json(resp)}});
    r->response = std::move(resp);
    r->status = RequestStatus::Answered;
    publish("answered", *r);
    if (out) *out = *r;
    return Outcome::Ok;
}

std::optional<ExpertRequest> ExpertQueue::wait(const std::string& id, double timeout_seconds) {
    std::unique_lock lock(mutex_);
    expire_due_locked();
    if (!find_locked(id)) return std::nullopt;
    auto settled = [&] {
        const ExpertRequest* r = find_locked(id);
        return shutdown_ || r->status == RequestStatus::Answered || r->status == RequestStatus::Expired;
    };
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(std::max(0.0, timeout_seconds)));
    while (!settled()) {
        // Wake at least once a second so expiry by the clock is noticed.
        const auto slice = std::min(deadline, std::chrono::steady_clock::now() + std::chrono::seconds(1));
        changed_.wait_until(lock, slice);
        expire_due_locked();
        if (std::chrono::steady_clock::now() >= deadline) break;
    }
    return *find_locked(id);
}

std::size_t ExpertQueue::position(const std::string& id) {
    std::lock_guard lock(mutex_);
    expire_due_locked();
    std::size_t pos = 0;
    for (const auto& rid : order_) {
        const ExpertRequest& r = requests_[rid];
        if (r.status != RequestStatus::Pending) continue;
        ++pos;
        if (rid == id) return pos;
    }
    return 0;
}

std::vector<Event> ExpertQueue::events_since(std::uint64_t after_seq, double timeout_seconds) {
    std::unique_lock lock(mutex_);
    changed_.wait_for(lock, std::chrono::duration<double>(std::max(0.0, timeout_seconds)),
                      [&] { return shutdown_ || seq_ > after_seq; });
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.seq > after_seq) out.push_back(e);
    }
    return out;
}

std::uint64_t ExpertQueue::last_seq() {
    std::lock_guard lock(mutex_);
    return seq_;
}

void ExpertQueue::shutdown() {
    std::lock_guard lock(mutex_);
    shutdown_ = true;
    changed_.notify_all();
}

// --- HTTP server -----------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

int http_status(Outcome o) {
    switch (o) {
        case Outcome::Ok: return 200;
        case Outcome::NotFound: return 404;
        case Outcome::Conflict: return 409;
        case Outcome::Expired: return 410;
        case Outcome::Invalid: return 400;
    }
    return 500;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("bind address '" + bind + "' is not host:port");
    std::string host = bind.substr(0, colon);
    if (host.empty()) host = "127.0.0.1";
    return {host, std::stoi(bind.substr(colon + 1))};
}

}  // namespace

struct ExpertServer::Impl {
    ExpertQueue& queue;
    double heartbeat;
    httplib::Server http;
    std::string host;
    int port = 0;
    std::thread thread;
    std::atomic<bool> stopping{false};
    std::once_flag joined;
    std::mutex mutex;
    std::condition_variable cv;
    bool finished = false;

    Impl(ExpertQueue& q, double hb) : queue(q), heartbeat(hb) {}

    // Sleeps in short slices so stop() is noticed by long polls.
    std::optional<ExpertRequest> wait_answer(const std::string& id, double timeout) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout);
        while (true) {
            const double left = std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
            auto r = queue.wait(id, std::clamp(left, 0.0, 0.25));
            if (!r || stopping || left <= 0.0) return r;
            if (r->status == RequestStatus::Answered || r->status == RequestStatus::Expired) return r;
        }
    }

    void routes() {
        http.Post("/api/requests", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object() || !body.contains("question") || !body["question"].is_string()) {
                return send_error(res, 400, "body needs a string 'question'");
            }
            double timeout = kDefaultConsultTimeout;
            if (body.contains("timeout_seconds")) {
                if (!body["timeout_seconds"].is_number() || body["timeout_seconds"].get<double>() <= 0) {
                    return send_error(res, 400, "timeout_seconds must be a positive number");
                }
                timeout = body["timeout_seconds"].get<double>();
            }
            auto r = queue.create(body["question"].get<std::string>(), body.value("context", json::object()), timeout);
            send_json(res, 201, to_json(r));
        });
        http.Get("/api/requests", [this](const httplib::Request& req, httplib::Response& res) {
            std::optional<RequestStatus> filter;
            if (req.has_param("status")) {
                filter = request_status_from_string(req.get_param_value("status"));
                if (!filter) return send_error(res, 400, "unknown status '" + req.get_param_value("status") + "'");
            }
            json list = json::array();
            for (const auto& r : queue.list(filter)) list.push_back(to_json(r));
            send_json(res, 200, json{{"requests", list}});
        });
        http.Get(R"(/api/requests/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = queue.get(req.matches[1]);
            if (!r) return send_error(res, 404, "unknown request " + std::string(req.matches[1]));
            send_json(res, 200, to_json(*r));
        });
        http.Get(R"(/api/requests/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto r = queue.get(id);
            if (!r) return send_error(res, 404, "unknown request " + id);
            send_json(res, 200, json{{"request_id", id}, {"status", std::string(to_string(r->status))}, {"position", queue.position(id)}});
        });
        http.Get(R"(/api/requests/([^/]+)/wait)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            double timeout = 30.0;
            if (req.has_param("timeout")) {
                try {
                    timeout = std::stod(req.get_param_value("timeout"));
                } catch (...) {
                    return send_error(res, 400, "timeout must be a number");
                }
            }
            auto r = wait_answer(id, std::max(0.0, timeout));
            if (!r) return send_error(res, 404, "unknown request " + id);
            const int status = r->status == RequestStatus::Answered ? 200 : r->status == RequestStatus::Expired ? 410 : 408;
            send_json(res, status, to_json(*r));
        });
        http.Post(R"(/api/requests/([^/]+)/claim)", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object() || !body.contains("expert_id") || !body["expert_id"].is_string()) {
                return send_error(res, 400, "body needs a string 'expert_id'");
            }
            ExpertRequest r;
            const Outcome o = queue.claim(req.matches[1], body["expert_id"].get<std::string>(), &r);
            if (o == Outcome::Ok) return send_json(res, 200, to_json(r));
            if (o == Outcome::NotFound) return send_error(res, 404, "unknown request " + std::string(req.matches[1]));
            send_json(res, http_status(o), json{{"error", o == Outcome::Expired ? "request expired" : "request already claimed or answered"},
                                                {"request", to_json(r)}});
        });
        http.Post(R"(/api/requests/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
            const auto verdict = body.contains("verdict") && body["verdict"].is_string()
                                     ? verdict_from_string(body["verdict"].get<std::string>())
                                     : std::nullopt;
            if (!verdict) return send_error(res, 400, "verdict must be approve, reject or free-text");
            if (body.contains("text") && !body["text"].is_string()) return send_error(res, 400, "text must be a string");
            const std::string text = body.value("text", std::string());
            const std::string expert_id = body.contains("expert_id") && body["expert_id"].is_string()
                                              ? body["expert_id"].get<std::string>()
                                              : std::string("anonymous");
            ExpertRequest r;
            const Outcome o = queue.respond(req.matches[1], *verdict, text, expert_id, &r);
            if (o == Outcome::Ok) return send_json(res, 200, to_json(r));
            if (o == Outcome::NotFound) return send_error(res, 404, "unknown request " + std::string(req.matches[1]));
            if (o == Outcome::Invalid) return send_error(res, 400, "free-text responses need non-empty text");
            send_json(res, http_status(o), json{{"error", o == Outcome::Expired ? "request expired" : "request already answered"},
                                                {"request", to_json(r)}});
        });
        http.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
            auto last = std::make_shared<std::uint64_t>(queue.last_seq());
            auto first = std::make_shared<bool>(true);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, last, first](std::size_t, httplib::DataSink& sink) {
                if (*first) {
                    *first = false;
                    const std::string hello = ": connected\n\n";
                    return sink.write(hello.data(), hello.size());
                }
                const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(heartbeat);
                while (!stopping) {
                    auto events = queue.events_since(*last, 0.25);
                    if (!events.empty()) {
                        std::string out;
                        for (const auto& e : events) {
                            out += "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " +
                                   e.request.dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
                            *last = e.seq;
                        }
                        return sink.write(out.data(), out.size());
                    }
                    if (std::chrono::steady_clock::now() >= deadline) {
                        const std::string beat = ": heartbeat\n\n";
                        return sink.write(beat.data(), beat.size());
                    }
                }
                sink.done();
                return false;
            });
        });
    }
};

ExpertServer::ExpertServer(ExpertQueue& queue, const std::string& bind, double heartbeat_seconds)
    : impl_(std::make_unique<Impl>(queue, heartbeat_seconds)) {
    auto [host, port] = split_bind(bind);
    impl_->host = host;
    impl_->http.new_task_queue = [] { return new httplib::ThreadPool(32); };
    impl_->routes();
    if (port == 0) {
        impl_->port = impl_->http.bind_to_any_port(host);
        if (impl_->port < 0) throw std::runtime_error("cannot bind " + bind);
    } else {
        if (!impl_->http.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + bind);
        impl_->port = port;
    }
    Impl* impl = impl_.get();
    impl_->thread = std::thread([impl] {
        impl->http.listen_after_bind();
        std::lock_guard lock(impl->mutex);
        impl->finished = true;
        impl->cv.notify_all();
    });
    impl_->http.wait_until_ready();
}

ExpertServer::~ExpertServer() { stop(); }

int ExpertServer::port() const { return impl_->port; }

std::string ExpertServer::url() const {
    const std::string host = impl_->host == "0.0.0.0" ? "127.0.0.1" : impl_->host;
    return "http://" + host + ":" + std::to_string(impl_->port);
}

void ExpertServer::stop() {
    impl_->stopping = true;
    impl_->http.stop();
    std::call_once(impl_->joined, [this] { impl_->thread.join(); });
}

void ExpertServer::wait() {
    std::unique_lock lock(impl_->mutex);
    impl_->cv.wait(lock, [this] { return impl_->finished; });
}

// --- client ----------------------------------------------------------------------

namespace {

[[noreturn]] void expert_down(const std::string& url, const std::string& why) {
    throw ToolFailure(ErrorCode::ExpertUnavailable, "expert server " + url + " unavailable: " + why,
                      json{{"url", url}});
}

httplib::Client make_client(const std::string& base, double read_timeout) {
    httplib::Client c(base);
    c.set_connection_timeout(5, 0);
    c.set_read_timeout(static_cast<time_t>(read_timeout) + 5, 0);
    return c;
}

json parse_body(const std::string& url, const httplib::Result& res) {
    json j = json::parse(res->body, nullptr, false);
    if (j.is_discarded()) expert_down(url, "reply is not JSON");
    return j;
}

}  // namespace

ExpertClient::ExpertClient(std::string base_url) : base_url_(std::move(base_url)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

ExpertRequest ExpertClient::create(const std::string& question, const json& context, double timeout_seconds) {
    auto c = make_client(base_url_, 10);
    json body{{"question", question}, {"context", context.is_null() ? json::object() : context}};
    if (timeout_seconds > 0) body["timeout_seconds"] = timeout_seconds;
    auto res = c.Post("/api/requests", body.dump(), "application/json");
    if (!res) expert_down(base_url_, httplib::to_string(res.error()));
    if (res->status != 201) expert_down(base_url_, "create answered HTTP " + std::to_string(res->status) + ": " + res->body);
    return expert_request_from_json(parse_body(base_url_, res));
}

std::optional<ExpertRequest> ExpertClient::get(const std::string& id) {
    auto c = make_client(base_url_, 10);
    auto res = c.Get("/api/requests/" + id);
    if (!res) expert_down(base_url_, httplib::to_string(res.error()));
    if (res->status == 404) return std::nullopt;
    if (res->status != 200) expert_down(base_url_, "HTTP " + std::to_string(res->status));
    return expert_request_from_json(parse_body(base_url_, res));
}

std::optional<ExpertRequest> ExpertClient::wait(const std::string& id, double timeout_seconds) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(std::max(0.0, timeout_seconds));
    while (true) {
        const double left = std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
        const double chunk = std::clamp(left, 0.0, 30.0);
        auto c = make_client(base_url_, chunk);
        std::ostringstream path;
        path << "/api/requests/" << id << "/wait?timeout=" << chunk;
        auto res = c.Get(path.str());
        if (!res) expert_down(base_url_, httplib::to_string(res.error()));
        if (res->status == 404) return std::nullopt;
        if (res->status != 200 && res->status != 408 && res->status != 410) {
            expert_down(base_url_, "HTTP " + std::to_string(res->status));
        }
        ExpertRequest r = expert_request_from_json(parse_body(base_url_, res));
        if (res->status != 408 || left - chunk <= 0.0) return r;
    }
}

std::optional<json> ExpertClient::status(const std::string& id) {
    auto c = make_client(base_url_, 10);
    auto res = c.Get("/api/requests/" + id + "/status");
    if (!res) expert_down(base_url_, httplib::to_string(res.error()));
    if (res->status == 404) return std::nullopt;
    if (res->status != 200) expert_down(base_url_, "HTTP " + std::to_string(res->status));
    return parse_body(base_url_, res);
}

std::string expert_url_from(const json& settings) {
    if (settings.is_object() && settings.contains("expert_url") && settings["expert_url"].is_string() &&
        !settings["expert_url"].get<std::string>().empty()) {
        return settings["expert_url"].get<std::string>();
    }
    if (const char* env = std::getenv("TOOLHUB_EXPERT_URL"); env && *env) return env;
    return "";
}

json response_payload(const ExpertRequest& r) {
    const ExpertResponse& resp = r.response.value();
    return json{{"request_id", r.id},
                {"verdict", std::string(to_string(resp.verdict))},
                {"text", resp.text},
                {"expert_id", resp.expert_id}};
}

}  // namespace toolhub::expert
