#include "toolhub/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <algorithm>
#include <condition_variable>
#include <list>
#include <stdexcept>

#include <httplib.h>

namespace toolhub::wire {

int rpc_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ToolNotFound: return -32001;
        case ErrorCode::SpecInvalid:
        case ErrorCode::MissingRequired:
        case ErrorCode::UnknownArgument:
        case ErrorCode::TypeMismatch: return -32002;
        case ErrorCode::ExecutionFailed: return -32003;
        case ErrorCode::Timeout: return -32004;
        case ErrorCode::RemoteUnavailable: return -32005;
        case ErrorCode::ExpertUnavailable: return -32006;
    }
    return -32003;
}

ErrorCode error_code_from_rpc(int code, const json& data) {
    if (data.is_object() && data.contains("code") && data["code"].is_string()) {
        if (auto c = error_code_from_string(data["code"].get<std::string>())) return *c;
    }
    switch (code) {
        case -32001: return ErrorCode::ToolNotFound;
        case -32002: return ErrorCode::SpecInvalid;
        case -32004: return ErrorCode::Timeout;
        case -32005: return ErrorCode::RemoteUnavailable;
        case -32006: return ErrorCode::ExpertUnavailable;
        default: return ErrorCode::ExecutionFailed;
    }
}

// --- framing -------------------------------------------------------------------

namespace {
constexpr std::string_view kHeader = "Content-Length: ";
constexpr std::string_view kTerminator = "\r\n\r\n";
}  // namespace

std::string encode_frame(std::string_view body) {
    std::string out(kHeader);
    out += std::to_string(body.size());
    out += kTerminator;
    out.append(body.data(), body.size());
    return out;
}

FrameDecoder::Event FrameDecoder::resync(std::string message) {
    const auto pos = buffer_.find(kHeader, 1);
    if (pos != std::string::npos) {
        buffer_.erase(0, pos);
    } else {
        // Keep a tail that might be the start of the next header.
        std::size_t keep = 0;
        for (std::size_t len = std::min(buffer_.size() - 1, kHeader.size() - 1); len > 0; --len) {
            if (buffer_.compare(buffer_.size() - len, len, kHeader.substr(0, len)) == 0) {
                keep = len;
                break;
            }
        }
        buffer_.erase(0, buffer_.size() - keep);
    }
    Event e;
    e.kind = Event::Kind::Error;
    e.message = std::move(message);
    return e;
}

std::optional<FrameDecoder::Event> FrameDecoder::next() {
    if (buffer_.empty()) return std::nullopt;
    const std::size_t n = std::min(buffer_.size(), kHeader.size());
    if (buffer_.compare(0, n, kHeader.substr(0, n)) != 0) return resync("expected 'Content-Length: ' header");
    if (buffer_.size() < kHeader.size()) return std::nullopt;

    std::size_t i = kHeader.size();
    while (i < buffer_.size() && buffer_[i] >= '0' && buffer_[i] <= '9') ++i;
    const std::size_t digits = i - kHeader.size();
    if (digits > 10) return resync("content length has too many digits");
    if (i == buffer_.size()) return std::nullopt;
    if (digits == 0) return resync("missing content length");
    if (digits > 1 && buffer_[kHeader.size()] == '0') return resync("content length has a leading zero");
    const std::uint64_t length = std::stoull(buffer_.substr(kHeader.size(), digits));
    if (length > max_frame_) return resync("frame of " + std::to_string(length) + " bytes exceeds the limit");

    const std::size_t avail = std::min(buffer_.size() - i, kTerminator.size());
    if (buffer_.compare(i, avail, kTerminator.substr(0, avail)) != 0) return resync("malformed header terminator");
    if (avail < kTerminator.size()) return std::nullopt;

    const std::size_t body_start = i + kTerminator.size();
    if (buffer_.size() - body_start < length) return std::nullopt;
    Event e;
    e.body = buffer_.substr(body_start, length);
    buffer_.erase(0, body_start + length);
    return e;
}

// --- dispatcher ------------------------------------------------------------------

json rpc_result(const json& id, json result) {
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

json rpc_error(const json& id, int code, const std::string& message, json data) {
    json err{{"code", code}, {"message", message}};
    if (!data.is_null()) err["data"] = std::move(data);
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"error", std::move(err)}};
}

json rpc_tool_error(const json& id, const ToolError& err) {
    return rpc_error(id, rpc_code(err.code), err.message,
                     json{{"code", std::string(to_string(err.code))}, {"detail", err.detail}});
}

RpcServer::RpcServer(Registry& registry, Caller& caller, Finder& finder)
    : registry_(registry), caller_(caller), finder_(finder) {}

namespace {

struct InvalidParams : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct MethodNotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string RpcServer::handle(std::string_view body) {
    json request = json::parse(body.begin(), body.end(), nullptr, false);
    if (request.is_discarded()) return dump(rpc_error(nullptr, kParseError, "parse error: body is not valid JSON"));
    return dump(handle_json(request));
}

json RpcServer::handle_json(const json& request) {
    if (!request.is_object()) return rpc_error(nullptr, kInvalidRequest, "request must be a JSON object");
    json id = request.contains("id") ? request["id"] : json();
    if (!(id.is_number_integer() || id.is_string())) {
        return rpc_error(nullptr, kInvalidRequest, "request id must be an integer or a string");
    }
    if (request.value("jsonrpc", json()) != "2.0") return rpc_error(id, kInvalidRequest, "jsonrpc must be \"2.0\"");
    if (!request.contains("method") || !request["method"].is_string()) {
        return rpc_error(id, kInvalidRequest, "method must be a string");
    }
    json params = request.contains("params") ? request["params"] : json::object();
    if (!params.is_object()) return rpc_error(id, kInvalidParams, "params must be an object");
    const std::string method = request["method"].get<std::string>();
    try {
        if (method == "call_tool" || method == "tools/call") {
            ToolCall call;
            try {
                call = tool_call_from_json(params);
            } catch (const ToolFailure& f) {
                return rpc_error(id, kInvalidParams, std::string("call_tool params: ") + f.what(),
                                 json{{"code", "SpecInvalid"}, {"detail", f.error().detail}});
            }
            ToolResult r = caller_.call_tool(call);
            if (!r.ok()) return rpc_tool_error(id, r.error.value_or(ToolError{}));
            return rpc_result(id, json{{"status", "ok"}, {"payload", r.payload}});
        }
        return rpc_result(id, dispatch(method, params));
    } catch (const InvalidParams& ex) {
        return rpc_error(id, kInvalidParams, ex.what());
    } catch (const MethodNotFound& ex) {
        return rpc_error(id, kMethodNotFound, ex.what());
    } catch (const ToolFailure& f) {
        return rpc_tool_error(id, f.error());
    } catch (const std::invalid_argument& ex) {
        return rpc_error(id, kInvalidParams, ex.what());
    } catch (const std::exception& ex) {
        return rpc_error(id, -32603, std::string("internal error: ") + ex.what());
    }
}

json RpcServer::dispatch(const std::string& method, const json& params) {
    if (method == "initialize") {
        if (params.contains("protocol_version")) {
            const json& v = params["protocol_version"];
            if (!v.is_string() || v.get<std::string>() != kProtocolVersion) {
                throw ToolFailure(ErrorCode::SpecInvalid,
                                  "protocol version mismatch: client " + (v.is_string() ? v.get<std::string>() : v.dump()) +
                                      ", server " + std::string(kProtocolVersion),
                                  json{{"client", v}, {"server", kProtocolVersion}});
            }
        }
        return json{{"protocol_version", kProtocolVersion},
                    {"server", "toolhub"},
                    {"methods", {"initialize", "list_tools", "find_tool", "call_tool"}}};
    }
    if (method == "list_tools" || method == "tools/list") {
        ToolFilter filter;
        if (params.contains("tag")) {
            if (!params["tag"].is_string()) throw InvalidParams("tag must be a string");
            filter.tag = params["tag"].get<std::string>();
        }
        if (params.contains("origin")) {
            auto o = params["origin"].is_string() ? origin_from_string(params["origin"].get<std::string>()) : std::nullopt;
            if (!o) throw InvalidParams("origin must be local, remote, composed or generated");
            filter.origin = *o;
        }
        json tools = json::array();
        for (const auto& spec : registry_.list_tools(filter)) tools.push_back(to_json(spec));
        return json{{"tools", std::move(tools)}};
    }
    if (method == "find_tool") {
        if (!params.contains("query") || !params["query"].is_string()) throw InvalidParams("query must be a string");
        const std::string strategy_name = params.value("strategy", std::string("keyword"));
        auto strategy = search_strategy_from_string(strategy_name);
        if (!strategy) throw InvalidParams("unknown strategy '" + strategy_name + "'");
        const json limit = params.value("limit", json(5));
        if (!limit.is_number_integer() || limit.get<long long>() < 1) throw InvalidParams("limit must be a positive integer");
        auto matches = finder_.find_tool(params["query"].get<std::string>(), *strategy, limit.get<std::size_t>());
        return json{{"matches", to_json(matches)}};
    }
    throw MethodNotFound("unknown method '" + method + "'");
}

// --- transports -----------------------------------------------------------------

namespace {

bool write_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

/// Threads that finish on their own; joined when reaped or at the end.
class ThreadSet {
public:
    template <typename F>
    void spawn(F&& fn) {
        reap(false);
        auto done = std::make_shared<std::atomic<bool>>(false);
        std::lock_guard lock(mutex_);
        threads_.push_back({std::thread([fn = std::forward<F>(fn), done]() mutable {
                                fn();
                                done->store(true);
                            }),
                            done});
    }
    void reap(bool all) {
        std::list<Item> finished;
        {
            std::lock_guard lock(mutex_);
            for (auto it = threads_.begin(); it != threads_.end();) {
                if (all || it->done->load()) finished.splice(finished.end(), threads_, it++);
                else ++it;
            }
        }
        for (auto& item : finished) item.thread.join();
    }
    ~ThreadSet() { reap(true); }

private:
    struct Item {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };
    std::mutex mutex_;
    std::list<Item> threads_;
};

// Returns {host, port}. Throws std::invalid_argument.
std::pair<std::string, int> split_host_port(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("address '" + bind + "' is not host:port");
    std::string host = bind.substr(0, colon);
    if (host.empty()) host = "127.0.0.1";
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (...) {
        throw std::invalid_argument("address '" + bind + "' has a bad port");
    }
    if (port < 0 || port > 65535) throw std::invalid_argument("address '" + bind + "' has a bad port");
    return {host, port};
}

}  // namespace

void serve_framed(RpcServer& server, int in_fd, int out_fd) {
    std::signal(SIGPIPE, SIG_IGN);
    FrameDecoder decoder;
    std::mutex write_mutex;
    auto send = [&](const std::string& body) {
        std::lock_guard lock(write_mutex);
        write_all(out_fd, encode_frame(body));
    };
    {
        ThreadSet workers;
        char buf[65536];
        while (true) {
            const ssize_t n = ::read(in_fd, buf, sizeof buf);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            while (auto ev = decoder.next()) {
                if (ev->kind == FrameDecoder::Event::Kind::Error) {
                    send(dump(rpc_error(nullptr, kParseError, "framing error: " + ev->message)));
                    continue;
                }
                workers.spawn([&server, &send, body = std::move(ev->body)] { send(server.handle(body)); });
            }
        }
    }  // joins outstanding requests before returning
}

namespace {

class TcpServer final : public ServerHandle {
public:
    TcpServer(RpcServer& server, const std::string& bind) : server_(server) {
        std::signal(SIGPIPE, SIG_IGN);
        auto [host, port] = split_host_port(bind);
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
            throw std::runtime_error("cannot resolve bind address '" + bind + "'");
        }
        fd_ = ::socket(res->ai_family, res->ai_socktype, 0);
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        const bool ok = fd_ >= 0 && ::bind(fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(fd_, 64) == 0;
        ::freeaddrinfo(res);
        if (!ok) {
            const std::string why = std::strerror(errno);
            if (fd_ >= 0) ::close(fd_);
            throw std::runtime_error("cannot bind " + bind + ": " + why);
        }
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~TcpServer() override { stop(); }

    int port() const override { return port_; }

    void stop() override {
        if (stopping_.exchange(true)) {
            if (acceptor_.joinable()) acceptor_.join();
            return;
        }
        if (acceptor_.joinable()) acceptor_.join();
        {
            std::lock_guard lock(mutex_);
            for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
        }
        connections_threads_.reap(true);
        ::close(fd_);
        std::lock_guard lock(mutex_);
        stopped_ = true;
        cv_.notify_all();
    }

    void wait() override {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stopped_; });
    }

private:
    void accept_loop() {
        while (!stopping_.load()) {
            pollfd p{fd_, POLLIN, 0};
            const int r = ::poll(&p, 1, 100);
            if (r <= 0) continue;
            const int conn = ::accept(fd_, nullptr, nullptr);
            if (conn < 0) continue;
            {
                std::lock_guard lock(mutex_);
                connections_.push_back(conn);
            }
            connections_threads_.spawn([this, conn] {
                serve_framed(server_, conn, conn);
                {
                    std::lock_guard lock(mutex_);
                    connections_.erase(std::find(connections_.begin(), connections_.end(), conn));
                }
                ::close(conn);
            });
        }
    }

    RpcServer& server_;
    int fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex mutex_;
    std::condition_variable cv_;
    bool stopped_ = false;
    std::vector<int> connections_;
    ThreadSet connections_threads_;
};

class HttpServer final : public ServerHandle {
public:
    HttpServer(RpcServer& server, const std::string& bind) {
        auto [host, port] = split_host_port(bind);
        http_.Post("/rpc", [&server](const httplib::Request& req, httplib::Response& res) {
            res.status = 200;
            res.set_content(server.handle(req.body), "application/json");
        });
        if (port == 0) {
            port_ = http_.bind_to_any_port(host);
            if (port_ < 0) throw std::runtime_error("cannot bind " + bind);
        } else {
            if (!http_.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + bind);
            port_ = port;
        }
        thread_ = std::thread([this] {
            http_.listen_after_bind();
            std::lock_guard lock(mutex_);
            finished_ = true;
            cv_.notify_all();
        });
        http_.wait_until_ready();
    }

    ~HttpServer() override { stop(); }
    int port() const override { return port_; }
    void stop() override {
        http_.stop();
        std::call_once(joined_, [this] { thread_.join(); });
    }
    void wait() override {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return finished_; });
    }

private:
    httplib::Server http_;
    int port_ = 0;
    std::thread thread_;
    std::once_flag joined_;
    std::mutex mutex_;
    std::condition_variable cv_;
    bool finished_ = false;
};

}  // namespace

std::unique_ptr<ServerHandle> serve_tcp(RpcServer& server, const std::string& bind) {
    return std::make_unique<TcpServer>(server, bind);
}

std::unique_ptr<ServerHandle> serve_http(RpcServer& server, const std::string& bind) {
    return std::make_unique<HttpServer>(server, bind);
}

}  // namespace toolhub::wire
