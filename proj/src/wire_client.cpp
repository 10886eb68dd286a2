#include "toolhub/wire.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>

#include <httplib.h>

namespace toolhub::wire {

namespace {

[[noreturn]] void unavailable(const std::string& endpoint, const std::string& why) {
    throw ToolFailure(ErrorCode::RemoteUnavailable, "remote " + endpoint + " unavailable: " + why,
                      json{{"endpoint", endpoint}});
}

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

/// Request/response correlation over a framed byte stream.
class FramedClient final : public RpcClient {
public:
    FramedClient(std::string endpoint, int read_fd, int write_fd, pid_t child = -1)
        : endpoint_(std::move(endpoint)), read_fd_(read_fd), write_fd_(write_fd), child_(child) {
        reader_ = std::thread([this] { read_loop(); });
    }

    ~FramedClient() override {
        if (read_fd_ == write_fd_) {
            ::shutdown(read_fd_, SHUT_RDWR);
        } else {
            ::close(write_fd_);  // the child sees EOF and exits
        }
        if (reader_.joinable()) reader_.join();
        ::close(read_fd_);
        if (child_ > 0) {
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(child_, nullptr, WNOHANG) == child_) return;
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            }
            ::kill(child_, SIGTERM);
            ::waitpid(child_, nullptr, 0);
        }
    }

    RpcReply request(const std::string& method, const json& params) override {
        return request_with_timeout(method, params, timeout_seconds_);
    }

    RpcReply request_with_timeout(const std::string& method, const json& params, double timeout_seconds) {
        std::promise<json> promise;
        auto future = promise.get_future();
        std::int64_t id = 0;
        {
            std::lock_guard lock(mutex_);
            if (dead_) unavailable(endpoint_, "connection closed");
            id = ++next_id_;
            pending_.emplace(id, std::move(promise));
        }
        const json req{{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}};
        bool written = false;
        {
            std::lock_guard lock(write_mutex_);
            written = write_all(write_fd_, encode_frame(req.dump(-1, ' ', false, json::error_handler_t::replace)));
        }
        if (!written) {
            fail_all("write failed");
        }
        if (future.wait_for(std::chrono::duration<double>(timeout_seconds)) != std::future_status::ready) {
            std::lock_guard lock(mutex_);
            pending_.erase(id);
            unavailable(endpoint_, "no reply to " + method + " within " + std::to_string(timeout_seconds) + " s");
        }
        json reply = future.get();  // rethrows RemoteUnavailable if the connection died
        RpcReply out;
        if (reply.contains("error")) {
            out.error = reply["error"];
        } else {
            out.result = reply.value("result", json());
        }
        return out;
    }

    bool alive() const override {
        std::lock_guard lock(mutex_);
        return !dead_;
    }

    std::string endpoint() const override { return endpoint_; }

    void set_timeout(double seconds) { timeout_seconds_ = seconds; }

private:
    void read_loop() {
        FrameDecoder decoder;
        char buf[65536];
        while (true) {
            const ssize_t n = ::read(read_fd_, buf, sizeof buf);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            while (auto ev = decoder.next()) {
                if (ev->kind != FrameDecoder::Event::Kind::Frame) continue;
                json reply = json::parse(ev->body, nullptr, false);
                if (reply.is_discarded() || !reply.is_object() || !reply.contains("id") ||
                    !reply["id"].is_number_integer()) {
                    continue;
                }
                std::lock_guard lock(mutex_);
                auto it = pending_.find(reply["id"].get<std::int64_t>());
                if (it == pending_.end()) continue;
                it->second.set_value(std::move(reply));
                pending_.erase(it);
            }
        }
        fail_all("connection closed");
    }

    void fail_all(const std::string& why) {
        std::lock_guard lock(mutex_);
        dead_ = true;
        for (auto& [id, p] : pending_) {
            try {
                unavailable(endpoint_, why);
            } catch (...) {
                p.set_exception(std::current_exception());
            }
        }
        pending_.clear();
    }

    std::string endpoint_;
    int read_fd_;
    int write_fd_;
    pid_t child_;
    double timeout_seconds_ = 300.0;
    std::thread reader_;
    mutable std::mutex mutex_;
    std::mutex write_mutex_;
    std::map<std::int64_t, std::promise<json>> pending_;
    std::int64_t next_id_ = 0;
    bool dead_ = false;
};

class HttpClient final : public RpcClient {
public:
    HttpClient(std::string endpoint, const std::string& base, double connect_timeout)
        : endpoint_(std::move(endpoint)), client_(base) {
        const auto secs = static_cast<time_t>(connect_timeout);
        const auto usecs = static_cast<time_t>((connect_timeout - static_cast<double>(secs)) * 1e6);
        client_.set_connection_timeout(secs, usecs);
        client_.set_read_timeout(300, 0);
        client_.set_write_timeout(300, 0);
        client_.set_keep_alive(true);
    }

    RpcReply request(const std::string& method, const json& params) override {
        std::int64_t id = 0;
        {
            std::lock_guard lock(mutex_);
            id = ++next_id_;
        }
        const json req{{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}};
        httplib::Result res;
        {
            // httplib clients are not safe for concurrent use.
            std::lock_guard lock(mutex_);
            res = client_.Post("/rpc", req.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
        }
        if (!res) unavailable(endpoint_, httplib::to_string(res.error()));
        if (res->status != 200) unavailable(endpoint_, "HTTP status " + std::to_string(res->status));
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object()) unavailable(endpoint_, "reply is not JSON");
        RpcReply out;
        if (reply.contains("error")) {
            out.error = reply["error"];
        } else {
            out.result = reply.value("result", json());
        }
        return out;
    }

    bool alive() const override { return true; }
    std::string endpoint() const override { return endpoint_; }

private:
    std::string endpoint_;
    std::mutex mutex_;
    httplib::Client client_;
    std::int64_t next_id_ = 0;
};

int connect_socket(const std::string& endpoint, const std::string& host, const std::string& port, double timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) unavailable(endpoint, "cannot resolve host");
    std::string why = "connection failed";
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc != 0 && errno == EINPROGRESS) {
            pollfd p{fd, POLLOUT, 0};
            rc = ::poll(&p, 1, static_cast<int>(timeout * 1000));
            if (rc == 1) {
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                rc = err == 0 ? 0 : -1;
                if (err) why = std::strerror(err);
            } else {
                rc = -1;
                why = "connect timed out";
            }
        } else if (rc != 0) {
            why = std::strerror(errno);
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            ::freeaddrinfo(res);
            return fd;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    unavailable(endpoint, why);
}

std::shared_ptr<FramedClient> spawn_stdio(const std::string& endpoint, const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) unavailable(endpoint, "pipe failed");
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        unavailable(endpoint, "pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) unavailable(endpoint, "fork failed");
    if (pid == 0) {
        ::dup2(to_child[0], 0);
        ::dup2(from_child[1], 1);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    return std::make_shared<FramedClient>(endpoint, from_child[0], to_child[1], pid);
}

}  // namespace

// --- RpcClient helpers -------------------------------------------------------------

namespace {

[[noreturn]] void throw_reply_error(const json& error) {
    const int code = error.value("code", -32603);
    const json data = error.value("data", json());
    const ErrorCode ec = error_code_from_rpc(code, data);
    throw ToolFailure(ec, error.value("message", std::string("remote error")),
                      data.is_object() && data.contains("detail") ? data["detail"] : json());
}

}  // namespace

json RpcClient::initialize() {
    const RpcReply reply = request("initialize", json{{"protocol_version", kProtocolVersion}});
    if (reply.error) {
        throw ToolFailure(ErrorCode::RemoteUnavailable,
                          "initialize failed at " + endpoint() + ": " + reply.error->value("message", std::string()),
                          reply.error->value("data", json()));
    }
    const std::string server = reply.result.value("protocol_version", std::string("(none)"));
    if (server != kProtocolVersion) {
        throw ToolFailure(ErrorCode::RemoteUnavailable,
                          "protocol version mismatch: client " + std::string(kProtocolVersion) + ", server " + server,
                          json{{"client", kProtocolVersion}, {"server", server}});
    }
    return reply.result;
}

std::vector<json> RpcClient::list_tools(const json& filter) {
    const RpcReply reply = request("list_tools", filter.is_object() ? filter : json::object());
    if (reply.error) throw_reply_error(*reply.error);
    if (!reply.result.contains("tools") || !reply.result["tools"].is_array()) {
        throw ToolFailure(ErrorCode::RemoteUnavailable, "list_tools reply from " + endpoint() + " has no tools list");
    }
    return reply.result["tools"].get<std::vector<json>>();
}

std::vector<ToolMatch> RpcClient::find_tool(const std::string& query, const std::string& strategy, std::size_t limit) {
    const RpcReply reply = request("find_tool", json{{"query", query}, {"strategy", strategy}, {"limit", limit}});
    if (reply.error) throw_reply_error(*reply.error);
    std::vector<ToolMatch> out;
    for (const auto& m : reply.result.value("matches", json::array())) out.push_back(tool_match_from_json(m));
    return out;
}

ToolResult RpcClient::call_tool(const ToolCall& call) {
    const RpcReply reply = request("call_tool", to_json(call));
    if (reply.error) {
        const json& e = *reply.error;
        const json data = e.value("data", json());
        return ToolResult::failure(ToolError{error_code_from_rpc(e.value("code", -32603), data),
                                             e.value("message", std::string("remote error")),
                                             data.is_object() && data.contains("detail") ? data["detail"] : json()});
    }
    if (reply.result.value("status", std::string()) != "ok") {
        return ToolResult::failure(ErrorCode::ExecutionFailed, "malformed call_tool reply from " + endpoint());
    }
    return ToolResult::success(reply.result.value("payload", json()));
}

std::shared_ptr<RpcClient> connect(const std::string& endpoint, double timeout_seconds) {
    std::signal(SIGPIPE, SIG_IGN);
    std::shared_ptr<RpcClient> client;
    if (endpoint.rfind("stdio:", 0) == 0) {
        const std::string command = endpoint.substr(6);
        if (command.empty()) unavailable(endpoint, "empty command");
        auto framed = spawn_stdio(endpoint, command);
        framed->set_timeout(timeout_seconds);
        framed->initialize();
        framed->set_timeout(300.0);
        return framed;
    }
    if (endpoint.rfind("http://", 0) == 0) {
        std::string base = endpoint;
        if (base.size() > 7 && base.back() == '/') base.pop_back();
        client = std::make_shared<HttpClient>(endpoint, base, timeout_seconds);
        client->initialize();
        return client;
    }
    std::string address = endpoint.rfind("tcp://", 0) == 0 ? endpoint.substr(6) : endpoint;
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 == address.size()) {
        throw ToolFailure(ErrorCode::RemoteUnavailable, "endpoint '" + endpoint + "' is not host:port, http://host:port or stdio:<command>",
                          json{{"endpoint", endpoint}});
    }
    const int fd = connect_socket(endpoint, address.substr(0, colon), address.substr(colon + 1), timeout_seconds);
    auto framed = std::make_shared<FramedClient>(endpoint, fd, fd);
    framed->set_timeout(timeout_seconds);
    framed->initialize();
    framed->set_timeout(300.0);
    return framed;
}

// --- pool, proxy, import -------------------------------------------------------------

std::shared_ptr<RpcClient> ClientPool::get(const std::string& endpoint) {
    {
        std::lock_guard lock(mutex_);
        auto it = clients_.find(endpoint);
        if (it != clients_.end() && it->second->alive()) return it->second;
    }
    auto client = connect(endpoint);
    std::lock_guard lock(mutex_);
    auto& slot = clients_[endpoint];
    if (!slot || !slot->alive()) slot = client;
    return slot;
}

void ClientPool::drop(const std::string& endpoint) {
    std::lock_guard lock(mutex_);
    clients_.erase(endpoint);
}

void ClientPool::clear() {
    std::lock_guard lock(mutex_);
    clients_.clear();
}

ProxyHandler::ProxyHandler(ClientPool& pool, std::string endpoint, std::string tool)
    : pool_(pool), endpoint_(std::move(endpoint)), tool_(std::move(tool)) {}

json ProxyHandler::run(const json& arguments, const ToolContext&) {
    ToolResult r;
    try {
        r = pool_.get(endpoint_)->call_tool(ToolCall{tool_, arguments});
    } catch (const ToolFailure& f) {
        if (f.error().code == ErrorCode::RemoteUnavailable) pool_.drop(endpoint_);
        throw;
    }
    if (!r.ok()) throw ToolFailure(r.error.value_or(ToolError{}));
    return r.payload;
}

RemoteImport register_remote(Registry& registry, ClientPool& pool, const std::string& endpoint) {
    RemoteImport out;
    auto client = pool.get(endpoint);
    for (const auto& doc : client->list_tools()) {
        ToolSpec spec;
        try {
            spec = tool_spec_from_json(doc);
        } catch (const ToolFailure& f) {
            out.errors.push_back(f.error());
            continue;
        }
        if (registry.contains(spec.name)) {
            out.skipped.push_back(spec.name);
            continue;
        }
        ToolEntry entry;
        entry.spec = spec;
        entry.origin = Origin::Remote;
        entry.endpoint = endpoint;
        entry.handler_ref = "remote:" + endpoint;
        try {
            out.registered.push_back(registry.register_tool(std::move(entry)));
        } catch (const ToolFailure&) {
            out.skipped.push_back(spec.name);
        }
    }
    return out;
}

RemoteImport refresh_remote(Registry& registry, ClientPool& pool, const std::string& endpoint) {
    ToolFilter filter;
    filter.origin = Origin::Remote;
    for (const auto& e : registry.entries(filter)) {
        if (e->endpoint == endpoint) registry.unregister(e->spec.name);
    }
    pool.drop(endpoint);
    return register_remote(registry, pool, endpoint);
}

void install_remote_scheme(Registry& registry, ClientPool& pool) {
    registry.catalog().add_scheme("remote", [&pool](const ToolEntry& entry, const json&) {
        return std::make_shared<ProxyHandler>(pool, entry.endpoint, entry.spec.name);
    });
}

}  // namespace toolhub::wire
