#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "toolhub/caller.hpp"
#include "toolhub/finder.hpp"
#include "toolhub/protocol.hpp"
#include "toolhub/registry.hpp"

namespace toolhub::wire {

inline constexpr std::string_view kProtocolVersion = "toolhub/1";
inline constexpr std::size_t kMaxFrameBytes = 64u * 1024u * 1024u;
inline constexpr double kConnectTimeoutSeconds = 5.0;

// JSON-RPC error codes.
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;

int rpc_code(ErrorCode code);
/// Inverse of rpc_code for the tool-level codes; data.code wins when present.
ErrorCode error_code_from_rpc(int code, const json& data);

// ---------------------------------------------------------------------------
// Framing: "Content-Length: <n>\r\n\r\n" followed by exactly n body bytes.
// <n> is a decimal without leading zeros.
// ---------------------------------------------------------------------------

std::string encode_frame(std::string_view body);

class FrameDecoder {
public:
    struct Event {
        enum class Kind { Frame, Error } kind = Kind::Frame;
        std::string body;     // Frame
        std::string message;  // Error
    };

    explicit FrameDecoder(std::size_t max_frame = kMaxFrameBytes) : max_frame_(max_frame) {}

    void feed(std::string_view bytes) { buffer_.append(bytes.data(), bytes.size()); }
    /// Next complete frame, or an Error for bytes that violate the grammar
    /// (the decoder then skips to the next header). nullopt = need more input.
    std::optional<Event> next();
    std::size_t buffered() const noexcept { return buffer_.size(); }

private:
    Event resync(std::string message);

    std::size_t max_frame_;
    std::string buffer_;
};

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

json rpc_result(const json& id, json result);
json rpc_error(const json& id, int code, const std::string& message, json data = nullptr);
json rpc_tool_error(const json& id, const ToolError& err);

/// Transport-independent request handling. Methods: initialize, list_tools
/// (tools/list), find_tool, call_tool (tools/call).
class RpcServer {
public:
    RpcServer(Registry& registry, Caller& caller, Finder& finder);

    /// Handles one request body and returns the response body.
    std::string handle(std::string_view body);
    json handle_json(const json& request);

private:
    json dispatch(const std::string& method, const json& params);

    Registry& registry_;
    Caller& caller_;
    Finder& finder_;
};

/// Reads frames from in_fd and answers on out_fd until EOF. Each request runs
/// on its own thread; responses may leave in any order.
void serve_framed(RpcServer& server, int in_fd, int out_fd);

/// A listening server (tcp or http). Destruction stops it.
class ServerHandle {
public:
    virtual ~ServerHandle() = default;
    virtual int port() const = 0;
    virtual void stop() = 0;
    /// Blocks until stop() is called or the server fails.
    virtual void wait() = 0;
};

/// "host:port"; port 0 picks a free port. Throws std::runtime_error when the
/// address cannot be bound.
std::unique_ptr<ServerHandle> serve_tcp(RpcServer& server, const std::string& bind);
std::unique_ptr<ServerHandle> serve_http(RpcServer& server, const std::string& bind);

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

struct RpcReply {
    json result;               // set on success
    std::optional<json> error; // {code, message, data}
};

class RpcClient {
public:
    virtual ~RpcClient() = default;
    /// Throws ToolFailure(RemoteUnavailable) when the transport fails.
    virtual RpcReply request(const std::string& method, const json& params) = 0;
    virtual bool alive() const = 0;
    virtual std::string endpoint() const = 0;

    /// Checks the protocol version; throws ToolFailure(RemoteUnavailable)
    /// naming both versions on mismatch.
    json initialize();
    std::vector<json> list_tools(const json& filter = json::object());
    std::vector<ToolMatch> find_tool(const std::string& query, const std::string& strategy, std::size_t limit);
    ToolResult call_tool(const ToolCall& call);
};

/// Accepts "host:port", "tcp://host:port", "http://host:port" and
/// "stdio:<command>". Performs the initialize handshake.
std::shared_ptr<RpcClient> connect(const std::string& endpoint, double timeout_seconds = kConnectTimeoutSeconds);

/// Shared connections keyed by endpoint; dead ones are replaced on demand.
class ClientPool {
public:
    std::shared_ptr<RpcClient> get(const std::string& endpoint);
    void drop(const std::string& endpoint);
    void clear();

private:
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<RpcClient>> clients_;
};

/// Forwards validated arguments to the remote tool.
class ProxyHandler final : public ToolHandler {
public:
    ProxyHandler(ClientPool& pool, std::string endpoint, std::string tool);
    json run(const json& arguments, const ToolContext& ctx) override;

private:
    ClientPool& pool_;
    std::string endpoint_;
    std::string tool_;
};

struct RemoteImport {
    std::vector<std::string> registered;
    std::vector<std::string> skipped;   // name collisions; local wins
    std::vector<ToolError> errors;      // malformed remote specs
};

/// Imports every tool the endpoint lists. Throws ToolFailure(RemoteUnavailable).
RemoteImport register_remote(Registry& registry, ClientPool& pool, const std::string& endpoint);
/// Drops the tools previously imported from the endpoint and imports again.
RemoteImport refresh_remote(Registry& registry, ClientPool& pool, const std::string& endpoint);

/// Installs the "remote" handler scheme into the registry's catalog.
void install_remote_scheme(Registry& registry, ClientPool& pool);

}  // namespace toolhub::wire
