// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"
#include "agentloom/model.hpp"
#include "agentloom/tool.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agentloom::mcp {

struct StdioConfig {
    std::string command;
    std::vector<std::string> args;
    std::map<std::string, std::string> env;
};

struct TransportConfig {
    StdioConfig stdio;
    double request_timeout_seconds = 30.0;

    void validate() const;
};

struct ServerInfo {
    std::string name;
    std::string version;
};

struct McpSession {
    std::string session_id;
    ServerInfo server_info;
    bool open = false;
};

struct RemoteToolDescriptor {
    std::string name;
    std::string description;
    json input_schema = json::object();

    ToolSchema to_schema() const;
};

struct CallResult {
    Blocks content;
    bool is_error = false;
};

/// Parses a `tools/list` result. Throws ProtocolError when malformed.
std::vector<RemoteToolDescriptor> parse_tools_list(const json& result);

/// Parses a `tools/call` result. Throws ProtocolError when malformed.
CallResult parse_call_result(const json& result);

/// One child process speaking newline-delimited JSON-RPC 2.0 over its standard streams.
/// Requests are serialized; each response is matched to its request id.
class StdioConnection {
public:
    /// Spawns the process. Throws LaunchError when it cannot be started.
    explicit StdioConnection(const TransportConfig& config);
    ~StdioConnection();

    StdioConnection(const StdioConnection&) = delete;
    StdioConnection& operator=(const StdioConnection&) = delete;

    /// Throws TransportError on a dead peer or timeout, ProtocolError on an error response or
    /// a response that matches no request.
    json request(const std::string& method, const json& params);
    void notify(const std::string& method, const json& params);

    /// Closes stdin, waits up to `grace` for exit, then kills. Idempotent.
    void close(std::chrono::milliseconds grace = std::chrono::seconds{5});
    bool alive();
    int pid() const noexcept { return pid_; }

private:
    void write_line(const std::string& line);
    std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline);
    void reap(std::chrono::milliseconds grace);

    std::mutex mutex_;
    std::chrono::milliseconds timeout_;
    int pid_ = -1;
    int in_fd_ = -1;  // child's stdin
    int out_fd_ = -1; // child's stdout
    std::string buffer_;
    std::int64_t next_id_ = 1;
    std::set<std::int64_t> abandoned_;
    bool reaped_ = false;
};

/// Runs the `initialize` handshake. A timeout here is a ProtocolError.
ServerInfo initialize(StdioConnection& conn);

/// Keeps one session open between explicit connect() and close().
class StatefulClient : public ToolProvider {
public:
    explicit StatefulClient(TransportConfig config, std::string name = "mcp");
    ~StatefulClient() override;

    /// Spawns and initializes. Throws StateError when already open.
    McpSession connect();
    /// Throws StateError when not open.
    void close();
    bool is_open() const;
    const McpSession& session() const noexcept { return session_; }

    std::vector<RemoteToolDescriptor> list_tools();
    /// A server death marks the session closed and throws TransportError.
    CallResult call_tool(const std::string& name, const json& arguments);

    std::string client_id() const override { return id_; }
    std::vector<ToolSchema> list_tool_schemas() override;
    ToolCallable get_callable(const std::string& tool_name) override;

private:
    template <class F>
    auto with_connection(F&& f);

    TransportConfig config_;
    std::string id_;
    mutable std::mutex mutex_;
    std::unique_ptr<StdioConnection> conn_;
    McpSession session_;
};

/// Opens a fresh session (spawn, initialize, request, close) for every operation.
class StatelessClient : public ToolProvider {
public:
    explicit StatelessClient(TransportConfig config, std::string name = "mcp");

    std::vector<RemoteToolDescriptor> list_tools();
    CallResult call_tool(const std::string& name, const json& arguments);

    std::string client_id() const override { return id_; }
    std::vector<ToolSchema> list_tool_schemas() override;
    ToolCallable get_callable(const std::string& tool_name) override;

private:
    TransportConfig config_;
    std::string id_;
};

} // namespace agentloom::mcp
