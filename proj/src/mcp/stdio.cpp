// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/mcp.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace agentloom::mcp {

void TransportConfig::validate() const
{
    if (stdio.command.empty())
        throw ValidationError("MCP stdio command must be non-empty");
    if (!(request_timeout_seconds > 0))
        throw ValidationError("MCP request timeout must be positive");
}

namespace {

void ignore_sigpipe()
{
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

} // namespace

StdioConnection::StdioConnection(const TransportConfig& config)
    : timeout_(static_cast<std::int64_t>(config.request_timeout_seconds * 1000))
{
    config.validate();
    ignore_sigpipe();

    // Everything the child needs is built before fork.
    std::vector<std::string> argv_store{config.stdio.command};
    argv_store.insert(argv_store.end(), config.stdio.args.begin(), config.stdio.args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());
    argv.push_back(nullptr);

    std::map<std::string, std::string> env_map;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string_view::npos)
            env_map.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    for (auto const& [k, v] : config.stdio.env)
        env_map[k] = v;
    std::vector<std::string> env_store;
    for (auto const& [k, v] : env_map)
        env_store.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& e : env_store)
        envp.push_back(e.data());
    envp.push_back(nullptr);

    int to_child[2];
    int from_child[2];
    int exec_status[2];
    if (pipe2(to_child, O_CLOEXEC) != 0)
        throw LaunchError(fmt::format("pipe: {}", std::strerror(errno)));
    if (pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw LaunchError(fmt::format("pipe: {}", std::strerror(errno)));
    }
    if (pipe2(exec_status, O_CLOEXEC) != 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
            ::close(fd);
        throw LaunchError(fmt::format("pipe: {}", std::strerror(errno)));
    }

    pid_t pid = fork();
    if (pid < 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1], exec_status[0], exec_status[1]})
            ::close(fd);
        throw LaunchError(fmt::format("fork: {}", std::strerror(errno)));
    }
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        execvpe(argv[0], argv.data(), envp.data());
        int err = errno;
        [[maybe_unused]] auto n = write(exec_status[1], &err, sizeof err);
        _exit(127);
    }

    ::close(to_child[0]);
    ::close(from_child[1]);
    ::close(exec_status[1]);
    int child_errno = 0;
    ssize_t n;
    do {
        n = read(exec_status[0], &child_errno, sizeof child_errno);
    } while (n < 0 && errno == EINTR);
    ::close(exec_status[0]);
    if (n > 0) {
        ::close(to_child[1]);
        ::close(from_child[0]);
        waitpid(pid, nullptr, 0);
        throw LaunchError(fmt::format("cannot execute '{}': {}", config.stdio.command,
                                      std::strerror(child_errno)));
    }
    pid_ = pid;
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
}

StdioConnection::~StdioConnection()
{
    try {
        close(std::chrono::seconds{5});
    } catch (const std::exception& e) {
        spdlog::warn("closing MCP process failed: {}", e.what());
    }
}

void StdioConnection::write_line(const std::string& line)
{
    if (in_fd_ < 0)
        throw TransportError("MCP connection is closed");
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        ssize_t n = write(in_fd_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw TransportError(fmt::format("write to MCP server failed: {}", std::strerror(errno)));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> StdioConnection::read_line(std::chrono::steady_clock::time_point deadline)
{
    while (true) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            auto line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (out_fd_ < 0)
            throw TransportError("MCP connection is closed");
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0)
            return std::nullopt;
        pollfd pfd{out_fd_, POLLIN, 0};
        int rc = poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (rc < 0) {
            if (errno == EINTR)
                continue;
            throw TransportError(fmt::format("poll failed: {}", std::strerror(errno)));
        }
        if (rc == 0)
            return std::nullopt;
        char chunk[4096];
        ssize_t n = read(out_fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw TransportError(fmt::format("read from MCP server failed: {}", std::strerror(errno)));
        }
        if (n == 0)
            throw TransportError("MCP server closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

json StdioConnection::request(const std::string& method, const json& params)
{
    std::lock_guard lock(mutex_);
    auto const id = next_id_++;
    json req{{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}};
    write_line(req.dump());
    auto const deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
        auto line = read_line(deadline);
        if (!line) {
            abandoned_.insert(id);
            throw TransportError(fmt::format("MCP request '{}' timed out", method));
        }
        if (line->empty())
            continue;
        json msg;
        try {
            msg = json::parse(*line);
        } catch (const json::parse_error& e) {
            throw ProtocolError(fmt::format("malformed JSON-RPC line: {}", e.what()));
        }
        if (!msg.is_object())
            throw ProtocolError("JSON-RPC message must be an object");
        if (!msg.contains("id") || msg.at("id").is_null()) {
            // Server notifications and requests are not part of the supported subset.
            if (msg.contains("method"))
                continue;
            throw ProtocolError("JSON-RPC response without id");
        }
        if (msg.contains("method"))
            continue;
        if (!msg.at("id").is_number_integer())
            throw ProtocolError(fmt::format("response id {} matches no request", msg.at("id").dump()));
        auto const got = msg.at("id").get<std::int64_t>();
        if (got != id) {
            if (abandoned_.erase(got))
                continue;
            throw ProtocolError(fmt::format("response id {} matches no request", got));
        }
        if (auto err = msg.find("error"); err != msg.end())
            throw ProtocolError(fmt::format("JSON-RPC error {}: {}", err->value("code", 0),
                                            err->value("message", std::string("unknown"))));
        if (!msg.contains("result"))
            throw ProtocolError("JSON-RPC response has neither result nor error");
        return msg.at("result");
    }
}

void StdioConnection::notify(const std::string& method, const json& params)
{
    std::lock_guard lock(mutex_);
    write_line(json{{"jsonrpc", "2.0"}, {"method", method}, {"params", params}}.dump());
}

bool StdioConnection::alive()
{
    std::lock_guard lock(mutex_);
    if (reaped_ || pid_ < 0)
        return false;
    int status = 0;
    pid_t r = waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
        reaped_ = true;
        return false;
    }
    return true;
}

void StdioConnection::reap(std::chrono::milliseconds grace)
{
    if (reaped_ || pid_ < 0)
        return;
    auto const deadline = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < deadline) {
        pid_t r = waitpid(pid_, nullptr, WNOHANG);
        if (r == pid_ || (r < 0 && errno == ECHILD)) {
            reaped_ = true;
            return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds{5});
    }
    spdlog::warn("MCP server pid {} did not exit within {} ms; killing it", pid_, grace.count());
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    reaped_ = true;
}

void StdioConnection::close(std::chrono::milliseconds grace)
{
    std::lock_guard lock(mutex_);
    if (in_fd_ >= 0) {
        ::close(in_fd_);
        in_fd_ = -1;
    }
    reap(grace);
    if (out_fd_ >= 0) {
        ::close(out_fd_);
        out_fd_ = -1;
    }
}

ServerInfo initialize(StdioConnection& conn)
{
    json result;
    try {
        result = conn.request("initialize",
                              {{"protocolVersion", "2024-11-05"},
                               {"capabilities", json::object()},
                               {"clientInfo", {{"name", "agentloom"}, {"version", "0.1.0"}}}});
    } catch (const TransportError& e) {
        throw ProtocolError(fmt::format("MCP handshake failed: {}", e.what()));
    }
    if (!result.is_object())
        throw ProtocolError("initialize result must be an object");
    ServerInfo info;
    if (auto it = result.find("serverInfo"); it != result.end() && it->is_object()) {
        info.name = it->value("name", "");
        info.version = it->value("version", "");
    }
    conn.notify("notifications/initialized", json::object());
    return info;
}

} // namespace agentloom::mcp
