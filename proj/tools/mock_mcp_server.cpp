// SPDX-License-Identifier: Apache-2.0
// Scripted MCP server speaking newline-delimited JSON-RPC on stdin/stdout.
//
//   mock_mcp_server --script tools.json [--log wire.log]
//
// Script: {"server_info": {...}, "tools": [{"name", "description", "inputSchema",
//          "result": {"content": [...], "isError": bool}, "echo": bool, "delay_ms": int,
//          "crash": bool}], "hang_on_initialize": bool}
// Every received line is appended to the log file, which tests read to count handshakes.
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

using json = nlohmann::json;

namespace {

void append_log(const std::string& path, const std::string& line)
{
    if (path.empty())
        return;
    // O_APPEND keeps lines from concurrent servers sharing one log intact.
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0)
        return;
    std::string data = std::to_string(::getpid()) + " " + line + "\n";
    [[maybe_unused]] auto n = ::write(fd, data.data(), data.size());
    ::close(fd);
}

void send(const json& msg)
{
    std::cout << msg.dump() << '\n' << std::flush;
}

json error_response(const json& id, int code, const std::string& message)
{
    return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

} // namespace

int main(int argc, char** argv)
{
    std::string script_path;
    std::string log_path;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--script" && i + 1 < argc)
            script_path = argv[++i];
        else if (arg == "--log" && i + 1 < argc)
            log_path = argv[++i];
        else {
            std::fprintf(stderr, "usage: %s --script FILE [--log FILE]\n", argv[0]);
            return 2;
        }
    }
    json script = json::object();
    if (!script_path.empty()) {
        std::ifstream in(script_path);
        if (!in) {
            std::fprintf(stderr, "cannot open %s\n", script_path.c_str());
            return 2;
        }
        script = json::parse(in);
    }
    auto const tools = script.value("tools", json::array());

    std::string line;
    while (std::getline(std::cin, line)) {
        append_log(log_path, line);
        json req;
        try {
            req = json::parse(line);
        } catch (const json::parse_error&) {
            send(error_response(nullptr, -32700, "parse error"));
            continue;
        }
        auto const method = req.value("method", "");
        if (!req.contains("id"))
            continue; // notification
        auto const id = req.at("id");

        if (method == "initialize") {
            if (script.value("hang_on_initialize", false))
                continue;
            send({{"jsonrpc", "2.0"},
                  {"id", id},
                  {"result",
                   {{"protocolVersion", "2024-11-05"},
                    {"capabilities", {{"tools", json::object()}}},
                    {"serverInfo", script.value("server_info", json{{"name", "mock"}, {"version", "1.0"}})}}}});
        } else if (method == "tools/list") {
            json listed = json::array();
            for (auto const& t : tools)
                listed.push_back({{"name", t.at("name")},
                                  {"description", t.value("description", "")},
                                  {"inputSchema", t.value("inputSchema", json{{"type", "object"}})}});
            send({{"jsonrpc", "2.0"}, {"id", id}, {"result", {{"tools", listed}}}});
        } else if (method == "tools/call") {
            auto const params = req.value("params", json::object());
            auto const name = params.value("name", "");
            auto it = std::find_if(tools.begin(), tools.end(),
                                   [&](const json& t) { return t.value("name", "") == name; });
            if (it == tools.end()) {
                send(error_response(id, -32602, "unknown tool: " + name));
                continue;
            }
            if (it->value("crash", false))
                _exit(3);
            if (auto d = it->value("delay_ms", 0); d > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds{d});
            json result;
            if (it->value("echo", false))
                result = {{"content", {{{"type", "text"}, {"text", params.value("arguments", json::object()).dump()}}}},
                          {"isError", false}};
            else
                result = it->value("result", json{{"content", json::array()}, {"isError", false}});
            send({{"jsonrpc", "2.0"}, {"id", id}, {"result", result}});
        } else {
            send(error_response(id, -32601, "method not found: " + method));
        }
    }
    return 0;
}
