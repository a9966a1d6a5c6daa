// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/mcp.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

using namespace agentloom;
using namespace agentloom::mcp;

namespace {

std::string fixture(const std::string& name)
{
    return std::string(AGENTLOOM_FIXTURES) + "/" + name;
}

class McpTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        auto const* info = ::testing::UnitTest::GetInstance()->current_test_info();
        log_ = std::filesystem::temp_directory_path() /
               (std::string("agentloom_mcp_") + info->name() + "_" + std::to_string(::getpid()) + ".log");
        std::filesystem::remove(log_);
    }
    void TearDown() override { std::filesystem::remove(log_); }

    TransportConfig config(const std::string& script = "mcp_tools.json", double timeout = 10.0) const
    {
        TransportConfig c;
        c.stdio.command = MOCK_MCP_SERVER;
        c.stdio.args = {"--script", fixture(script), "--log", log_.string()};
        c.request_timeout_seconds = timeout;
        return c;
    }

    /// Received JSON-RPC messages, keyed by server pid, in arrival order.
    std::map<int, std::vector<json>> wire() const
    {
        std::map<int, std::vector<json>> out;
        std::ifstream in(log_);
        std::string line;
        while (std::getline(in, line)) {
            auto space = line.find(' ');
            out[std::stoi(line.substr(0, space))].push_back(json::parse(line.substr(space + 1)));
        }
        return out;
    }

    std::size_t count(const std::string& method) const
    {
        std::size_t n = 0;
        for (auto const& [pid, msgs] : wire())
            for (auto const& m : msgs)
                n += m.value("method", "") == method;
        return n;
    }

    std::filesystem::path log_;
};

} // namespace

TEST_F(McpTest, StatefulSessionInitializesOnce)
{
    StatefulClient client(config());
    auto session = client.connect();
    EXPECT_TRUE(session.open);
    EXPECT_EQ(session.server_info.name, "scripted");
    EXPECT_EQ(session.server_info.version, "0.3");
    EXPECT_EQ(client.list_tools().size(), 5u);
    EXPECT_EQ(text_of(client.call_tool("fetch", {{"url", "u"}}).content), "<html>page</html>");
    EXPECT_EQ(text_of(client.call_tool("fetch", {{"url", "v"}}).content), "<html>page</html>");
    client.close();
    EXPECT_FALSE(client.is_open());
    EXPECT_EQ(count("initialize"), 1u);
    EXPECT_EQ(count("tools/call"), 2u);
    EXPECT_EQ(wire().size(), 1u);
}

TEST_F(McpTest, CloseTwiceIsStateError)
{
    StatefulClient client(config());
    client.connect();
    EXPECT_THROW(client.connect(), StateError);
    client.close();
    EXPECT_THROW(client.close(), StateError);
    EXPECT_THROW(client.call_tool("fetch", json::object()), StateError);
}

TEST_F(McpTest, ServerCrashClosesSession)
{
    StatefulClient client(config());
    client.connect();
    EXPECT_THROW(client.call_tool("crash", json::object()), TransportError);
    EXPECT_FALSE(client.is_open());
    EXPECT_THROW(client.call_tool("fetch", json::object()), StateError);
    // A fresh connect works again.
    client.connect();
    EXPECT_EQ(text_of(client.call_tool("fetch", json::object()).content), "<html>page</html>");
    client.close();
}

TEST_F(McpTest, StatelessCallPerSession)
{
    StatelessClient client(config());
    for (int i = 0; i < 3; ++i)
        EXPECT_EQ(text_of(client.call_tool("fetch", {{"url", "x"}}).content), "<html>page</html>");
    EXPECT_EQ(count("initialize"), 3u);
    EXPECT_EQ(wire().size(), 3u);
}

TEST_F(McpTest, StatelessMatchesStateful)
{
    StatelessClient stateless(config());
    StatefulClient stateful(config());
    stateful.connect();
    for (auto const* tool : {"fetch", "search", "broken"}) {
        json args{{"query", "q"}, {"url", "u"}};
        auto a = stateless.call_tool(tool, args);
        auto b = stateful.call_tool(tool, args);
        EXPECT_EQ(a.content, b.content) << tool;
        EXPECT_EQ(a.is_error, b.is_error);
    }
    EXPECT_TRUE(stateless.call_tool("broken", json::object()).is_error);
    stateful.close();
}

TEST_F(McpTest, ConcurrentStatelessCallsDoNotInterleave)
{
    StatelessClient client(config());
    constexpr int n = 6;
    std::vector<std::thread> threads;
    std::vector<std::string> results(n);
    for (int i = 0; i < n; ++i)
        threads.emplace_back([&, i] {
            results[i] = text_of(client.call_tool("search", {{"query", "q" + std::to_string(i)}}).content);
        });
    for (auto& t : threads)
        t.join();
    for (int i = 0; i < n; ++i)
        EXPECT_EQ(json::parse(results[i]), (json{{"query", "q" + std::to_string(i)}}));
    auto sessions = wire();
    ASSERT_EQ(sessions.size(), std::size_t(n));
    for (auto const& [pid, msgs] : sessions) {
        ASSERT_FALSE(msgs.empty());
        EXPECT_EQ(msgs.front()["method"], "initialize");
        std::size_t calls = 0;
        for (auto const& m : msgs)
            calls += m.value("method", "") == "tools/call";
        EXPECT_EQ(calls, 1u) << "pid " << pid;
    }
}

TEST_F(McpTest, ListTools)
{
    StatelessClient client(config());
    auto tools = client.list_tools();
    ASSERT_EQ(tools.size(), 5u);
    EXPECT_EQ(tools[0].name, "search");
    auto script = json::parse(std::ifstream(fixture("mcp_tools.json")));
    auto schema = tools[0].to_schema();
    EXPECT_EQ(schema.parameters, script["tools"][0]["inputSchema"]);
    EXPECT_EQ(schema.description, "Search the index.");
    EXPECT_TRUE(StatelessClient(config("mcp_empty.json")).list_tools().empty());
}

TEST_F(McpTest, MalformedListIsProtocolError)
{
    EXPECT_THROW(parse_tools_list(json{{"nope", 1}}), ProtocolError);
    EXPECT_THROW(parse_tools_list(json{{"tools", {{{"description", "x"}}}}}), ProtocolError);
    EXPECT_THROW(parse_call_result(json::array()), ProtocolError);
}

TEST_F(McpTest, ProxyRoundTripsArgumentsToTheWire)
{
    StatefulClient client(config());
    client.connect();
    Toolkit tk;
    EXPECT_EQ(tk.register_mcp_client(client, std::nullopt, std::vector<std::string>{"search"}), 1u);
    json args{{"query", "weather in Beijing"}, {"nested", {{"k", {1, 2.5, "x"}}}}, {"unicode", "δ"}};
    auto s = tk.call_tool_function(ToolUseBlock{"c1", "search", args});
    auto chunks = collect_chunks(s);
    ASSERT_EQ(chunks.size(), 1u);
    client.close();

    json sent;
    for (auto const& [pid, msgs] : wire())
        for (auto const& m : msgs)
            if (m.value("method", "") == "tools/call")
                sent = m["params"];
    EXPECT_EQ(sent["name"], "search");
    EXPECT_EQ(sent["arguments"].dump(), args.dump());
    EXPECT_EQ(json::parse(text_of(chunks[0].blocks)).dump(), args.dump());
}

TEST_F(McpTest, ProxyErrorMarksResult)
{
    StatelessClient client(config());
    Toolkit tk;
    EXPECT_EQ(tk.register_mcp_client(client), 5u);
    auto s = tk.call_tool_function(ToolUseBlock{"c1", "broken", json::object()});
    auto chunks = collect_chunks(s);
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_TRUE(chunks[0].is_error);
    EXPECT_EQ(text_of(chunks[0].blocks), "quota exceeded");
    EXPECT_EQ(tk.remove_mcp_clients({client.client_id()}), 5u);
}

TEST_F(McpTest, CrashThroughToolkitIsErrorResult)
{
    StatelessClient client(config());
    Toolkit tk;
    tk.register_mcp_client(client, std::nullopt, std::vector<std::string>{"crash"});
    auto s = tk.call_tool_function(ToolUseBlock{"c1", "crash", json::object()});
    auto chunks = collect_chunks(s);
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_TRUE(chunks[0].is_error);
}

TEST_F(McpTest, LaunchFailure)
{
    TransportConfig c;
    c.stdio.command = "/nonexistent/mcp-server";
    StatefulClient client(c);
    EXPECT_THROW(client.connect(), LaunchError);
    TransportConfig empty;
    EXPECT_THROW(empty.validate(), ValidationError);
}

TEST_F(McpTest, HandshakeTimeoutIsProtocolError)
{
    StatefulClient client(config("mcp_hang.json", 0.3));
    auto const t0 = std::chrono::steady_clock::now();
    EXPECT_THROW(client.connect(), ProtocolError);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(8));
    EXPECT_FALSE(client.is_open());
}

TEST_F(McpTest, RequestTimeoutIsTransportError)
{
    StatefulClient client(config("mcp_tools.json", 0.05));
    client.connect();
    EXPECT_THROW(client.call_tool("slow", json::object()), TransportError);
}

TEST_F(McpTest, UnknownRemoteToolReportedAsErrorResult)
{
    StatefulClient client(config());
    client.connect();
    auto r = client.call_tool("ghost", json::object());
    EXPECT_TRUE(r.is_error);
    EXPECT_NE(text_of(r.content).find("ghost"), std::string::npos);
    client.close();
}
