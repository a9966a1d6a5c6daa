// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/mcp.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>

namespace agentloom::mcp {

ToolSchema RemoteToolDescriptor::to_schema() const
{
    ToolSchema s;
    s.name = name;
    s.description = description;
    s.parameters = input_schema;
    return s;
}

std::vector<RemoteToolDescriptor> parse_tools_list(const json& result)
{
    if (!result.is_object() || !result.contains("tools") || !result.at("tools").is_array())
        throw ProtocolError("tools/list result must contain a 'tools' array");
    std::vector<RemoteToolDescriptor> out;
    for (auto const& t : result.at("tools")) {
        if (!t.is_object() || !t.contains("name") || !t.at("name").is_string())
            throw ProtocolError("tool descriptor must have a string name");
        RemoteToolDescriptor d;
        d.name = t.at("name").get<std::string>();
        d.description = t.value("description", "");
        d.input_schema = t.value("inputSchema", json{{"type", "object"}, {"properties", json::object()}});
        if (!d.input_schema.is_object())
            throw ProtocolError(fmt::format("tool '{}': inputSchema must be an object", d.name));
        out.push_back(std::move(d));
    }
    return out;
}

CallResult parse_call_result(const json& result)
{
    if (!result.is_object() || !result.contains("content") || !result.at("content").is_array())
        throw ProtocolError("tools/call result must contain a 'content' array");
    CallResult r;
    r.is_error = result.value("isError", false);
    for (auto const& item : result.at("content")) {
        auto const type = item.value("type", "");
        if (type == "text") {
            r.content.push_back(TextBlock{item.value("text", "")});
        } else if (type == "image" || type == "audio") {
            Base64Source src{item.value("mimeType", ""), item.value("data", "")};
            if (type == "image")
                r.content.push_back(ImageBlock{src});
            else
                r.content.push_back(AudioBlock{src});
        } else {
            // Resources and other kinds are outside the supported subset; keep them visible.
            r.content.push_back(TextBlock{item.dump()});
        }
    }
    return r;
}

namespace {

std::string make_client_id(const std::string& name)
{
    return fmt::format("{}-{}", name, random_hex_id().substr(0, 8));
}

ToolCallable proxy_for(std::function<CallResult(const std::string&, const json&)> call, std::string tool)
{
    return [call = std::move(call), tool = std::move(tool)](const json& args, ToolContext& ctx) {
        auto r = call(tool, args);
        if (r.is_error)
            ctx.mark_error();
        return r.content;
    };
}

CallResult call_over(StdioConnection& conn, const std::string& name, const json& arguments)
{
    json result;
    try {
        result = conn.request("tools/call", {{"name", name}, {"arguments", arguments}});
    } catch (const ProtocolError& e) {
        return CallResult{{TextBlock{fmt::format("Error: {}", e.what())}}, true};
    }
    return parse_call_result(result);
}

} // namespace

StatefulClient::StatefulClient(TransportConfig config, std::string name)
    : config_(std::move(config)), id_(make_client_id(name))
{
    config_.validate();
}

StatefulClient::~StatefulClient()
{
    std::lock_guard lock(mutex_);
    conn_.reset();
}

McpSession StatefulClient::connect()
{
    std::lock_guard lock(mutex_);
    if (session_.open)
        throw StateError("MCP session is already open");
    auto conn = std::make_unique<StdioConnection>(config_);
    auto info = initialize(*conn);
    conn_ = std::move(conn);
    session_ = {random_hex_id(), info, true};
    return session_;
}

void StatefulClient::close()
{
    std::lock_guard lock(mutex_);
    if (!session_.open)
        throw StateError("MCP session is not open");
    session_.open = false;
    if (conn_)
        conn_->close();
    conn_.reset();
}

bool StatefulClient::is_open() const
{
    std::lock_guard lock(mutex_);
    return session_.open;
}

template <class F>
auto StatefulClient::with_connection(F&& f)
{
    std::lock_guard lock(mutex_);
    if (!session_.open || !conn_)
        throw StateError("MCP session is not open; call connect() first");
    try {
        return f(*conn_);
    } catch (const TransportError&) {
        // The server is gone or wedged; a fresh connect() is required.
        session_.open = false;
        conn_->close(std::chrono::milliseconds{100});
        conn_.reset();
        throw;
    }
}

std::vector<RemoteToolDescriptor> StatefulClient::list_tools()
{
    return with_connection([](StdioConnection& c) { return parse_tools_list(c.request("tools/list", json::object())); });
}

CallResult StatefulClient::call_tool(const std::string& name, const json& arguments)
{
    return with_connection([&](StdioConnection& c) { return call_over(c, name, arguments); });
}

std::vector<ToolSchema> StatefulClient::list_tool_schemas()
{
    std::vector<ToolSchema> out;
    for (auto const& d : list_tools())
        out.push_back(d.to_schema());
    return out;
}

ToolCallable StatefulClient::get_callable(const std::string& tool_name)
{
    return proxy_for([this](const std::string& n, const json& a) { return call_tool(n, a); }, tool_name);
}

StatelessClient::StatelessClient(TransportConfig config, std::string name)
    : config_(std::move(config)), id_(make_client_id(name))
{
    config_.validate();
}

std::vector<RemoteToolDescriptor> StatelessClient::list_tools()
{
    StdioConnection conn(config_);
    initialize(conn);
    auto out = parse_tools_list(conn.request("tools/list", json::object()));
    conn.close();
    return out;
}

CallResult StatelessClient::call_tool(const std::string& name, const json& arguments)
{
    StdioConnection conn(config_);
    initialize(conn);
    auto out = call_over(conn, name, arguments);
    conn.close();
    return out;
}

std::vector<ToolSchema> StatelessClient::list_tool_schemas()
{
    std::vector<ToolSchema> out;
    for (auto const& d : list_tools())
        out.push_back(d.to_schema());
    return out;
}

ToolCallable StatelessClient::get_callable(const std::string& tool_name)
{
    auto config = config_;
    return proxy_for(
        [config](const std::string& n, const json& a) {
            StatelessClient once(config);
            return once.call_tool(n, a);
        },
        tool_name);
}

} // namespace agentloom::mcp
