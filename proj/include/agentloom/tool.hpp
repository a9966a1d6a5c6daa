// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"
#include "agentloom/model.hpp"
#include "agentloom/state.hpp"
#include "agentloom/stream.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <vector>

namespace agentloom {

inline constexpr std::string_view kBasicGroup = "basic";
inline constexpr std::string_view kResetEquippedTools = "reset_equipped_tools";
inline constexpr std::string_view kInterruptedNotice =
    "<system-info>The tool execution was interrupted by the user. "
    "Output produced before the interruption is preserved above.</system-info>";
inline constexpr std::string_view kTimedOutNotice = "<system-info>The tool execution timed out.</system-info>";

struct ToolResultChunk {
    Blocks blocks;
    bool is_last = false;
    bool interrupted = false;
    bool is_error = false;

    bool operator==(const ToolResultChunk&) const = default;
};

using ToolResultStream = Stream<ToolResultChunk>;

/// Raised inside a tool body by ToolContext when the call has been stopped.
class ToolInterrupted : public std::exception {
public:
    const char* what() const noexcept override { return "tool interrupted"; }
};

/// Passed to every tool body. Streaming tools call `emit` once per yielded chunk.
class ToolContext {
public:
    using EmitFn = std::function<void(Blocks)>;

    ToolContext(std::stop_token stop, EmitFn emit) : stop_(std::move(stop)), emit_(std::move(emit)) {}

    std::stop_token stop_token() const { return stop_; }
    bool stop_requested() const { return stop_.stop_requested(); }

    /// Throws ToolInterrupted once stopped.
    void emit(Blocks chunk);
    void emit(std::string text) { emit(Blocks{TextBlock{std::move(text)}}); }

    /// Sleeps unless stopped first; throws ToolInterrupted when stopped.
    void sleep_for(std::chrono::milliseconds duration);

    /// Marks the result as an error without raising; the final chunk gets `is_error`.
    void mark_error() { error_ = true; }
    bool error_marked() const { return error_; }

private:
    std::stop_token stop_;
    EmitFn emit_;
    bool error_ = false;
};

/// A tool body. The returned blocks, when any, form the final chunk.
using ToolCallable = std::function<Blocks(const json& args, ToolContext& ctx)>;

struct ParamSpec {
    std::string name;
    std::string type = "string";
    std::string description;
    std::optional<json> default_value;
};

/// Explicit stand-in for reflection: what a function declares about itself.
struct FunctionDescriptor {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
};

struct ToolFunction {
    FunctionDescriptor descriptor;
    ToolCallable call;
};

ToolFunction make_tool(std::string name, std::string description, std::vector<ParamSpec> params,
                       ToolCallable call);

/// name/description/parameters from a descriptor; required = params without defaults.
ToolSchema derive_schema(const FunctionDescriptor& descriptor);

/// Checks the name grammar and that parameters is an object schema.
void validate_schema(const ToolSchema& schema);

using ToolPostprocess = std::function<Blocks(const ToolUseBlock& call, Blocks blocks)>;

struct ToolRegistration {
    std::optional<ToolSchema> schema;
    json preset_args = json::object();
    ToolPostprocess postprocess;
    std::string group = std::string(kBasicGroup);
    /// Extra schema properties, e.g. {"thinking": {"type": "string"}}, plus optional "required" list
    /// under the key "$required". Values for these keys are removed before the call.
    std::optional<json> extend_model;
    std::optional<std::chrono::milliseconds> timeout;
};

struct ToolOrigin {
    bool mcp = false;
    std::string client_id;

    bool operator==(const ToolOrigin&) const = default;
};

struct ToolEntry {
    ToolSchema schema;          // as published
    ToolSchema original_schema; // before preset stripping and extension
    ToolCallable callable;
    json preset_args = json::object();
    ToolPostprocess postprocess;
    std::string group;
    ToolOrigin origin;
    std::vector<std::string> extended_keys;
    std::chrono::milliseconds timeout{300'000};
};

struct ToolGroup {
    std::string name;
    std::string description;
    bool active = false;
    std::string notes;

    bool operator==(const ToolGroup&) const = default;
};

/// Something that exposes remote tools as local callables (MCP clients implement it).
class ToolProvider {
public:
    virtual ~ToolProvider() = default;
    virtual std::string client_id() const = 0;
    virtual std::vector<ToolSchema> list_tool_schemas() = 0;
    virtual ToolCallable get_callable(const std::string& tool_name) = 0;
};

class Toolkit : public StateModule {
public:
    Toolkit();

    /// Throws ConflictError on a duplicate name, NotFoundError on an unknown group and
    /// ValidationError for preset keys the callable does not declare.
    void register_tool_function(ToolFunction fn, ToolRegistration opts = {});
    void remove_tool_function(const std::string& name);
    bool has_tool(const std::string& name) const;
    std::optional<ToolEntry> entry(const std::string& name) const;
    std::vector<std::string> tool_names() const;

    /// Schemas of tools in active groups in registration order, followed by the
    /// `reset_equipped_tools` meta-tool whenever optional groups exist.
    std::vector<ToolSchema> get_json_schemas() const;

    void create_tool_group(const std::string& name, const std::string& description,
                           bool active = false, const std::string& notes = "");
    void update_tool_groups(const std::vector<std::string>& names, bool active);
    void remove_tool_groups(const std::vector<std::string>& names);
    std::vector<ToolGroup> groups() const;
    std::vector<std::string> active_groups() const;
    /// Notes of active groups, for the system prompt.
    std::string active_group_notes() const;

    std::size_t register_mcp_client(ToolProvider& client, std::optional<std::string> group = {},
                                    std::optional<std::vector<std::string>> tool_filter = {});
    std::size_t remove_mcp_clients(const std::vector<std::string>& client_ids);

    /// Never throws for agent-level faults: unknown or inactive tools and callable exceptions
    /// become error chunks. Stopping `stop` yields an interruption notice as the last chunk.
    ToolResultStream call_tool_function(const ToolUseBlock& call, std::stop_token stop = {}) const;

    /// The meta-tool body: applies activations and returns a confirmation.
    std::string reset_equipped_tools(const json& activations);

private:
    ToolSchema meta_tool_schema() const;

    mutable std::shared_mutex mutex_;
    std::vector<std::string> order_;
    std::map<std::string, std::shared_ptr<const ToolEntry>> entries_;
    std::vector<ToolGroup> groups_;
    std::vector<std::string> mcp_clients_;
};

/// Drains a result stream.
std::vector<ToolResultChunk> collect_chunks(ToolResultStream& stream);

/// All blocks of a chunk sequence, concatenated.
Blocks chunks_to_blocks(const std::vector<ToolResultChunk>& chunks);

} // namespace agentloom
