// SPDX-License-Identifier: Apache-2.0
#include "agentloom/tool.hpp"

#include "agentloom/errors.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <regex>
#include <thread>

namespace agentloom {

void ToolContext::emit(Blocks chunk)
{
    if (stop_.stop_requested())
        throw ToolInterrupted();
    if (emit_)
        emit_(std::move(chunk));
}

void ToolContext::sleep_for(std::chrono::milliseconds duration)
{
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    cv.wait_for(lock, stop_, duration, [] { return false; });
    if (stop_.stop_requested())
        throw ToolInterrupted();
}

ToolFunction make_tool(std::string name, std::string description, std::vector<ParamSpec> params,
                       ToolCallable call)
{
    return {{std::move(name), std::move(description), std::move(params)}, std::move(call)};
}

ToolSchema derive_schema(const FunctionDescriptor& descriptor)
{
    ToolSchema s;
    s.name = descriptor.name;
    s.description = descriptor.description;
    json properties = json::object();
    json required = json::array();
    for (auto const& p : descriptor.params) {
        json prop{{"type", p.type}};
        if (!p.description.empty())
            prop["description"] = p.description;
        if (p.default_value)
            prop["default"] = *p.default_value;
        else
            required.push_back(p.name);
        properties[p.name] = std::move(prop);
    }
    s.parameters = {{"type", "object"}, {"properties", std::move(properties)}};
    if (!required.empty())
        s.parameters["required"] = std::move(required);
    return s;
}

void validate_schema(const ToolSchema& schema)
{
    static const std::regex name_re("[A-Za-z0-9_-]+");
    if (!std::regex_match(schema.name, name_re))
        throw ValidationError(fmt::format("invalid tool name '{}'", schema.name));
    auto const& p = schema.parameters;
    if (!p.is_object() || p.value("type", "") != "object")
        throw ValidationError(fmt::format("tool '{}': parameters must be an object schema", schema.name));
    if (p.contains("properties") && !p.at("properties").is_object())
        throw ValidationError(fmt::format("tool '{}': properties must be an object", schema.name));
    if (p.contains("required")) {
        auto const& r = p.at("required");
        if (!r.is_array() || std::any_of(r.begin(), r.end(), [](const json& x) { return !x.is_string(); }))
            throw ValidationError(fmt::format("tool '{}': required must be a list of names", schema.name));
    }
}

namespace {

Blocks text_blocks(std::string text)
{
    return Blocks{TextBlock{std::move(text)}};
}

ToolResultStream single_chunk(ToolResultChunk chunk)
{
    chunk.is_last = true;
    return ToolResultStream::from(std::vector<ToolResultChunk>{std::move(chunk)});
}

ToolResultStream error_stream(std::string text)
{
    return single_chunk({text_blocks(std::move(text)), true, false, true});
}

void erase_from_required(json& parameters, const std::string& key)
{
    auto it = parameters.find("required");
    if (it == parameters.end())
        return;
    json kept = json::array();
    for (auto const& r : *it)
        if (r != key)
            kept.push_back(r);
    if (kept.empty())
        parameters.erase("required");
    else
        *it = std::move(kept);
}

/// Shared between the producer thread running a tool body and the consuming stream.
struct CallState {
    std::mutex mutex;
    std::condition_variable_any cv;
    std::deque<Blocks> queue;
    bool finished = false;
    bool marked_error = false;
    std::optional<std::string> error;
    std::stop_source stop;
};

} // namespace

Toolkit::Toolkit()
{
    groups_.push_back({std::string(kBasicGroup), "Basic tools that are always available.", true, ""});
    register_state(
        "groups",
        [this] {
            std::shared_lock lock(mutex_);
            json out = json::object();
            for (auto const& g : groups_)
                out[g.name] = g.active;
            return out;
        },
        [this](const json& j) {
            if (!j.is_object())
                throw StateError("toolkit groups state must be an object");
            std::unique_lock lock(mutex_);
            std::vector<std::string> missing;
            std::vector<std::string> extra;
            for (auto const& g : groups_)
                if (!j.contains(g.name))
                    missing.push_back(g.name);
            for (auto const& [k, v] : j.items())
                if (std::none_of(groups_.begin(), groups_.end(),
                                 [&](const ToolGroup& g) { return g.name == k; }))
                    extra.push_back(k);
            if (!missing.empty() || !extra.empty())
                throw StateError(fmt::format("toolkit groups mismatch; missing keys: [{}], extra keys: [{}]",
                                             fmt::join(missing, ", "), fmt::join(extra, ", ")));
            for (auto& g : groups_)
                g.active = g.name == kBasicGroup ? true : j.at(g.name).get<bool>();
        });
}

void Toolkit::register_tool_function(ToolFunction fn, ToolRegistration opts)
{
    if (!fn.call)
        throw ValidationError("tool callable must not be empty");
    ToolSchema original = opts.schema ? *opts.schema : derive_schema(fn.descriptor);
    validate_schema(original);
    if (original.name == kResetEquippedTools)
        throw ConflictError(fmt::format("tool name '{}' is reserved", original.name));

    if (!opts.preset_args.is_object())
        throw ValidationError("preset_args must be an object");
    auto const props = original.parameters.value("properties", json::object());
    for (auto const& [key, value] : opts.preset_args.items())
        if (!props.contains(key))
            throw ValidationError(fmt::format("preset argument '{}' is not a parameter of tool '{}'",
                                              key, original.name));

    auto entry = std::make_shared<ToolEntry>();
    entry->original_schema = original;
    entry->schema = original;
    auto& published = entry->schema.parameters;
    for (auto const& [key, value] : opts.preset_args.items()) {
        published["properties"].erase(key);
        erase_from_required(published, key);
    }
    if (opts.extend_model) {
        if (!opts.extend_model->is_object())
            throw ValidationError("extend_model must be an object of properties");
        if (!published.contains("properties"))
            published["properties"] = json::object();
        for (auto const& [key, value] : opts.extend_model->items()) {
            if (key == "$required")
                continue;
            if (!props.contains(key))
                entry->extended_keys.push_back(key);
            published["properties"][key] = value;
        }
        if (auto it = opts.extend_model->find("$required"); it != opts.extend_model->end()) {
            if (!published.contains("required"))
                published["required"] = json::array();
            for (auto const& r : *it)
                if (std::find(published["required"].begin(), published["required"].end(), r) ==
                    published["required"].end())
                    published["required"].push_back(r);
        }
    }
    entry->callable = std::move(fn.call);
    entry->preset_args = std::move(opts.preset_args);
    entry->postprocess = std::move(opts.postprocess);
    entry->group = opts.group;
    if (opts.timeout)
        entry->timeout = *opts.timeout;

    std::unique_lock lock(mutex_);
    if (std::none_of(groups_.begin(), groups_.end(),
                     [&](const ToolGroup& g) { return g.name == opts.group; }))
        throw NotFoundError(fmt::format("tool group '{}' does not exist", opts.group));
    if (entries_.count(original.name))
        throw ConflictError(fmt::format("tool '{}' is already registered", original.name));
    order_.push_back(original.name);
    entries_.emplace(original.name, std::move(entry));
}

void Toolkit::remove_tool_function(const std::string& name)
{
    std::unique_lock lock(mutex_);
    if (!entries_.erase(name))
        throw NotFoundError(fmt::format("tool '{}' is not registered", name));
    order_.erase(std::remove(order_.begin(), order_.end(), name), order_.end());
}

bool Toolkit::has_tool(const std::string& name) const
{
    std::shared_lock lock(mutex_);
    return entries_.count(name) > 0;
}

std::optional<ToolEntry> Toolkit::entry(const std::string& name) const
{
    std::shared_lock lock(mutex_);
    auto it = entries_.find(name);
    if (it == entries_.end())
        return std::nullopt;
    return *it->second;
}

std::vector<std::string> Toolkit::tool_names() const
{
    std::shared_lock lock(mutex_);
    return order_;
}

ToolSchema Toolkit::meta_tool_schema() const
{
    ToolSchema s;
    s.name = std::string(kResetEquippedTools);
    s.description =
        "Activate or deactivate tool groups. Pass true to equip a group's tools and false to put "
        "them away; groups not mentioned keep their current state.";
    json properties = json::object();
    for (auto const& g : groups_) {
        if (g.name == kBasicGroup)
            continue;
        properties[g.name] = {{"type", "boolean"}, {"description", g.description}};
    }
    s.parameters = {{"type", "object"}, {"properties", std::move(properties)}};
    return s;
}

std::vector<ToolSchema> Toolkit::get_json_schemas() const
{
    std::shared_lock lock(mutex_);
    std::vector<ToolSchema> out;
    for (auto const& name : order_) {
        auto const& e = *entries_.at(name);
        auto g = std::find_if(groups_.begin(), groups_.end(),
                              [&](const ToolGroup& grp) { return grp.name == e.group; });
        if (g != groups_.end() && g->active)
            out.push_back(e.schema);
    }
    if (groups_.size() > 1)
        out.push_back(meta_tool_schema());
    return out;
}

void Toolkit::create_tool_group(const std::string& name, const std::string& description, bool active,
                                const std::string& notes)
{
    static const std::regex name_re("[A-Za-z0-9_-]+");
    if (!std::regex_match(name, name_re))
        throw ValidationError(fmt::format("invalid tool group name '{}'", name));
    std::unique_lock lock(mutex_);
    if (std::any_of(groups_.begin(), groups_.end(), [&](const ToolGroup& g) { return g.name == name; }))
        throw ConflictError(fmt::format("tool group '{}' already exists", name));
    groups_.push_back({name, description, active, notes});
}

void Toolkit::update_tool_groups(const std::vector<std::string>& names, bool active)
{
    std::unique_lock lock(mutex_);
    for (auto const& n : names) {
        if (n == kBasicGroup)
            throw ValidationError("the basic tool group is protected");
        if (std::none_of(groups_.begin(), groups_.end(), [&](const ToolGroup& g) { return g.name == n; }))
            throw NotFoundError(fmt::format("tool group '{}' does not exist", n));
    }
    for (auto& g : groups_)
        if (std::find(names.begin(), names.end(), g.name) != names.end())
            g.active = active;
}

void Toolkit::remove_tool_groups(const std::vector<std::string>& names)
{
    std::unique_lock lock(mutex_);
    for (auto const& n : names) {
        if (n == kBasicGroup)
            throw ValidationError("the basic tool group is protected");
        if (std::none_of(groups_.begin(), groups_.end(), [&](const ToolGroup& g) { return g.name == n; }))
            throw NotFoundError(fmt::format("tool group '{}' does not exist", n));
    }
    auto doomed = [&](const std::string& g) { return std::find(names.begin(), names.end(), g) != names.end(); };
    std::vector<std::string> kept;
    for (auto const& name : order_) {
        if (doomed(entries_.at(name)->group))
            entries_.erase(name);
        else
            kept.push_back(name);
    }
    order_ = std::move(kept);
    groups_.erase(std::remove_if(groups_.begin(), groups_.end(),
                                 [&](const ToolGroup& g) { return doomed(g.name); }),
                  groups_.end());
}

std::vector<ToolGroup> Toolkit::groups() const
{
    std::shared_lock lock(mutex_);
    return groups_;
}

std::vector<std::string> Toolkit::active_groups() const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (auto const& g : groups_)
        if (g.active)
            out.push_back(g.name);
    return out;
}

std::string Toolkit::active_group_notes() const
{
    std::shared_lock lock(mutex_);
    std::string out;
    for (auto const& g : groups_) {
        if (!g.active || g.notes.empty())
            continue;
        if (!out.empty())
            out += "\n\n";
        out += fmt::format("## {} tools\n{}", g.name, g.notes);
    }
    return out;
}

std::size_t Toolkit::register_mcp_client(ToolProvider& client, std::optional<std::string> group,
                                         std::optional<std::vector<std::string>> tool_filter)
{
    auto const id = client.client_id();
    auto schemas = client.list_tool_schemas();
    std::vector<ToolSchema> selected;
    for (auto& s : schemas)
        if (!tool_filter || std::find(tool_filter->begin(), tool_filter->end(), s.name) != tool_filter->end())
            selected.push_back(std::move(s));
    {
        std::shared_lock lock(mutex_);
        for (auto const& s : selected)
            if (entries_.count(s.name))
                throw ConflictError(fmt::format("MCP tool '{}' collides with a registered tool", s.name));
    }
    std::size_t n = 0;
    for (auto const& s : selected) {
        ToolRegistration opts;
        opts.schema = s;
        opts.group = group.value_or(std::string(kBasicGroup));
        register_tool_function({{s.name, s.description, {}}, client.get_callable(s.name)}, std::move(opts));
        std::unique_lock lock(mutex_);
        auto& e = entries_.at(s.name);
        auto patched = std::make_shared<ToolEntry>(*e);
        patched->origin = {true, id};
        e = std::move(patched);
        ++n;
    }
    std::unique_lock lock(mutex_);
    if (std::find(mcp_clients_.begin(), mcp_clients_.end(), id) == mcp_clients_.end())
        mcp_clients_.push_back(id);
    return n;
}

std::size_t Toolkit::remove_mcp_clients(const std::vector<std::string>& client_ids)
{
    std::unique_lock lock(mutex_);
    for (auto const& id : client_ids)
        if (std::find(mcp_clients_.begin(), mcp_clients_.end(), id) == mcp_clients_.end())
            throw NotFoundError(fmt::format("MCP client '{}' is not registered", id));
    std::size_t removed = 0;
    std::vector<std::string> kept;
    for (auto const& name : order_) {
        auto const& origin = entries_.at(name)->origin;
        if (origin.mcp && std::find(client_ids.begin(), client_ids.end(), origin.client_id) != client_ids.end()) {
            entries_.erase(name);
            ++removed;
        } else {
            kept.push_back(name);
        }
    }
    order_ = std::move(kept);
    for (auto const& id : client_ids)
        mcp_clients_.erase(std::remove(mcp_clients_.begin(), mcp_clients_.end(), id), mcp_clients_.end());
    return removed;
}

std::string Toolkit::reset_equipped_tools(const json& activations)
{
    if (!activations.is_object())
        throw ValidationError("expected an object mapping group names to booleans");
    std::vector<std::string> on;
    std::vector<std::string> off;
    for (auto const& [name, value] : activations.items()) {
        if (!value.is_boolean())
            throw ValidationError(fmt::format("group '{}': expected a boolean", name));
        (value.get<bool>() ? on : off).push_back(name);
    }
    if (!on.empty())
        update_tool_groups(on, true);
    if (!off.empty())
        update_tool_groups(off, false);
    auto active = active_groups();
    auto notes = active_group_notes();
    auto msg = fmt::format("Active tool groups: {}.", fmt::join(active, ", "));
    if (!notes.empty())
        msg += "\n\n" + notes;
    return msg;
}

ToolResultStream Toolkit::call_tool_function(const ToolUseBlock& call, std::stop_token stop) const
{
    if (call.name == kResetEquippedTools) {
        try {
            auto text = const_cast<Toolkit*>(this)->reset_equipped_tools(call.input);
            return single_chunk({text_blocks(std::move(text))});
        } catch (const std::exception& e) {
            return error_stream(fmt::format("Error: {}", e.what()));
        }
    }

    std::shared_ptr<const ToolEntry> entry;
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(call.name);
        if (it == entries_.end())
            return error_stream(fmt::format("Error: tool '{}' not found", call.name));
        entry = it->second;
        auto g = std::find_if(groups_.begin(), groups_.end(),
                              [&](const ToolGroup& grp) { return grp.name == entry->group; });
        if (g == groups_.end() || !g->active)
            return error_stream(fmt::format("Error: tool '{}' belongs to group '{}', which is not active",
                                            call.name, entry->group));
    }

    json args = call.input.is_object() ? call.input : json::object();
    for (auto const& key : entry->extended_keys)
        args.erase(key);
    for (auto const& [key, value] : entry->preset_args.items())
        args[key] = value;

    auto state = std::make_shared<CallState>();
    auto const deadline = std::chrono::steady_clock::now() + entry->timeout;
    auto producer = std::make_shared<std::thread>([state, entry, args = std::move(args)] {
        ToolContext ctx(state->stop.get_token(), [state](Blocks b) {
            std::lock_guard lock(state->mutex);
            state->queue.push_back(std::move(b));
            state->cv.notify_all();
        });
        std::optional<std::string> error;
        Blocks final_blocks;
        try {
            final_blocks = entry->callable(args, ctx);
        } catch (const ToolInterrupted&) {
        } catch (const std::exception& e) {
            error = e.what();
        } catch (...) {
            error = "unknown error";
        }
        std::lock_guard lock(state->mutex);
        if (!final_blocks.empty())
            state->queue.push_back(std::move(final_blocks));
        state->error = std::move(error);
        state->marked_error = ctx.error_marked();
        state->finished = true;
        state->cv.notify_all();
    });

    struct Consumer {
        std::shared_ptr<CallState> state;
        std::shared_ptr<const ToolEntry> entry;
        ToolUseBlock call;
        std::stop_token external;
        std::chrono::steady_clock::time_point deadline;
        bool yielded = false;
        bool done = false;

        std::optional<ToolResultChunk> notice(std::string_view text)
        {
            state->stop.request_stop();
            done = true;
            return ToolResultChunk{text_blocks(std::string(text)), true, true, false};
        }

        std::optional<ToolResultChunk> operator()()
        {
            if (done)
                return std::nullopt;
            std::unique_lock lock(state->mutex);
            if (external.stop_requested())
                return notice(kInterruptedNotice);
            // One chunk of lookahead so the last content chunk can be flagged.
            bool const ready = state->cv.wait_until(lock, external, deadline, [&] {
                return state->queue.size() >= 2 || state->finished;
            });
            if (external.stop_requested())
                return notice(kInterruptedNotice);
            if (!ready)
                return notice(fmt::format("{} (limit {} ms)", kTimedOutNotice, entry->timeout.count()));
            if (!state->queue.empty()) {
                ToolResultChunk chunk;
                chunk.blocks = std::move(state->queue.front());
                state->queue.pop_front();
                chunk.is_last = state->finished && state->queue.empty() && !state->error;
                if (chunk.is_last) {
                    chunk.is_error = state->marked_error;
                    done = true;
                }
                lock.unlock();
                if (entry->postprocess)
                    chunk.blocks = entry->postprocess(call, std::move(chunk.blocks));
                yielded = true;
                return chunk;
            }
            done = true;
            if (state->error)
                return ToolResultChunk{
                    text_blocks(fmt::format("Error: tool '{}' failed: {}", call.name, *state->error)),
                    true, false, true};
            if (!yielded)
                return ToolResultChunk{{}, true, false, state->marked_error};
            return std::nullopt;
        }
    };

    auto consumer = std::make_shared<Consumer>(Consumer{state, entry, call, stop, deadline});
    return ToolResultStream(
        [consumer] { return (*consumer)(); },
        [state, producer] {
            state->stop.request_stop();
            {
                std::unique_lock lock(state->mutex);
                // Give a cooperative body a moment to wind down; a body that ignores the stop
                // request is left to finish on its own.
                state->cv.wait_for(lock, std::chrono::seconds{2}, [&] { return state->finished; });
                if (!state->finished) {
                    spdlog::warn("tool body ignored stop request; detaching its thread");
                    producer->detach();
                    return;
                }
            }
            producer->join();
        });
}

std::vector<ToolResultChunk> collect_chunks(ToolResultStream& stream)
{
    std::vector<ToolResultChunk> out;
    while (auto c = stream.next())
        out.push_back(std::move(*c));
    return out;
}

Blocks chunks_to_blocks(const std::vector<ToolResultChunk>& chunks)
{
    Blocks out;
    for (auto const& c : chunks)
        out.insert(out.end(), c.blocks.begin(), c.blocks.end());
    return out;
}

} // namespace agentloom
