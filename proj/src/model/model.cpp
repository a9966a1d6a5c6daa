// SPDX-License-Identifier: Apache-2.0
#include "agentloom/model.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <sstream>
#include <thread>

namespace agentloom {

void to_json(json& j, const ChatUsage& u)
{
    j = {{"input_tokens", u.input_tokens},
         {"output_tokens", u.output_tokens},
         {"time_seconds", u.time_seconds}};
}

void from_json(const json& j, ChatUsage& u)
{
    u.input_tokens = j.value("input_tokens", std::int64_t{0});
    u.output_tokens = j.value("output_tokens", std::int64_t{0});
    u.time_seconds = j.value("time_seconds", 0.0);
}

std::vector<ToolUseBlock> ChatResponse::tool_uses() const
{
    std::vector<ToolUseBlock> out;
    for (auto const& b : content)
        if (auto const* t = b.get_if<ToolUseBlock>())
            out.push_back(*t);
    return out;
}

void ChatResponse::validate() const
{
    if (id.empty())
        throw ValidationError("chat response id must be non-empty");
    for (auto const& b : content) {
        auto const k = b.kind();
        if (k != BlockKind::text && k != BlockKind::thinking && k != BlockKind::tool_use)
            throw ValidationError(
                fmt::format("chat response may not contain a '{}' block", to_string(k)));
    }
}

ChatResponse ChatResponse::make(Blocks content, std::optional<ChatUsage> usage)
{
    return ChatResponse{random_hex_id(), now_rfc3339(), std::move(content), usage};
}

void to_json(json& j, const ChatResponse& r)
{
    json content = json::array();
    for (auto const& b : r.content)
        content.push_back(block_to_json(b));
    j = {{"id", r.id}, {"created_at", r.created_at}, {"content", std::move(content)}};
    if (r.usage)
        j["usage"] = *r.usage;
}

json ToolSchema::to_json() const
{
    return {{"type", "function"},
            {"function", {{"name", name}, {"description", description}, {"parameters", parameters}}}};
}

ToolSchema ToolSchema::from_json(const json& j)
{
    auto const& fn = j.contains("function") ? j.at("function") : j;
    ToolSchema s;
    s.name = fn.at("name").get<std::string>();
    s.description = fn.value("description", "");
    if (fn.contains("parameters"))
        s.parameters = fn.at("parameters");
    return s;
}

void GenerateOptions::validate() const
{
    if (tool_choice.mode != ToolChoice::Mode::specific)
        return;
    for (auto const& t : tools)
        if (t.name == tool_choice.name)
            return;
    throw ValidationError(
        fmt::format("tool_choice names '{}', which is not among the offered tools", tool_choice.name));
}

void check_capabilities(const Capabilities& caps, const FormattedPrompt& prompt,
                        const GenerateOptions& opts)
{
    if (opts.stream && !caps.streaming)
        throw CapabilityError("backend does not support streaming");
    if (!opts.tools.empty() && !caps.tools)
        throw CapabilityError("backend does not support tools");
    if (opts.reasoning && !caps.reasoning)
        throw CapabilityError("backend does not support reasoning");
    if (caps.vision)
        return;
    for (auto const& m : prompt.messages) {
        auto it = m.find("content");
        if (it == m.end() || !it->is_array())
            continue;
        for (auto const& part : *it) {
            auto const type = part.value("type", "");
            if (type == "image_url" || type == "input_audio" || type == "video_url")
                throw CapabilityError(
                    fmt::format("backend lacks vision support for '{}' content", type));
        }
    }
}

std::int64_t approximate_tokens(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::int64_t n = 0;
    std::string word;
    while (in >> word)
        ++n;
    return n;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <class Fn>
auto with_retry(const RetryPolicy& retry, Fn&& fn)
{
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError& e) {
            if (attempt >= retry.backoff.size())
                throw;
            spdlog::warn("transport error (attempt {}), retrying in {} ms: {}", attempt + 1,
                         retry.backoff[attempt].count(), e.what());
            std::this_thread::sleep_for(retry.backoff[attempt]);
        }
    }
}

} // namespace

ChatResponse generate(ChatBackend& backend, const FormattedPrompt& prompt, GenerateOptions opts,
                      const RetryPolicy& retry)
{
    opts.stream = false;
    opts.validate();
    check_capabilities(backend.capabilities(), prompt, opts);
    auto const start = std::chrono::steady_clock::now();
    auto response = with_retry(retry, [&] { return backend.generate(prompt, opts); });
    if (!response.usage)
        response.usage = ChatUsage{};
    response.usage->time_seconds = seconds_since(start);
    response.validate();
    return response;
}

ChatStream generate_stream(ChatBackend& backend, const FormattedPrompt& prompt,
                           GenerateOptions opts, const RetryPolicy& retry)
{
    opts.stream = true;
    opts.validate();
    check_capabilities(backend.capabilities(), prompt, opts);
    auto const start = std::chrono::steady_clock::now();

    struct State {
        ChatStream inner;
        std::optional<ChatResponse> first;
        std::chrono::steady_clock::time_point start;
    };
    auto state = std::make_shared<State>();
    state->start = start;
    with_retry(retry, [&] {
        state->inner = backend.generate_stream(prompt, opts);
        state->first = state->inner.next();
        return 0;
    });

    auto stamp = [state](ChatResponse r) {
        if (!r.usage)
            r.usage = ChatUsage{};
        r.usage->time_seconds = seconds_since(state->start);
        return r;
    };
    return ChatStream(
        [state, stamp]() -> std::optional<ChatResponse> {
            if (state->first) {
                auto r = std::move(*state->first);
                state->first.reset();
                return stamp(std::move(r));
            }
            auto r = state->inner.next();
            if (!r)
                return std::nullopt;
            return stamp(std::move(*r));
        },
        [state] { state->inner.cancel(); });
}

} // namespace agentloom
