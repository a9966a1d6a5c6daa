// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"
#include "agentloom/stream.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace agentloom {

struct ChatUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    double time_seconds = 0.0;

    bool operator==(const ChatUsage&) const = default;
};

void to_json(json& j, const ChatUsage& u);
void from_json(const json& j, ChatUsage& u);

/// Unified model output. Content is restricted to Text, Thinking and ToolUse blocks.
struct ChatResponse {
    std::string id;
    std::string created_at;
    Blocks content;
    std::optional<ChatUsage> usage;

    std::string text() const { return text_of(content); }
    std::vector<ToolUseBlock> tool_uses() const;

    /// Throws ValidationError if a block is not generation-side or the id is empty.
    void validate() const;

    static ChatResponse make(Blocks content, std::optional<ChatUsage> usage = std::nullopt);
};

void to_json(json& j, const ChatResponse& r);

/// A function schema as published to the model.
struct ToolSchema {
    std::string name;
    std::string description;
    json parameters = {{"type", "object"}, {"properties", json::object()}};

    bool operator==(const ToolSchema&) const = default;

    /// `{"type":"function","function":{"name":…,"description":…,"parameters":{…}}}`
    json to_json() const;
    static ToolSchema from_json(const json& j);
};

struct ToolChoice {
    enum class Mode { auto_, none, required, specific };
    Mode mode = Mode::auto_;
    std::string name; // only for Mode::specific

    static ToolChoice automatic() { return {}; }
    static ToolChoice none() { return {Mode::none, {}}; }
    static ToolChoice required() { return {Mode::required, {}}; }
    static ToolChoice specific(std::string tool) { return {Mode::specific, std::move(tool)}; }
};

enum class ReasoningEffort { low, medium, high };

struct ReasoningTokenBudget {
    std::int64_t tokens = 0;
};

using ReasoningSetting = std::variant<ReasoningEffort, ReasoningTokenBudget>;

struct GenerateOptions {
    std::vector<ToolSchema> tools;
    ToolChoice tool_choice;
    bool stream = false;
    std::optional<ReasoningSetting> reasoning;
    json extra = json::object();

    /// `specific(name)` must name a tool present in `tools`.
    void validate() const;
};

struct Capabilities {
    bool streaming = true;
    bool tools = true;
    bool vision = true;
    bool reasoning = true;
};

/// Provider-shaped prompt: chat-completions style message objects, each with a "role".
struct FormattedPrompt {
    std::vector<json> messages;

    bool operator==(const FormattedPrompt&) const = default;
};

using ChatStream = Stream<ChatResponse>;

/// A chat model provider. Implementations must be callable from several threads at once;
/// each call is independent. Streams yield cumulative responses: every chunk holds all
/// content generated so far.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    virtual Capabilities capabilities() const = 0;
    virtual std::string model_name() const = 0;

    virtual ChatResponse generate(const FormattedPrompt& prompt, const GenerateOptions& opts) = 0;
    virtual ChatStream generate_stream(const FormattedPrompt& prompt,
                                       const GenerateOptions& opts) = 0;
};

struct RetryPolicy {
    std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds{500},
                                                   std::chrono::milliseconds{2000}};

    static RetryPolicy none() { return RetryPolicy{{}}; }
};

/// Throws CapabilityError naming the first feature `opts` or `prompt` needs that `caps` lacks.
void check_capabilities(const Capabilities& caps, const FormattedPrompt& prompt,
                        const GenerateOptions& opts);

/// Complete, non-streamed generation with capability checks, retries on TransportError and
/// wall-clock usage accounting.
ChatResponse generate(ChatBackend& backend, const FormattedPrompt& prompt,
                      GenerateOptions opts = {}, const RetryPolicy& retry = {});

/// Cumulative streamed generation. Retries apply only to failures before the first chunk.
ChatStream generate_stream(ChatBackend& backend, const FormattedPrompt& prompt,
                           GenerateOptions opts = {}, const RetryPolicy& retry = {});

/// Word count used by backends that do not report usage.
std::int64_t approximate_tokens(std::string_view text);

} // namespace agentloom
