// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/model.hpp"

#include <chrono>
#include <memory>

namespace agentloom {

/// Speaks the chat-completions HTTP JSON interface (`POST {base_url}/chat/completions`),
/// including tools and server-sent-event streaming. Delta chunks are accumulated into the
/// cumulative scheme; `reasoning_content` becomes Thinking blocks.
class OpenAICompatibleBackend : public ChatBackend {
public:
    OpenAICompatibleBackend(std::string base_url, std::string api_key, std::string model_name,
                            Capabilities caps = {});

    Capabilities capabilities() const override { return caps_; }
    std::string model_name() const override { return model_name_; }

    ChatResponse generate(const FormattedPrompt& prompt, const GenerateOptions& opts) override;
    ChatStream generate_stream(const FormattedPrompt& prompt, const GenerateOptions& opts) override;

    /// The JSON request body sent for a call.
    json request_body(const FormattedPrompt& prompt, const GenerateOptions& opts) const;

    void set_timeout(std::chrono::seconds timeout) { timeout_ = timeout; }

private:
    std::string origin_;
    std::string path_prefix_;
    std::string api_key_;
    std::string model_name_;
    Capabilities caps_;
    std::chrono::seconds timeout_{120};
};

std::shared_ptr<ChatBackend> openai_compatible_backend(std::string base_url, std::string api_key,
                                                       std::string model_name);

/// Parses a non-streamed chat-completions response body.
ChatResponse parse_chat_completion(const json& body);

/// Folds chat-completions stream deltas into a cumulative response.
class ChatCompletionAccumulator {
public:
    /// Applies one `data:` payload.
    void apply(const json& chunk);
    /// Current cumulative response; tool calls only when `final` (arguments are complete).
    ChatResponse snapshot(bool final) const;

private:
    struct PendingToolCall {
        std::string id;
        std::string name;
        std::string arguments;
    };

    std::string id_;
    std::string created_at_;
    std::string thinking_;
    std::string text_;
    std::vector<PendingToolCall> tool_calls_;
    std::optional<ChatUsage> usage_;
};

} // namespace agentloom
