// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/model.hpp"

#include <chrono>
#include <filesystem>
#include <mutex>

namespace agentloom {

/// One scripted model reply.
struct ScriptEntry {
    Blocks blocks;
    /// Text split for streaming; must concatenate to the reply's text. Empty: one chunk.
    std::vector<std::string> chunks;
    std::chrono::milliseconds latency{0};
    std::chrono::milliseconds chunk_delay{0};
    std::optional<std::string> error;
    /// Raise `error` as a retryable TransportError instead of a ProviderError.
    bool transport_error = false;
    /// Drop the stream with a TransportError after this many chunks.
    std::optional<std::size_t> fail_after_chunks;
    std::optional<ChatUsage> usage;

    static ScriptEntry text(std::string reply, std::vector<std::string> chunks = {});
    static ScriptEntry tool_call(std::string name, json input, std::string id = {});
};

/// `[{blocks:[Block], chunks?:[str], latency_ms?:int, error?:str, ...}]`
std::vector<ScriptEntry> parse_mock_script(const json& j);
std::vector<ScriptEntry> load_mock_script(const std::filesystem::path& path);

/// Deterministic backend that replays a script, one entry per call, and records requests.
class MockBackend : public ChatBackend {
public:
    struct Request {
        FormattedPrompt prompt;
        GenerateOptions options;
    };

    explicit MockBackend(std::vector<ScriptEntry> script, Capabilities caps = {},
                         std::string name = "mock");

    Capabilities capabilities() const override { return caps_; }
    std::string model_name() const override { return name_; }

    ChatResponse generate(const FormattedPrompt& prompt, const GenerateOptions& opts) override;
    ChatStream generate_stream(const FormattedPrompt& prompt, const GenerateOptions& opts) override;

    std::size_t calls() const;
    std::size_t remaining() const;
    std::vector<Request> requests() const;

    /// The cumulative yields an entry produces when streamed (test oracle helper).
    static std::vector<ChatResponse> stream_frames(const ScriptEntry& entry, const ChatResponse& full);

private:
    ScriptEntry take(const FormattedPrompt& prompt, const GenerateOptions& opts);
    ChatResponse full_response(const ScriptEntry& entry, const FormattedPrompt& prompt) const;

    mutable std::mutex mutex_;
    std::vector<ScriptEntry> script_;
    std::size_t next_ = 0;
    std::vector<Request> requests_;
    Capabilities caps_;
    std::string name_;
};

std::shared_ptr<MockBackend> mock_backend(std::vector<ScriptEntry> script, Capabilities caps = {});

} // namespace agentloom
