// SPDX-License-Identifier: Apache-2.0
#include "agentloom/mock_backend.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>

#include <condition_variable>
#include <fstream>
#include <thread>

namespace agentloom {

ScriptEntry ScriptEntry::text(std::string reply, std::vector<std::string> chunks)
{
    ScriptEntry e;
    e.blocks = {TextBlock{std::move(reply)}};
    e.chunks = std::move(chunks);
    return e;
}

ScriptEntry ScriptEntry::tool_call(std::string name, json input, std::string id)
{
    ScriptEntry e;
    if (id.empty())
        id = "call_" + random_hex_id().substr(0, 12);
    e.blocks = {ToolUseBlock{std::move(id), std::move(name), std::move(input)}};
    return e;
}

namespace {

void check_entry(const ScriptEntry& e, std::size_t index)
{
    if (e.chunks.empty())
        return;
    std::string joined;
    for (auto const& c : e.chunks)
        joined += c;
    if (joined != text_of(e.blocks))
        throw ValidationError(
            fmt::format("script entry {}: chunks do not concatenate to the reply text", index));
}

} // namespace

std::vector<ScriptEntry> parse_mock_script(const json& j)
{
    if (!j.is_array())
        throw ParseError("", "mock script must be a JSON list");
    std::vector<ScriptEntry> script;
    for (std::size_t i = 0; i < j.size(); ++i) {
        auto const& item = j[i];
        auto const path = fmt::format("[{}]", i);
        if (!item.is_object())
            throw ParseError(path, "expected an object");
        ScriptEntry e;
        if (auto it = item.find("blocks"); it != item.end()) {
            if (!it->is_array())
                throw ParseError(path + ".blocks", "expected an array");
            for (std::size_t b = 0; b < it->size(); ++b)
                e.blocks.push_back(block_from_json((*it)[b], fmt::format("{}.blocks[{}]", path, b)));
        }
        if (item.contains("chunks"))
            e.chunks = item.at("chunks").get<std::vector<std::string>>();
        e.latency = std::chrono::milliseconds{item.value("latency_ms", 0)};
        e.chunk_delay = std::chrono::milliseconds{item.value("chunk_delay_ms", 0)};
        if (item.contains("error"))
            e.error = item.at("error").get<std::string>();
        e.transport_error = item.value("error_kind", "provider") == "transport";
        if (item.contains("fail_after_chunks"))
            e.fail_after_chunks = item.at("fail_after_chunks").get<std::size_t>();
        if (item.contains("usage"))
            e.usage = item.at("usage").get<ChatUsage>();
        check_entry(e, i);
        script.push_back(std::move(e));
    }
    return script;
}

std::vector<ScriptEntry> load_mock_script(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw StorageError(fmt::format("cannot open mock script '{}'", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), e.what());
    }
    return parse_mock_script(j);
}

MockBackend::MockBackend(std::vector<ScriptEntry> script, Capabilities caps, std::string name)
    : script_(std::move(script)), caps_(caps), name_(std::move(name))
{
    if (script_.empty())
        throw ValidationError("mock script must not be empty");
    for (std::size_t i = 0; i < script_.size(); ++i)
        check_entry(script_[i], i);
}

ScriptEntry MockBackend::take(const FormattedPrompt& prompt, const GenerateOptions& opts)
{
    std::lock_guard lock(mutex_);
    requests_.push_back({prompt, opts});
    if (next_ >= script_.size())
        throw ScriptExhaustedError();
    return script_[next_++];
}

ChatResponse MockBackend::full_response(const ScriptEntry& entry, const FormattedPrompt& prompt) const
{
    ChatUsage usage;
    if (entry.usage) {
        usage = *entry.usage;
    } else {
        for (auto const& m : prompt.messages) {
            auto it = m.find("content");
            if (it != m.end() && it->is_string())
                usage.input_tokens += approximate_tokens(it->get<std::string>());
        }
        usage.output_tokens = approximate_tokens(text_of(entry.blocks));
    }
    return ChatResponse::make(entry.blocks, usage);
}

std::vector<ChatResponse> MockBackend::stream_frames(const ScriptEntry& entry,
                                                     const ChatResponse& full)
{
    std::vector<std::string> chunks = entry.chunks;
    if (chunks.empty())
        chunks.push_back(text_of(entry.blocks));

    auto frame_at = [&](std::size_t length, bool final) {
        ChatResponse r = full;
        r.content.clear();
        std::size_t budget = length;
        for (auto const& b : entry.blocks) {
            if (auto const* t = b.get_if<TextBlock>()) {
                if (t->text.size() <= budget) {
                    r.content.push_back(b);
                    budget -= t->text.size();
                    continue;
                }
                if (budget > 0)
                    r.content.push_back(TextBlock{t->text.substr(0, budget)});
                break;
            }
            if (b.is<ToolUseBlock>() && !final)
                continue;
            r.content.push_back(b);
        }
        return r;
    };

    std::vector<ChatResponse> frames;
    std::size_t length = 0;
    for (auto const& c : chunks) {
        length += c.size();
        frames.push_back(frame_at(length, false));
    }
    auto last = frame_at(length, true);
    if (frames.empty() || !(frames.back().content == last.content))
        frames.push_back(std::move(last));
    return frames;
}

ChatResponse MockBackend::generate(const FormattedPrompt& prompt, const GenerateOptions& opts)
{
    auto const entry = take(prompt, opts);
    if (entry.latency.count() > 0)
        std::this_thread::sleep_for(entry.latency);
    if (entry.error) {
        if (entry.transport_error)
            throw TransportError(*entry.error);
        throw ProviderError(400, *entry.error);
    }
    return full_response(entry, prompt);
}

ChatStream MockBackend::generate_stream(const FormattedPrompt& prompt, const GenerateOptions& opts)
{
    auto const entry = take(prompt, opts);
    if (entry.error && !entry.fail_after_chunks) {
        if (entry.transport_error)
            throw TransportError(*entry.error);
        throw ProviderError(400, *entry.error);
    }

    struct State {
        std::mutex mutex;
        std::condition_variable cv;
        bool closed = false;
        std::vector<ChatResponse> frames;
        std::size_t next = 0;
        ScriptEntry entry;

        // False when the stream was closed during the wait.
        bool wait(std::chrono::milliseconds d)
        {
            std::unique_lock lock(mutex);
            return !cv.wait_for(lock, d, [&] { return closed; });
        }
    };
    auto state = std::make_shared<State>();
    state->entry = entry;
    state->frames = stream_frames(entry, full_response(entry, prompt));

    return ChatStream(
        [state]() -> std::optional<ChatResponse> {
            auto const& e = state->entry;
            auto const delay = state->next == 0 ? e.latency : e.chunk_delay;
            if (delay.count() > 0 && !state->wait(delay))
                return std::nullopt;
            if (e.fail_after_chunks && state->next >= *e.fail_after_chunks)
                throw TransportError(e.error.value_or("stream dropped"));
            if (state->next >= state->frames.size())
                return std::nullopt;
            return state->frames[state->next++];
        },
        [state] {
            std::lock_guard lock(state->mutex);
            state->closed = true;
            state->cv.notify_all();
        });
}

std::size_t MockBackend::calls() const
{
    std::lock_guard lock(mutex_);
    return requests_.size();
}

std::size_t MockBackend::remaining() const
{
    std::lock_guard lock(mutex_);
    return script_.size() - next_;
}

std::vector<MockBackend::Request> MockBackend::requests() const
{
    std::lock_guard lock(mutex_);
    return requests_;
}

std::shared_ptr<MockBackend> mock_backend(std::vector<ScriptEntry> script, Capabilities caps)
{
    return std::make_shared<MockBackend>(std::move(script), caps);
}

} // namespace agentloom
