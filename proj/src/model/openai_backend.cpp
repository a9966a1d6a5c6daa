// SPDX-License-Identifier: Apache-2.0
#include "agentloom/openai_backend.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/util.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include <condition_variable>
#include <deque>
#include <regex>
#include <thread>

namespace agentloom {

namespace {

std::pair<std::string, std::string> split_base_url(const std::string& base_url)
{
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base_url, m, re))
        throw ValidationError(fmt::format("malformed base_url '{}'", base_url));
    std::string prefix = m[2].matched ? m[2].str() : "";
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return {m[1].str(), prefix};
}

json parse_arguments(const std::string& raw)
{
    if (raw.empty())
        return json::object();
    try {
        auto j = json::parse(raw);
        if (j.is_object())
            return j;
    } catch (const json::parse_error&) {
    }
    return json{{"raw", raw}};
}

[[noreturn]] void throw_for_status(int status, const std::string& body)
{
    std::string message = body;
    try {
        auto j = json::parse(body);
        if (j.contains("error")) {
            auto const& e = j.at("error");
            message = e.is_object() ? e.value("message", e.dump()) : e.dump();
        }
    } catch (const json::parse_error&) {
    }
    if (status == 429 || status >= 500)
        throw TransportError(fmt::format("HTTP {}: {}", status, message));
    throw ProviderError(status, message);
}

std::optional<ChatUsage> parse_usage(const json& j)
{
    auto it = j.find("usage");
    if (it == j.end() || !it->is_object())
        return std::nullopt;
    ChatUsage u;
    u.input_tokens = it->value("prompt_tokens", std::int64_t{0});
    u.output_tokens = it->value("completion_tokens", std::int64_t{0});
    return u;
}

std::unique_ptr<httplib::Client> make_client(const std::string& origin, std::chrono::seconds timeout)
{
    auto cli = std::make_unique<httplib::Client>(origin);
    cli->set_connection_timeout(std::chrono::seconds{10});
    cli->set_read_timeout(timeout);
    cli->set_write_timeout(timeout);
    return cli;
}

} // namespace

ChatResponse parse_chat_completion(const json& body)
{
    try {
        auto const& message = body.at("choices").at(0).at("message");
        Blocks content;
        if (auto it = message.find("reasoning_content"); it != message.end() && it->is_string() &&
                                                          !it->get<std::string>().empty())
            content.push_back(ThinkingBlock{it->get<std::string>()});
        if (auto it = message.find("content"); it != message.end() && it->is_string() &&
                                                !it->get<std::string>().empty())
            content.push_back(TextBlock{it->get<std::string>()});
        if (auto it = message.find("tool_calls"); it != message.end() && it->is_array()) {
            for (auto const& call : *it) {
                auto const& fn = call.at("function");
                content.push_back(ToolUseBlock{call.value("id", random_hex_id()),
                                               fn.at("name").get<std::string>(),
                                               parse_arguments(fn.value("arguments", ""))});
            }
        }
        ChatResponse r;
        r.id = body.value("id", random_hex_id());
        r.created_at = body.contains("created")
                           ? format_rfc3339(TimePoint{std::chrono::seconds{
                                 body.at("created").get<std::int64_t>()}})
                           : now_rfc3339();
        r.content = std::move(content);
        r.usage = parse_usage(body);
        return r;
    } catch (const json::exception& e) {
        throw TransportError(fmt::format("malformed chat completion: {}", e.what()));
    }
}

void ChatCompletionAccumulator::apply(const json& chunk)
{
    if (id_.empty())
        id_ = chunk.value("id", "");
    if (created_at_.empty() && chunk.contains("created"))
        created_at_ = format_rfc3339(
            TimePoint{std::chrono::seconds{chunk.at("created").get<std::int64_t>()}});
    if (auto u = parse_usage(chunk))
        usage_ = u;
    auto choices = chunk.find("choices");
    if (choices == chunk.end() || !choices->is_array() || choices->empty())
        return;
    auto const& delta = (*choices)[0].value("delta", json::object());
    if (auto it = delta.find("reasoning_content"); it != delta.end() && it->is_string())
        thinking_ += it->get<std::string>();
    if (auto it = delta.find("content"); it != delta.end() && it->is_string())
        text_ += it->get<std::string>();
    if (auto it = delta.find("tool_calls"); it != delta.end() && it->is_array()) {
        for (auto const& tc : *it) {
            auto const index = tc.value("index", static_cast<std::size_t>(tool_calls_.size()));
            if (tool_calls_.size() <= index)
                tool_calls_.resize(index + 1);
            auto& pending = tool_calls_[index];
            if (tc.contains("id") && tc.at("id").is_string())
                pending.id = tc.at("id").get<std::string>();
            if (auto fn = tc.find("function"); fn != tc.end()) {
                if (fn->contains("name") && fn->at("name").is_string())
                    pending.name += fn->at("name").get<std::string>();
                if (fn->contains("arguments") && fn->at("arguments").is_string())
                    pending.arguments += fn->at("arguments").get<std::string>();
            }
        }
    }
}

ChatResponse ChatCompletionAccumulator::snapshot(bool final) const
{
    ChatResponse r;
    r.id = id_.empty() ? "stream" : id_;
    r.created_at = created_at_.empty() ? now_rfc3339() : created_at_;
    if (!thinking_.empty())
        r.content.push_back(ThinkingBlock{thinking_});
    if (!text_.empty())
        r.content.push_back(TextBlock{text_});
    if (final)
        for (auto const& tc : tool_calls_)
            r.content.push_back(ToolUseBlock{tc.id.empty() ? random_hex_id() : tc.id, tc.name,
                                             parse_arguments(tc.arguments)});
    r.usage = usage_;
    return r;
}

OpenAICompatibleBackend::OpenAICompatibleBackend(std::string base_url, std::string api_key,
                                                 std::string model_name, Capabilities caps)
    : api_key_(std::move(api_key)), model_name_(std::move(model_name)), caps_(caps)
{
    std::tie(origin_, path_prefix_) = split_base_url(base_url);
}

json OpenAICompatibleBackend::request_body(const FormattedPrompt& prompt,
                                           const GenerateOptions& opts) const
{
    json body{{"model", model_name_}, {"messages", prompt.messages}, {"stream", opts.stream}};
    if (!opts.tools.empty()) {
        json tools = json::array();
        for (auto const& t : opts.tools)
            tools.push_back(t.to_json());
        body["tools"] = std::move(tools);
        switch (opts.tool_choice.mode) {
        case ToolChoice::Mode::auto_: body["tool_choice"] = "auto"; break;
        case ToolChoice::Mode::none: body["tool_choice"] = "none"; break;
        case ToolChoice::Mode::required: body["tool_choice"] = "required"; break;
        case ToolChoice::Mode::specific:
            body["tool_choice"] = {{"type", "function"},
                                   {"function", {{"name", opts.tool_choice.name}}}};
            break;
        }
    }
    if (opts.stream)
        body["stream_options"] = {{"include_usage", true}};
    if (opts.reasoning) {
        if (auto const* effort = std::get_if<ReasoningEffort>(&*opts.reasoning)) {
            static constexpr std::string_view names[] = {"low", "medium", "high"};
            body["reasoning_effort"] = names[static_cast<int>(*effort)];
        } else {
            body["thinking_budget"] = std::get<ReasoningTokenBudget>(*opts.reasoning).tokens;
        }
    }
    for (auto const& [k, v] : opts.extra.items())
        body[k] = v;
    return body;
}

ChatResponse OpenAICompatibleBackend::generate(const FormattedPrompt& prompt,
                                               const GenerateOptions& opts)
{
    auto non_stream = opts;
    non_stream.stream = false;
    auto cli = make_client(origin_, timeout_);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto res = cli->Post(path_prefix_ + "/chat/completions", headers,
                         request_body(prompt, non_stream).dump(), "application/json");
    if (!res)
        throw TransportError(fmt::format("HTTP request failed: {}", httplib::to_string(res.error())));
    if (res->status < 200 || res->status >= 300)
        throw_for_status(res->status, res->body);
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw TransportError(fmt::format("malformed response body: {}", e.what()));
    }
    return parse_chat_completion(body);
}

ChatStream OpenAICompatibleBackend::generate_stream(const FormattedPrompt& prompt,
                                                    const GenerateOptions& opts)
{
    struct State {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<ChatResponse> frames;
        std::exception_ptr error;
        bool finished = false;
        bool cancelled = false;
        std::thread worker;

        ~State()
        {
            if (worker.joinable())
                worker.join();
        }
    };
    auto state = std::make_shared<State>();

    auto streaming = opts;
    streaming.stream = true;
    auto body = request_body(prompt, streaming).dump();
    auto path = path_prefix_ + "/chat/completions";

    // The request runs on a worker that pushes cumulative frames; `next()` pops them.
    state->worker = std::thread([state, origin = origin_, key = api_key_, timeout = timeout_,
                                 body = std::move(body), path = std::move(path)] {
        auto cli = make_client(origin, timeout);
        ChatCompletionAccumulator acc;
        std::string buffer;
        std::string error_body;
        int status = 0;
        bool done = false;
        auto push = [&](ChatResponse r) {
            std::lock_guard lock(state->mutex);
            state->frames.push_back(std::move(r));
            state->cv.notify_all();
        };

        httplib::Request req;
        req.method = "POST";
        req.path = path;
        req.headers = {{"Authorization", "Bearer " + key}, {"Accept", "text/event-stream"}};
        req.body = body;
        req.set_header("Content-Type", "application/json");
        req.response_handler = [&](const httplib::Response& r) {
            status = r.status;
            return true;
        };
        req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
            {
                std::lock_guard lock(state->mutex);
                if (state->cancelled)
                    return false;
            }
            if (status < 200 || status >= 300) {
                error_body.append(data, len);
                return true;
            }
            buffer.append(data, len);
            std::size_t pos;
            while ((pos = buffer.find('\n')) != std::string::npos) {
                auto line = buffer.substr(0, pos);
                buffer.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                if (line.rfind("data:", 0) != 0)
                    continue;
                auto payload = line.substr(5);
                if (!payload.empty() && payload.front() == ' ')
                    payload.erase(0, 1);
                if (payload == "[DONE]") {
                    done = true;
                    continue;
                }
                try {
                    acc.apply(json::parse(payload));
                } catch (const json::parse_error& e) {
                    throw TransportError(fmt::format("SSE parse error: {}", e.what()));
                }
                push(acc.snapshot(false));
            }
            return true;
        };

        std::exception_ptr error;
        try {
            httplib::Response res;
            httplib::Error err = httplib::Error::Success;
            bool const ok = cli->send(req, res, err);
            bool cancelled;
            {
                std::lock_guard lock(state->mutex);
                cancelled = state->cancelled;
            }
            if (!cancelled) {
                if (!ok && status == 0)
                    throw TransportError(
                        fmt::format("HTTP request failed: {}", httplib::to_string(err)));
                if (status < 200 || status >= 300)
                    throw_for_status(status, error_body);
                if (!done)
                    throw TransportError("stream ended without [DONE]");
                push(acc.snapshot(true));
            }
        } catch (...) {
            error = std::current_exception();
        }
        std::lock_guard lock(state->mutex);
        state->error = error;
        state->finished = true;
        state->cv.notify_all();
    });

    return ChatStream(
        [state]() -> std::optional<ChatResponse> {
            std::unique_lock lock(state->mutex);
            state->cv.wait(lock, [&] { return !state->frames.empty() || state->finished; });
            if (!state->frames.empty()) {
                auto r = std::move(state->frames.front());
                state->frames.pop_front();
                return r;
            }
            if (state->error)
                std::rethrow_exception(state->error);
            return std::nullopt;
        },
        [state] {
            std::lock_guard lock(state->mutex);
            state->cancelled = true;
        });
}

std::shared_ptr<ChatBackend> openai_compatible_backend(std::string base_url, std::string api_key,
                                                       std::string model_name)
{
    return std::make_shared<OpenAICompatibleBackend>(std::move(base_url), std::move(api_key),
                                                     std::move(model_name));
}

} // namespace agentloom
