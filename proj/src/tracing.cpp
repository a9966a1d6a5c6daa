// SPDX-License-Identifier: Apache-2.0
#include "agentloom/tracing.hpp"

#include "agentloom/errors.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace agentloom {

std::string_view to_string(SpanKind kind)
{
    switch (kind) {
    case SpanKind::llm: return "llm";
    case SpanKind::tool: return "tool";
    case SpanKind::agent: return "agent";
    case SpanKind::other: return "other";
    }
    return "other";
}

std::string_view to_string(SpanStatus status)
{
    return status == SpanStatus::ok ? "ok" : "error";
}

json span_to_json(const Span& span)
{
    json j{{"trace_id", span.trace_id},
           {"span_id", span.span_id},
           {"parent_span_id", span.parent_span_id ? json(*span.parent_span_id) : json(nullptr)},
           {"name", span.name},
           {"kind", to_string(span.kind)},
           {"start", format_rfc3339(span.start)},
           {"end", format_rfc3339(span.end)},
           {"attributes", span.attributes},
           {"status", to_string(span.status)}};
    return j;
}

Span span_from_json(const json& j)
{
    if (!j.is_object())
        throw ParseError("", "span must be an object");
    Span s;
    try {
        s.trace_id = j.at("trace_id").get<std::string>();
        s.span_id = j.at("span_id").get<std::string>();
        if (auto it = j.find("parent_span_id"); it != j.end() && !it->is_null())
            s.parent_span_id = it->get<std::string>();
        s.name = j.at("name").get<std::string>();
        auto const kind = j.at("kind").get<std::string>();
        if (kind == "llm")
            s.kind = SpanKind::llm;
        else if (kind == "tool")
            s.kind = SpanKind::tool;
        else if (kind == "agent")
            s.kind = SpanKind::agent;
        else if (kind == "other")
            s.kind = SpanKind::other;
        else
            throw ParseError("kind", fmt::format("unknown span kind '{}'", kind));
        s.start = parse_rfc3339(j.at("start").get<std::string>());
        s.end = parse_rfc3339(j.at("end").get<std::string>());
        s.attributes = j.value("attributes", json::object());
        auto const status = j.value("status", "ok");
        if (status != "ok" && status != "error")
            throw ParseError("status", fmt::format("unknown span status '{}'", status));
        s.status = status == "ok" ? SpanStatus::ok : SpanStatus::error;
    } catch (const json::exception& e) {
        throw ParseError("", fmt::format("malformed span: {}", e.what()));
    } catch (const ValidationError& e) {
        throw ParseError("", e.what());
    }
    if (s.span_id.empty() || s.trace_id.empty())
        throw ParseError("span_id", "span and trace ids must be non-empty");
    if (s.end < s.start)
        throw ParseError("end", "span ends before it starts");
    if (s.parent_span_id && *s.parent_span_id == s.span_id)
        throw ParseError("parent_span_id", "span cannot be its own parent");
    return s;
}

void InMemorySpanSink::emit(const Span& span)
{
    std::lock_guard lock(mutex_);
    spans_.push_back(span);
}

std::vector<Span> InMemorySpanSink::spans() const
{
    std::lock_guard lock(mutex_);
    return spans_;
}

std::size_t InMemorySpanSink::size() const
{
    std::lock_guard lock(mutex_);
    return spans_.size();
}

void InMemorySpanSink::clear()
{
    std::lock_guard lock(mutex_);
    spans_.clear();
}

namespace {

std::mutex g_sink_mutex;
std::shared_ptr<SpanSink> g_sink;
std::atomic<std::size_t> g_emission_failures{0};

thread_local std::optional<TraceContext> t_context;
thread_local json t_extra_attributes = json::object();

void emit_safely(const std::shared_ptr<SpanSink>& sink, const Span& span)
{
    if (!sink)
        return;
    try {
        sink->emit(span);
    } catch (const std::exception& e) {
        ++g_emission_failures;
        spdlog::debug("span emission failed: {}", e.what());
    } catch (...) {
        ++g_emission_failures;
    }
}

} // namespace

void set_span_sink(std::shared_ptr<SpanSink> sink)
{
    std::lock_guard lock(g_sink_mutex);
    g_sink = std::move(sink);
}

std::shared_ptr<SpanSink> span_sink()
{
    std::lock_guard lock(g_sink_mutex);
    return g_sink;
}

std::size_t span_emission_failures()
{
    return g_emission_failures.load();
}

std::optional<TraceContext> current_trace_context()
{
    return t_context;
}

ScopedTraceContext::ScopedTraceContext(std::optional<TraceContext> ctx)
    : previous_(std::exchange(t_context, std::move(ctx)))
{
}

ScopedTraceContext::~ScopedTraceContext()
{
    t_context = std::move(previous_);
}

ScopedSpanAttributes::ScopedSpanAttributes(json attributes) : previous_(t_extra_attributes)
{
    for (auto const& [k, v] : attributes.items())
        t_extra_attributes[k] = v;
}

ScopedSpanAttributes::~ScopedSpanAttributes()
{
    t_extra_attributes = std::move(previous_);
}

SpanScope::SpanScope(std::string name, SpanKind kind, std::shared_ptr<SpanSink> sink,
                     bool make_current)
    : sink_(std::move(sink))
{
    span_.name = std::move(name);
    span_.kind = kind;
    span_.span_id = random_hex_id().substr(0, 16);
    if (t_context) {
        span_.trace_id = t_context->trace_id;
        span_.parent_span_id = t_context->span_id;
    } else {
        span_.trace_id = random_hex_id();
    }
    span_.attributes = t_extra_attributes;
    span_.start = Clock::now();
    if (make_current)
        context_.emplace(TraceContext{span_.trace_id, span_.span_id});
}

SpanScope::~SpanScope()
{
    finish();
}

void SpanScope::set_attribute(const std::string& key, json value)
{
    span_.attributes[key] = std::move(value);
}

void SpanScope::set_error(const std::string& message)
{
    span_.status = SpanStatus::error;
    span_.attributes["error"] = message;
}

void SpanScope::finish()
{
    if (finished_)
        return;
    finished_ = true;
    span_.end = Clock::now();
    context_.reset();
    emit_safely(sink_ ? sink_ : span_sink(), span_);
}

TracedBackend::TracedBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<SpanSink> sink)
    : inner_(std::move(inner)), sink_(std::move(sink))
{
    if (!inner_)
        throw ValidationError("traced backend needs an inner backend");
}

namespace {

void describe_request(SpanScope& scope, const std::string& model, const FormattedPrompt& prompt,
                      const GenerateOptions& opts)
{
    json tools = json::array();
    for (auto const& t : opts.tools)
        tools.push_back(t.name);
    scope.set_attribute("model", model);
    scope.set_attribute("messages", prompt.messages.size());
    scope.set_attribute("tools", std::move(tools));
    scope.set_attribute("stream", opts.stream);
    static constexpr std::string_view modes[] = {"auto", "none", "required", "specific"};
    scope.set_attribute("tool_choice", modes[static_cast<int>(opts.tool_choice.mode)]);
}

void describe_response(SpanScope& scope, const ChatResponse& r)
{
    scope.set_attribute("response_id", r.id);
    if (r.usage) {
        scope.set_attribute("input_tokens", r.usage->input_tokens);
        scope.set_attribute("output_tokens", r.usage->output_tokens);
    }
}

} // namespace

ChatResponse TracedBackend::generate(const FormattedPrompt& prompt, const GenerateOptions& opts)
{
    SpanScope scope("chat " + inner_->model_name(), SpanKind::llm, sink_);
    describe_request(scope, inner_->model_name(), prompt, opts);
    try {
        auto r = inner_->generate(prompt, opts);
        describe_response(scope, r);
        return r;
    } catch (const std::exception& e) {
        scope.set_error(e.what());
        throw;
    }
}

ChatStream TracedBackend::generate_stream(const FormattedPrompt& prompt, const GenerateOptions& opts)
{
    auto scope = std::make_shared<SpanScope>("chat " + inner_->model_name(), SpanKind::llm, sink_,
                                             false);
    describe_request(*scope, inner_->model_name(), prompt, opts);
    auto inner = std::make_shared<ChatStream>();
    try {
        *inner = inner_->generate_stream(prompt, opts);
    } catch (const std::exception& e) {
        scope->set_error(e.what());
        throw;
    }
    auto last = std::make_shared<std::optional<ChatResponse>>();
    return ChatStream(
        [inner, scope, last]() -> std::optional<ChatResponse> {
            try {
                auto r = inner->next();
                if (r)
                    *last = *r;
                return r;
            } catch (const std::exception& e) {
                scope->set_error(e.what());
                throw;
            }
        },
        [inner, scope, last] {
            if (inner->cancelled() || !inner->done())
                scope->set_attribute("cancelled", true);
            inner->cancel();
            if (*last)
                describe_response(*scope, **last);
            scope->finish();
        });
}

std::shared_ptr<ChatBackend> trace_llm(std::shared_ptr<ChatBackend> backend,
                                       std::shared_ptr<SpanSink> sink)
{
    return std::make_shared<TracedBackend>(std::move(backend), std::move(sink));
}

} // namespace agentloom
