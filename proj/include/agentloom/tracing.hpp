// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/model.hpp"
#include "agentloom/util.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace agentloom {

enum class SpanKind { llm, tool, agent, other };
enum class SpanStatus { ok, error };

std::string_view to_string(SpanKind kind);
std::string_view to_string(SpanStatus status);

/// A timed, parented record of one computational step, shaped after OpenTelemetry spans.
struct Span {
    std::string trace_id;
    std::string span_id;
    std::optional<std::string> parent_span_id;
    std::string name;
    SpanKind kind = SpanKind::other;
    TimePoint start;
    TimePoint end;
    json attributes = json::object();
    SpanStatus status = SpanStatus::ok;
};

json span_to_json(const Span& span);
/// Throws ParseError on malformed input or when end precedes start.
Span span_from_json(const json& j);

class SpanSink {
public:
    virtual ~SpanSink() = default;
    virtual void emit(const Span& span) = 0;
};

class InMemorySpanSink : public SpanSink {
public:
    void emit(const Span& span) override;
    std::vector<Span> spans() const;
    std::size_t size() const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::vector<Span> spans_;
};

/// Process-wide sink used when no explicit sink is given. Null disables emission.
void set_span_sink(std::shared_ptr<SpanSink> sink);
std::shared_ptr<SpanSink> span_sink();

/// Count of spans dropped because a sink threw.
std::size_t span_emission_failures();

struct TraceContext {
    std::string trace_id;
    std::optional<std::string> span_id;
};

/// The calling thread's active trace context, if any.
std::optional<TraceContext> current_trace_context();

/// Installs a trace context on this thread for its lifetime.
class ScopedTraceContext {
public:
    explicit ScopedTraceContext(std::optional<TraceContext> ctx);
    ~ScopedTraceContext();
    ScopedTraceContext(const ScopedTraceContext&) = delete;
    ScopedTraceContext& operator=(const ScopedTraceContext&) = delete;

private:
    std::optional<TraceContext> previous_;
};

/// Extra attributes merged into spans started on this thread while alive.
class ScopedSpanAttributes {
public:
    explicit ScopedSpanAttributes(json attributes);
    ~ScopedSpanAttributes();
    ScopedSpanAttributes(const ScopedSpanAttributes&) = delete;
    ScopedSpanAttributes& operator=(const ScopedSpanAttributes&) = delete;

private:
    json previous_;
};

/// Starts a span under the current context and makes it the current parent. The span is
/// emitted by `finish()` or the destructor, whichever comes first.
class SpanScope {
public:
    SpanScope(std::string name, SpanKind kind, std::shared_ptr<SpanSink> sink = nullptr,
              bool make_current = true);
    ~SpanScope();
    SpanScope(const SpanScope&) = delete;
    SpanScope& operator=(const SpanScope&) = delete;

    void set_attribute(const std::string& key, json value);
    void set_error(const std::string& message);
    void finish();

    const Span& span() const noexcept { return span_; }

private:
    Span span_;
    std::shared_ptr<SpanSink> sink_;
    std::optional<ScopedTraceContext> context_;
    bool finished_ = false;
};

/// Wraps a backend so that every call emits one llm span. Behaves like the inner backend.
class TracedBackend : public ChatBackend {
public:
    TracedBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<SpanSink> sink = nullptr);

    Capabilities capabilities() const override { return inner_->capabilities(); }
    std::string model_name() const override { return inner_->model_name(); }

    ChatResponse generate(const FormattedPrompt& prompt, const GenerateOptions& opts) override;
    ChatStream generate_stream(const FormattedPrompt& prompt, const GenerateOptions& opts) override;

    const std::shared_ptr<ChatBackend>& inner() const noexcept { return inner_; }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<SpanSink> sink_;
};

std::shared_ptr<ChatBackend> trace_llm(std::shared_ptr<ChatBackend> backend,
                                       std::shared_ptr<SpanSink> sink = nullptr);

} // namespace agentloom
