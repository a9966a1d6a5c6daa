// SPDX-License-Identifier: Apache-2.0
#include "agentloom/studio.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>

namespace agentloom::studio {

std::string_view to_string(EventType type)
{
    switch (type) {
    case EventType::message: return "message";
    case EventType::span: return "span";
    case EventType::status: return "status";
    case EventType::interrupt: return "interrupt";
    case EventType::user_input: return "user_input";
    }
    return "status";
}

EventType parse_event_type(std::string_view name)
{
    for (auto t : {EventType::message, EventType::span, EventType::status, EventType::interrupt,
                   EventType::user_input})
        if (to_string(t) == name)
            return t;
    throw ParseError("type", fmt::format("unknown event type '{}'", name));
}

json event_to_json(const Event& e)
{
    return {{"seq", e.seq}, {"type", to_string(e.type)}, {"payload", e.payload}};
}

Event event_from_json(const json& j)
{
    if (!j.is_object())
        throw ParseError("", "event must be an object");
    if (!j.contains("type") || !j.at("type").is_string())
        throw ParseError("type", "expected a string");
    Event e;
    e.type = parse_event_type(j.at("type").get<std::string>());
    if (j.contains("seq")) {
        if (!j.at("seq").is_number_integer())
            throw ParseError("seq", "expected an integer");
        e.seq = j.at("seq").get<std::int64_t>();
    }
    e.payload = j.value("payload", json::object());
    return e;
}

json run_info_to_json(const RunInfo& r)
{
    return {{"run_id", r.run_id},
            {"name", r.name},
            {"connected", r.connected},
            {"events", r.events},
            {"created_at", r.created_at}};
}

RunInfo StudioHub::register_run(std::string name, std::optional<std::string> run_id)
{
    if (run_id && (run_id->empty() || run_id->find('/') != std::string::npos))
        throw ValidationError(fmt::format("invalid run id '{}'", *run_id));
    std::lock_guard lock(mutex_);
    if (run_id) {
        if (auto it = runs_.find(*run_id); it != runs_.end()) {
            std::lock_guard rl(it->second->mutex);
            return it->second->info;
        }
    }
    auto run = std::make_shared<Run>();
    run->info.run_id = run_id.value_or(random_hex_id().substr(0, 12));
    run->info.name = std::move(name);
    run->info.created_at = now_rfc3339();
    runs_.emplace(run->info.run_id, run);
    return run->info;
}

std::vector<RunInfo> StudioHub::runs() const
{
    std::vector<std::shared_ptr<Run>> all;
    {
        std::lock_guard lock(mutex_);
        for (auto const& [id, r] : runs_)
            all.push_back(r);
    }
    std::vector<RunInfo> out;
    for (auto const& r : all) {
        std::lock_guard rl(r->mutex);
        out.push_back(r->info);
    }
    std::sort(out.begin(), out.end(), [](auto const& a, auto const& b) { return a.created_at < b.created_at; });
    return out;
}

std::shared_ptr<StudioHub::Run> StudioHub::find(const std::string& run_id) const
{
    std::lock_guard lock(mutex_);
    auto it = runs_.find(run_id);
    if (it == runs_.end())
        throw NotFoundError(fmt::format("unknown run '{}'", run_id));
    return it->second;
}

RunInfo StudioHub::run(const std::string& run_id) const
{
    auto r = find(run_id);
    std::lock_guard rl(r->mutex);
    return r->info;
}

bool StudioHub::has_run(const std::string& run_id) const
{
    std::lock_guard lock(mutex_);
    return runs_.count(run_id) > 0;
}

void StudioHub::validate(const Run& run, EventType type, const json& payload) const
{
    if (!payload.is_object())
        throw ValidationError("payload must be an object");
    switch (type) {
    case EventType::message: {
        if (!payload.contains("msg"))
            throw ValidationError("message payload needs a msg");
        try {
            (void)msg_from_json_value(payload.at("msg"), "msg");
        } catch (const ParseError& e) {
            throw ValidationError(e.what());
        }
        if (payload.contains("last") && !payload.at("last").is_boolean())
            throw ValidationError("last: expected a boolean");
        break;
    }
    case EventType::span: {
        Span span;
        try {
            span = span_from_json(payload);
        } catch (const ParseError& e) {
            throw ValidationError(e.what());
        }
        if (run.spans.count(span.span_id))
            throw ValidationError(fmt::format("duplicate span id '{}'", span.span_id));
        if (span.parent_span_id) {
            if (auto it = run.spans.find(*span.parent_span_id); it != run.spans.end()) {
                if (it->second.trace_id != span.trace_id)
                    throw ValidationError("span and its parent belong to different traces");
                if (span.start < it->second.start)
                    throw ValidationError("span starts before its parent");
            }
            // Walk up through known ancestors looking for a cycle back to this span.
            std::set<std::string> seen{span.span_id};
            auto cur = span.parent_span_id;
            while (cur) {
                if (!seen.insert(*cur).second)
                    throw ValidationError("span parent chain forms a cycle");
                auto it = run.spans.find(*cur);
                if (it == run.spans.end())
                    break;
                cur = it->second.parent_span_id;
            }
        }
        for (auto const& [id, other] : run.spans)
            if (other.parent_span_id == span.span_id &&
                (other.trace_id != span.trace_id || other.start < span.start))
                throw ValidationError(fmt::format("span '{}' would precede its child '{}'", span.span_id, id));
        break;
    }
    case EventType::status: break;
    case EventType::interrupt:
        if (payload.contains("text") && !payload.at("text").is_string())
            throw ValidationError("text: expected a string");
        break;
    case EventType::user_input:
        if (!payload.contains("text") || !payload.at("text").is_string())
            throw ValidationError("user_input payload needs a string text");
        break;
    }
}

Event StudioHub::ingest(const std::string& run_id, EventType type, json payload)
{
    auto run = find(run_id);
    std::optional<std::filesystem::path> dump;
    {
        std::lock_guard lock(mutex_);
        dump = dump_dir_;
    }
    std::lock_guard rl(run->mutex);
    validate(*run, type, payload);

    Event e;
    e.seq = static_cast<std::int64_t>(run->log.size());
    e.type = type;
    e.payload = std::move(payload);
    if (type == EventType::message)
        run->message_ids.insert(e.payload.at("msg").at("id").get<std::string>());
    else if (type == EventType::span) {
        auto span = span_from_json(e.payload);
        run->spans.emplace(span.span_id, std::move(span));
    }
    run->log.push_back(e);
    run->info.events = static_cast<std::int64_t>(run->log.size());

    if (dump) {
        std::ofstream out(*dump / (run_id + ".jsonl"), std::ios::app);
        if (out)
            out << event_to_json(e).dump() << '\n';
        else
            spdlog::warn("cannot append to event dump for run {}", run_id);
    }
    for (auto const& [id, cb] : run->subscribers) {
        try {
            cb(e);
        } catch (const std::exception& ex) {
            spdlog::warn("studio subscriber {} failed: {}", id, ex.what());
        }
    }
    return e;
}

Event StudioHub::ingest_json(const std::string& run_id, const json& envelope)
{
    Event e;
    try {
        e = event_from_json(envelope);
    } catch (const ParseError& ex) {
        throw ValidationError(ex.what());
    }
    return ingest(run_id, e.type, std::move(e.payload));
}

std::vector<Event> StudioHub::events(const std::string& run_id, std::int64_t from) const
{
    auto run = find(run_id);
    std::lock_guard rl(run->mutex);
    auto const start = static_cast<std::size_t>(std::clamp<std::int64_t>(from, 0, run->log.size()));
    return {run->log.begin() + static_cast<std::ptrdiff_t>(start), run->log.end()};
}

std::uint64_t StudioHub::subscribe(const std::string& run_id, std::int64_t from, EventCallback callback)
{
    auto run = find(run_id);
    std::uint64_t id = 0;
    {
        std::lock_guard lock(mutex_);
        id = next_subscription_++;
    }
    std::lock_guard rl(run->mutex);
    auto const start = static_cast<std::size_t>(std::clamp<std::int64_t>(from, 0, run->log.size()));
    for (auto i = start; i < run->log.size(); ++i)
        callback(run->log[i]);
    run->subscribers.emplace(id, std::move(callback));
    return id;
}

void StudioHub::unsubscribe(const std::string& run_id, std::uint64_t subscription)
{
    std::shared_ptr<Run> run;
    try {
        run = find(run_id);
    } catch (const NotFoundError&) {
        return;
    }
    std::lock_guard rl(run->mutex);
    run->subscribers.erase(subscription);
}

void StudioHub::set_connected(const std::string& run_id, bool connected)
{
    {
        auto run = find(run_id);
        std::lock_guard rl(run->mutex);
        run->info.connected = connected;
    }
    ingest(run_id, EventType::status, json{{"connected", connected}});
}

std::optional<std::string> StudioHub::link_span_to_message(const std::string& run_id, const Span& span) const
{
    auto it = span.attributes.find("msg_id");
    if (it == span.attributes.end() || !it->is_string())
        return std::nullopt;
    auto run = find(run_id);
    std::lock_guard rl(run->mutex);
    auto id = it->get<std::string>();
    if (!run->message_ids.count(id))
        return std::nullopt;
    return id;
}

std::optional<std::string> StudioHub::link_span_to_message(const std::string& run_id,
                                                           const std::string& span_id) const
{
    std::optional<Span> span;
    {
        auto run = find(run_id);
        std::lock_guard rl(run->mutex);
        auto it = run->spans.find(span_id);
        if (it == run->spans.end())
            throw NotFoundError(fmt::format("unknown span '{}' in run '{}'", span_id, run_id));
        span = it->second;
    }
    return link_span_to_message(run_id, *span);
}

std::vector<Span> StudioHub::spans(const std::string& run_id) const
{
    auto run = find(run_id);
    std::lock_guard rl(run->mutex);
    std::vector<Span> out;
    for (auto const& e : run->log)
        if (e.type == EventType::span)
            out.push_back(run->spans.at(e.payload.at("span_id").get<std::string>()));
    return out;
}

void StudioHub::set_dump_dir(std::optional<std::filesystem::path> dir)
{
    if (dir) {
        std::error_code ec;
        std::filesystem::create_directories(*dir, ec);
        if (ec)
            throw StorageError(fmt::format("cannot create '{}': {}", dir->string(), ec.message()));
    }
    std::lock_guard lock(mutex_);
    dump_dir_ = std::move(dir);
}

void EventQueue::push(const Event& e)
{
    {
        std::lock_guard lock(mutex_);
        if (closed_)
            return;
        if (events_.size() >= capacity_) {
            overflowed_ = true;
            closed_ = true;
        } else {
            events_.push_back(e);
        }
    }
    cv_.notify_all();
}

std::optional<Event> EventQueue::pop(std::chrono::milliseconds timeout)
{
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !events_.empty() || closed_; }))
        return std::nullopt;
    if (events_.empty())
        return std::nullopt;
    auto e = std::move(events_.front());
    events_.pop_front();
    return e;
}

void EventQueue::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventQueue::overflowed() const
{
    std::lock_guard lock(mutex_);
    return overflowed_;
}

std::size_t EventQueue::size() const
{
    std::lock_guard lock(mutex_);
    return events_.size();
}

} // namespace agentloom::studio
