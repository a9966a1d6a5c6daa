// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/agent.hpp"
#include "agentloom/errors.hpp"
#include "agentloom/message.hpp"
#include "agentloom/tracing.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace agentloom::studio {

enum class EventType { message, span, status, interrupt, user_input };

std::string_view to_string(EventType type);
/// Throws ParseError for unknown names.
EventType parse_event_type(std::string_view name);

/// Wire envelope: `{seq, type, payload}`.
///   message:    {msg: Msg, last: bool}
///   span:       Span
///   status:     object
///   interrupt:  {text?: string}
///   user_input: {text: string}
struct Event {
    std::int64_t seq = 0;
    EventType type = EventType::status;
    json payload = json::object();
};

json event_to_json(const Event& e);
/// `seq` is optional on input (the hub assigns it).
Event event_from_json(const json& j);

struct RunInfo {
    std::string run_id;
    std::string name;
    bool connected = false;
    std::int64_t events = 0;
    std::string created_at;
};

json run_info_to_json(const RunInfo& r);

using EventCallback = std::function<void(const Event&)>;

/// Per-run append-only event logs with ordered fan-out. Ingestion into one run is serialized,
/// and subscriber callbacks run under that serialization, so every subscriber sees the same
/// order. Callbacks must not block and must not call back into the hub for the same run.
class StudioHub {
public:
    StudioHub() = default;
    StudioHub(const StudioHub&) = delete;
    StudioHub& operator=(const StudioHub&) = delete;

    /// Registers a run. An explicit id that already exists returns that run unchanged.
    RunInfo register_run(std::string name, std::optional<std::string> run_id = std::nullopt);
    std::vector<RunInfo> runs() const;
    /// Throws NotFoundError.
    RunInfo run(const std::string& run_id) const;
    bool has_run(const std::string& run_id) const;

    /// Validates, stamps and appends an event. Throws NotFoundError for an unknown run and
    /// ValidationError naming the reason for a malformed payload.
    Event ingest(const std::string& run_id, EventType type, json payload);
    /// Same, from an envelope `{type, payload}`.
    Event ingest_json(const std::string& run_id, const json& envelope);

    /// Events with seq >= from.
    std::vector<Event> events(const std::string& run_id, std::int64_t from = 0) const;

    /// Delivers the backlog from `from` and then every new event. Returns a subscription id.
    std::uint64_t subscribe(const std::string& run_id, std::int64_t from, EventCallback callback);
    /// After this returns the callback is never invoked again.
    void unsubscribe(const std::string& run_id, std::uint64_t subscription);

    /// Records a status event `{connected: bool}` and updates the run.
    void set_connected(const std::string& run_id, bool connected);

    /// The message a span belongs to, when it carries a `msg_id` attribute naming a message
    /// present in the run's log.
    std::optional<std::string> link_span_to_message(const std::string& run_id, const Span& span) const;
    std::optional<std::string> link_span_to_message(const std::string& run_id, const std::string& span_id) const;
    std::vector<Span> spans(const std::string& run_id) const;

    /// Appends every accepted event as a JSON line to `{dir}/{run_id}.jsonl`.
    void set_dump_dir(std::optional<std::filesystem::path> dir);

private:
    struct Run {
        RunInfo info;
        mutable std::mutex mutex;
        std::vector<Event> log;
        std::set<std::string> message_ids;
        std::map<std::string, Span> spans;
        std::map<std::uint64_t, EventCallback> subscribers;
    };

    std::shared_ptr<Run> find(const std::string& run_id) const;
    void validate(const Run& run, EventType type, const json& payload) const;

    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Run>> runs_;
    std::uint64_t next_subscription_ = 1;
    std::optional<std::filesystem::path> dump_dir_;
};

/// Bounded queue usable as a subscription target. Overflow closes the queue and marks it.
class EventQueue {
public:
    explicit EventQueue(std::size_t capacity = 4096) : capacity_(capacity) {}

    void push(const Event& e);
    /// Nullopt on timeout or once closed and drained.
    std::optional<Event> pop(std::chrono::milliseconds timeout);
    void close();
    bool overflowed() const;
    std::size_t size() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Event> events_;
    bool closed_ = false;
    bool overflowed_ = false;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    unsigned short port = 0;
    /// Evaluation storage served under /api/eval.
    std::optional<std::filesystem::path> storage_root;
    /// Built UI assets served for non-API paths.
    std::optional<std::filesystem::path> static_dir;
    /// Outgoing frames queued per WebSocket before the peer is considered too slow.
    std::size_t subscriber_buffer = 4096;
};

/// HTTP API and WebSocket endpoints over one port.
///
///   GET  /api/health
///   POST /api/runs                              {name, run_id?}
///   GET  /api/runs
///   GET  /api/runs/{id}
///   GET  /api/runs/{id}/events?from=N
///   POST /api/runs/{id}/events                  {type, payload}
///   POST /api/runs/{id}/interrupt               {text?}
///   POST /api/runs/{id}/input                   {text}
///   GET  /api/runs/{id}/spans/{span_id}/link
///   GET  /api/eval/benchmarks
///   GET  /api/eval/{bench}/aggregate?seed=&resamples=
///   GET  /api/eval/{bench}/items/{task}/trajectories
///   WS   /ws/app/{id}?name=     app events in, interrupt/user_input out
///   WS   /ws/ui/{id}?from=N     backlog then live events out, interrupt/user_input in
class StudioServer {
public:
    StudioServer(std::shared_ptr<StudioHub> hub, ServerOptions options);
    ~StudioServer();
    StudioServer(const StudioServer&) = delete;
    StudioServer& operator=(const StudioServer&) = delete;

    /// Binds and starts serving. Throws TransportError when the address cannot be bound.
    void start();
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    unsigned short port() const;
    std::string url() const;
    const std::shared_ptr<StudioHub>& hub() const noexcept { return hub_; }

    struct Impl;

private:
    std::shared_ptr<StudioHub> hub_;
    ServerOptions options_;
    std::unique_ptr<Impl> impl_;
};

struct StudioOptions {
    /// Events kept while the studio is unreachable; the oldest are dropped beyond this.
    std::size_t buffer_limit = 1000;
    std::chrono::milliseconds reconnect_delay{300};
    std::chrono::milliseconds connect_timeout{2000};
    /// Install a span sink that forwards spans (chained with any existing sink).
    bool forward_spans = true;
};

/// App-side handle returned by studio_init. An inactive handle (studio unreachable at init)
/// accepts every call and does nothing.
class StudioConnection {
public:
    ~StudioConnection();
    StudioConnection(const StudioConnection&) = delete;
    StudioConnection& operator=(const StudioConnection&) = delete;

    bool active() const noexcept { return impl_ != nullptr; }
    std::string run_id() const;
    bool connected() const;

    /// Fire-and-forget.
    void send(EventType type, json payload);
    void send_message(const Msg& msg, bool last = true);

    /// Forwards printed and observed messages of `agent` and routes interrupt events to it.
    void attach(const std::shared_ptr<AgentBase>& agent);
    /// Feeds user_input events to `user` through a queue input.
    void attach_user(const std::shared_ptr<UserAgent>& user);
    void detach_all();

    std::size_t buffered() const;
    std::size_t dropped() const;
    /// Waits until everything buffered has been written. False on timeout.
    bool flush(std::chrono::milliseconds timeout);
    void close();

    struct Impl;

private:
    friend std::shared_ptr<StudioConnection> studio_init(const std::string&, const std::string&, StudioOptions);
    explicit StudioConnection(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<Impl> impl_;
};

/// Registers a run with the studio at `studio_url` (http://host:port) and opens the app
/// connection. Never throws for connectivity problems: it logs a warning and returns an
/// inactive handle.
std::shared_ptr<StudioConnection> studio_init(const std::string& studio_url, const std::string& run_name,
                                              StudioOptions options = {});

} // namespace agentloom::studio
