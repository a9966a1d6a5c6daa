// SPDX-License-Identifier: Apache-2.0
#include "agentloom/studio.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace agentloom::studio {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using net::awaitable;
using net::use_awaitable;

namespace {

struct Endpoint {
    std::string host;
    std::string port;
};

Endpoint parse_url(const std::string& url)
{
    std::string rest = url;
    if (rest.rfind("http://", 0) == 0)
        rest = rest.substr(7);
    else if (rest.find("://") != std::string::npos)
        throw ValidationError(fmt::format("unsupported studio url '{}'", url));
    if (auto slash = rest.find('/'); slash != std::string::npos)
        rest = rest.substr(0, slash);
    auto colon = rest.rfind(':');
    if (colon == std::string::npos)
        return {rest, "80"};
    return {rest.substr(0, colon), rest.substr(colon + 1)};
}

std::string url_encode(std::string_view s)
{
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~')
            out.push_back(static_cast<char>(c));
        else
            out += fmt::format("%{:02X}", c);
    }
    return out;
}

struct Link {
    explicit Link(net::io_context& io) : ws(io) {}
    websocket::stream<beast::tcp_stream> ws;
    bool dead = false;
};

} // namespace

struct StudioConnection::Impl : std::enable_shared_from_this<StudioConnection::Impl> {
    Endpoint endpoint;
    std::string run_id;
    std::string run_name;
    StudioOptions options;

    net::io_context io{1};
    net::steady_timer signal{io};
    net::steady_timer retry{io};
    std::thread thread;
    std::shared_ptr<Link> link; // io thread only

    mutable std::mutex mutex;
    std::condition_variable drained_cv;
    std::deque<std::string> outbox;
    bool writing = false;
    std::size_t dropped = 0;
    bool connected = false;
    bool closing = false;

    struct Attached {
        std::weak_ptr<AgentBase> agent;
        std::vector<std::string> hooks;
    };
    std::mutex attach_mutex;
    std::vector<Attached> agents;
    std::shared_ptr<QueueInput> input;
    std::set<std::string> forwarded;

    std::shared_ptr<SpanSink> span_forwarder;
    std::shared_ptr<SpanSink> previous_sink;

    void send(EventType type, json payload)
    {
        auto text = json{{"type", to_string(type)}, {"payload", std::move(payload)}}.dump();
        {
            std::lock_guard lock(mutex);
            if (closing)
                return;
            if (outbox.size() >= options.buffer_limit) {
                outbox.pop_front();
                ++dropped;
            }
            outbox.push_back(std::move(text));
        }
        net::post(io, [weak = weak_from_this()] {
            if (auto self = weak.lock())
                self->signal.cancel();
        });
    }

    void forward_message(const Msg& msg, bool last)
    {
        {
            std::lock_guard lock(attach_mutex);
            forwarded.insert(msg.id());
        }
        send(EventType::message, json{{"msg", msg_to_json_value(msg)}, {"last", last}});
    }

    void forward_if_new(const Msg& msg)
    {
        {
            std::lock_guard lock(attach_mutex);
            if (forwarded.count(msg.id()))
                return;
        }
        forward_message(msg, true);
    }

    void handle_control(const std::string& text)
    {
        Event e;
        try {
            auto j = json::parse(text);
            if (!j.contains("type"))
                return; // error report from the server
            e = event_from_json(j);
        } catch (const std::exception& ex) {
            spdlog::debug("ignoring studio frame: {}", ex.what());
            return;
        }
        if (e.type == EventType::interrupt) {
            std::optional<Msg> payload;
            if (auto t = e.payload.value("text", std::string()); !t.empty())
                payload = Msg("user", t, Role::user);
            std::vector<std::shared_ptr<AgentBase>> live;
            {
                std::lock_guard lock(attach_mutex);
                for (auto const& a : agents)
                    if (auto p = a.agent.lock())
                        live.push_back(std::move(p));
            }
            bool any = false;
            for (auto const& a : live)
                any = a->interrupt(payload) || any;
            if (!any)
                send(EventType::status, json{{"notice", "interrupt ignored: no agent is replying"}, {"ref", e.seq}});
        } else if (e.type == EventType::user_input) {
            std::shared_ptr<QueueInput> in;
            {
                std::lock_guard lock(attach_mutex);
                in = input;
            }
            if (in)
                in->push(e.payload.value("text", std::string()));
            else
                send(EventType::status, json{{"notice", "user input ignored: no user agent attached"}, {"ref", e.seq}});
        }
    }

    static awaitable<void> writer(std::shared_ptr<Impl> self, std::shared_ptr<Link> l)
    {
        try {
            for (;;) {
                std::optional<std::string> next;
                {
                    std::lock_guard lock(self->mutex);
                    if (l->dead || self->closing_and_drained())
                        break;
                    if (!self->outbox.empty()) {
                        next = self->outbox.front();
                        self->writing = true;
                    }
                }
                if (!next) {
                    beast::error_code ec;
                    self->signal.expires_at(net::steady_timer::time_point::max());
                    co_await self->signal.async_wait(net::redirect_error(use_awaitable, ec));
                    continue;
                }
                l->ws.text(true);
                co_await l->ws.async_write(net::buffer(*next), use_awaitable);
                {
                    std::lock_guard lock(self->mutex);
                    if (!self->outbox.empty() && self->outbox.front() == *next)
                        self->outbox.pop_front();
                    self->writing = false;
                }
                self->drained_cv.notify_all();
            }
        } catch (const std::exception& e) {
            spdlog::debug("studio writer stopped: {}", e.what());
        }
        {
            std::lock_guard lock(self->mutex);
            self->writing = false;
        }
        self->drained_cv.notify_all();
        l->dead = true;
        beast::error_code ec;
        beast::get_lowest_layer(l->ws).socket().close(ec);
    }

    bool closing_and_drained() const { return closing && outbox.empty(); }

    static awaitable<void> run(std::shared_ptr<Impl> self)
    {
        auto const target =
            fmt::format("/ws/app/{}?name={}", url_encode(self->run_id), url_encode(self->run_name));
        bool warned = false;
        for (;;) {
            {
                std::lock_guard lock(self->mutex);
                if (self->closing)
                    break;
            }
            auto l = std::make_shared<Link>(self->io);
            self->link = l;
            try {
                tcp::resolver resolver(self->io);
                auto results = co_await resolver.async_resolve(self->endpoint.host, self->endpoint.port, use_awaitable);
                beast::get_lowest_layer(l->ws).expires_after(self->options.connect_timeout);
                co_await beast::get_lowest_layer(l->ws).async_connect(results, use_awaitable);
                co_await l->ws.async_handshake(self->endpoint.host + ":" + self->endpoint.port, target, use_awaitable);
                beast::get_lowest_layer(l->ws).expires_never();
                l->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::client));
                {
                    std::lock_guard lock(self->mutex);
                    self->connected = true;
                }
                if (warned)
                    spdlog::info("reconnected to studio run {}", self->run_id);
                warned = false;
                net::co_spawn(self->io, writer(self, l), net::detached);

                beast::flat_buffer buffer;
                for (;;) {
                    buffer.clear();
                    co_await l->ws.async_read(buffer, use_awaitable);
                    self->handle_control(beast::buffers_to_string(buffer.data()));
                }
            } catch (const std::exception& e) {
                if (!warned && !self->is_closing()) {
                    spdlog::warn("studio connection lost ({}); buffering up to {} events", e.what(),
                                 self->options.buffer_limit);
                    warned = true;
                }
            }
            {
                std::lock_guard lock(self->mutex);
                self->connected = false;
            }
            l->dead = true;
            self->signal.cancel();
            beast::error_code ec;
            beast::get_lowest_layer(l->ws).socket().close(ec);
            self->drained_cv.notify_all();
            if (self->is_closing())
                break;
            self->retry.expires_after(self->options.reconnect_delay);
            co_await self->retry.async_wait(net::redirect_error(use_awaitable, ec));
        }
    }

    bool is_closing() const
    {
        std::lock_guard lock(mutex);
        return closing;
    }
};

namespace {

class ForwardingSink : public SpanSink {
public:
    ForwardingSink(std::weak_ptr<StudioConnection::Impl> impl, std::shared_ptr<SpanSink> next)
        : impl_(std::move(impl)), next_(std::move(next))
    {
    }

    void emit(const Span& span) override
    {
        if (auto p = impl_.lock())
            p->send(EventType::span, span_to_json(span));
        if (next_)
            next_->emit(span);
    }

private:
    std::weak_ptr<StudioConnection::Impl> impl_;
    std::shared_ptr<SpanSink> next_;
};

} // namespace

StudioConnection::~StudioConnection()
{
    close();
}

std::string StudioConnection::run_id() const
{
    return impl_ ? impl_->run_id : std::string();
}

bool StudioConnection::connected() const
{
    if (!impl_)
        return false;
    std::lock_guard lock(impl_->mutex);
    return impl_->connected;
}

void StudioConnection::send(EventType type, json payload)
{
    if (impl_)
        impl_->send(type, std::move(payload));
}

void StudioConnection::send_message(const Msg& msg, bool last)
{
    if (impl_)
        impl_->forward_message(msg, last);
}

void StudioConnection::attach(const std::shared_ptr<AgentBase>& agent)
{
    if (!impl_ || !agent)
        return;
    std::weak_ptr<Impl> weak = impl_;
    Impl::Attached a{agent, {}};
    a.hooks.push_back(agent->register_hook(
        HookSite::reply, HookPosition::pre,
        Hook<ReplyArgs>([weak](AgentBase&, const ReplyArgs& args) -> std::optional<ReplyArgs> {
            if (auto p = weak.lock(); p && args.msg)
                p->forward_if_new(*args.msg);
            return std::nullopt;
        })));
    a.hooks.push_back(agent->register_hook(
        HookSite::print, HookPosition::pre,
        Hook<PrintEvent>([weak](AgentBase&, const PrintEvent& ev) -> std::optional<PrintEvent> {
            if (auto p = weak.lock())
                p->forward_message(ev.msg, ev.last);
            return std::nullopt;
        })));
    a.hooks.push_back(agent->register_hook(
        HookSite::observe, HookPosition::pre,
        Hook<std::vector<Msg>>([weak](AgentBase&, const std::vector<Msg>& msgs) -> std::optional<std::vector<Msg>> {
            if (auto p = weak.lock())
                for (auto const& m : msgs)
                    p->forward_if_new(m);
            return std::nullopt;
        })));
    std::lock_guard lock(impl_->attach_mutex);
    impl_->agents.push_back(std::move(a));
}

void StudioConnection::attach_user(const std::shared_ptr<UserAgent>& user)
{
    if (!impl_ || !user)
        return;
    auto queue = std::make_shared<QueueInput>();
    user->set_input(queue);
    {
        std::lock_guard lock(impl_->attach_mutex);
        if (impl_->input)
            impl_->input->close();
        impl_->input = queue;
    }
    attach(user);
}

void StudioConnection::detach_all()
{
    if (!impl_)
        return;
    std::vector<Impl::Attached> agents;
    std::shared_ptr<QueueInput> input;
    {
        std::lock_guard lock(impl_->attach_mutex);
        agents.swap(impl_->agents);
        input = std::move(impl_->input);
    }
    for (auto const& a : agents) {
        if (auto p = a.agent.lock()) {
            for (auto const& h : a.hooks) {
                try {
                    p->remove_hook(h);
                } catch (const NotFoundError&) {
                }
            }
        }
    }
    if (input)
        input->close();
}

std::size_t StudioConnection::buffered() const
{
    if (!impl_)
        return 0;
    std::lock_guard lock(impl_->mutex);
    return impl_->outbox.size();
}

std::size_t StudioConnection::dropped() const
{
    if (!impl_)
        return 0;
    std::lock_guard lock(impl_->mutex);
    return impl_->dropped;
}

bool StudioConnection::flush(std::chrono::milliseconds timeout)
{
    if (!impl_)
        return true;
    std::unique_lock lock(impl_->mutex);
    return impl_->drained_cv.wait_for(lock, timeout, [&] { return impl_->outbox.empty() && !impl_->writing; });
}

void StudioConnection::close()
{
    if (!impl_)
        return;
    if (connected())
        flush(std::chrono::seconds(1));
    detach_all();
    if (impl_->span_forwarder && span_sink() == impl_->span_forwarder)
        set_span_sink(impl_->previous_sink);
    {
        std::lock_guard lock(impl_->mutex);
        impl_->closing = true;
        impl_->outbox.clear();
    }
    net::post(impl_->io, [raw = impl_.get()] {
        raw->retry.cancel();
        raw->signal.cancel();
        if (raw->link) {
            raw->link->dead = true;
            beast::error_code ec;
            beast::get_lowest_layer(raw->link->ws).socket().shutdown(tcp::socket::shutdown_both, ec);
            beast::get_lowest_layer(raw->link->ws).socket().close(ec);
        }
    });
    // The io thread's coroutines hold references too; keep ours until it has finished.
    auto impl = std::move(impl_);
    if (impl->thread.joinable()) {
        if (impl->thread.get_id() == std::this_thread::get_id())
            impl->thread.detach();
        else
            impl->thread.join();
    }
}

std::shared_ptr<StudioConnection> studio_init(const std::string& studio_url, const std::string& run_name,
                                              StudioOptions options)
{
    auto inactive = [] { return std::shared_ptr<StudioConnection>(new StudioConnection(nullptr)); };
    Endpoint endpoint;
    try {
        endpoint = parse_url(studio_url);
    } catch (const std::exception& e) {
        spdlog::warn("studio disabled: {}", e.what());
        return inactive();
    }

    std::string run_id;
    try {
        httplib::Client client(endpoint.host, std::stoi(endpoint.port));
        auto const ms = options.connect_timeout.count();
        client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
        client.set_read_timeout(ms / 1000 + 1, 0);
        auto res = client.Post("/api/runs", json{{"name", run_name}}.dump(), "application/json");
        if (!res)
            throw TransportError(httplib::to_string(res.error()));
        if (res->status != 201 && res->status != 200)
            throw TransportError(fmt::format("studio answered {}", res->status));
        run_id = json::parse(res->body).at("run_id").get<std::string>();
    } catch (const std::exception& e) {
        spdlog::warn("studio at {} is unreachable ({}); continuing without it", studio_url, e.what());
        return inactive();
    }

    auto impl = std::make_shared<StudioConnection::Impl>();
    impl->endpoint = std::move(endpoint);
    impl->run_id = run_id;
    impl->run_name = run_name;
    impl->options = options;
    if (options.forward_spans) {
        impl->previous_sink = span_sink();
        impl->span_forwarder = std::make_shared<ForwardingSink>(impl, impl->previous_sink);
        set_span_sink(impl->span_forwarder);
    }
    net::co_spawn(impl->io, StudioConnection::Impl::run(impl), net::detached);
    impl->thread = std::thread([raw = impl.get()] {
        try {
            raw->io.run();
        } catch (const std::exception& e) {
            spdlog::error("studio client loop: {}", e.what());
        }
    });
    auto conn = std::shared_ptr<StudioConnection>(new StudioConnection(impl));
    // Give the first connection a moment so early events are not just buffered.
    for (int i = 0; i < 50 && !conn->connected(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    return conn;
}

} // namespace agentloom::studio
