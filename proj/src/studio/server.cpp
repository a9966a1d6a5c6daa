// SPDX-License-Identifier: Apache-2.0
#include "agentloom/studio.hpp"
#include "agentloom/eval.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

namespace agentloom::studio {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using net::awaitable;
using net::use_awaitable;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

class HttpError : public std::runtime_error {
public:
    HttpError(http::status status, const std::string& what) : std::runtime_error(what), status_(status) {}
    http::status status() const noexcept { return status_; }

private:
    http::status status_;
};

std::string percent_decode(std::string_view s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            auto hex = std::string(s.substr(i + 1, 2));
            char* end = nullptr;
            auto v = std::strtol(hex.c_str(), &end, 16);
            if (end == hex.c_str() + 2) {
                out.push_back(static_cast<char>(v));
                i += 2;
                continue;
            }
        }
        out.push_back(s[i] == '+' ? ' ' : s[i]);
    }
    return out;
}

struct Target {
    std::vector<std::string> segments;
    std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target)
{
    Target t;
    auto const q = target.find('?');
    auto path = target.substr(0, q);
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto next = path.find('/', pos);
        if (next == std::string_view::npos)
            next = path.size();
        if (next > pos)
            t.segments.push_back(percent_decode(path.substr(pos, next - pos)));
        pos = next + 1;
    }
    if (q != std::string_view::npos) {
        auto rest = target.substr(q + 1);
        while (!rest.empty()) {
            auto amp = rest.find('&');
            auto kv = rest.substr(0, amp);
            auto eq = kv.find('=');
            if (eq == std::string_view::npos)
                t.query[percent_decode(kv)] = "";
            else
                t.query[percent_decode(kv.substr(0, eq))] = percent_decode(kv.substr(eq + 1));
            if (amp == std::string_view::npos)
                break;
            rest = rest.substr(amp + 1);
        }
    }
    return t;
}

std::int64_t query_int(const Target& t, const std::string& key, std::int64_t fallback)
{
    auto it = t.query.find(key);
    if (it == t.query.end() || it->second.empty())
        return fallback;
    try {
        std::size_t used = 0;
        auto v = std::stoll(it->second, &used);
        if (used != it->second.size())
            throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw HttpError(http::status::bad_request, fmt::format("query parameter '{}' must be an integer", key));
    }
}

json parse_body(const Request& req)
{
    if (req.body().empty())
        return json::object();
    try {
        return json::parse(req.body());
    } catch (const json::parse_error& e) {
        throw HttpError(http::status::bad_request, fmt::format("request body is not valid JSON: {}", e.what()));
    }
}

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view content_type = "application/json")
{
    Response res{status, req.version()};
    res.set(http::field::server, "agentloom-studio");
    res.set(http::field::content_type, std::string(content_type));
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

Response json_response(const Request& req, const json& body, http::status status = http::status::ok)
{
    return make_response(req, status, body.dump());
}

std::string_view mime_for(const std::filesystem::path& p)
{
    auto const ext = p.extension().string();
    if (ext == ".html")
        return "text/html; charset=utf-8";
    if (ext == ".js")
        return "text/javascript";
    if (ext == ".css")
        return "text/css";
    if (ext == ".json")
        return "application/json";
    if (ext == ".svg")
        return "image/svg+xml";
    if (ext == ".png")
        return "image/png";
    return "application/octet-stream";
}

} // namespace

struct StudioServer::Impl {
    std::shared_ptr<StudioHub> hub;
    ServerOptions options;
    net::io_context io{1};
    tcp::acceptor acceptor{io};
    std::thread thread;
    unsigned short port = 0;

    std::mutex mutex;
    std::condition_variable stopped_cv;
    bool running = false;
    std::set<std::pair<std::string, std::uint64_t>> subscriptions;

    Response handle(const Request& req);
    Response handle_api(const Request& req, const Target& t);
    Response handle_eval(const Request& req, const Target& t);
    Response handle_static(const Request& req, const Target& t);

    std::uint64_t track_subscribe(const std::string& run_id, std::int64_t from, EventCallback cb)
    {
        auto id = hub->subscribe(run_id, from, std::move(cb));
        std::lock_guard lock(mutex);
        subscriptions.emplace(run_id, id);
        return id;
    }

    void track_unsubscribe(const std::string& run_id, std::uint64_t id)
    {
        hub->unsubscribe(run_id, id);
        std::lock_guard lock(mutex);
        subscriptions.erase({run_id, id});
    }
};

namespace {

enum class WsRole { app, ui };

struct WsSession {
    WsSession(beast::tcp_stream stream, std::size_t limit)
        : ws(std::move(stream)), signal(ws.get_executor()), limit(limit)
    {
        signal.expires_at(net::steady_timer::time_point::max());
    }

    websocket::stream<beast::tcp_stream> ws;
    net::steady_timer signal;
    std::deque<std::string> queue;
    std::size_t limit;
    bool closing = false;

    // Runs on the io thread.
    void enqueue(std::string text)
    {
        if (closing)
            return;
        if (queue.size() >= limit) {
            spdlog::warn("studio subscriber too slow; disconnecting");
            shutdown();
            return;
        }
        queue.push_back(std::move(text));
        signal.cancel();
    }

    void shutdown()
    {
        closing = true;
        signal.cancel();
        beast::error_code ec;
        beast::get_lowest_layer(ws).socket().shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws).socket().close(ec);
    }
};

awaitable<void> run_writer(std::shared_ptr<WsSession> s)
{
    try {
        while (!s->closing) {
            if (s->queue.empty()) {
                beast::error_code ec;
                s->signal.expires_at(net::steady_timer::time_point::max());
                co_await s->signal.async_wait(net::redirect_error(use_awaitable, ec));
                continue;
            }
            auto text = std::move(s->queue.front());
            s->queue.pop_front();
            s->ws.text(true);
            co_await s->ws.async_write(net::buffer(text), use_awaitable);
        }
    } catch (const std::exception& e) {
        spdlog::debug("studio websocket writer stopped: {}", e.what());
    }
    s->shutdown();
}

void send_error(WsSession& s, const std::string& reason)
{
    s.enqueue(json{{"error", reason}}.dump());
}

awaitable<void> websocket_session(StudioServer::Impl& impl, beast::tcp_stream stream, Request req, WsRole role,
                                  std::string run_id, Target target)
{
    auto s = std::make_shared<WsSession>(std::move(stream), impl.options.subscriber_buffer);
    s->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    co_await s->ws.async_accept(req, use_awaitable);

    auto const ex = s->ws.get_executor();
    std::weak_ptr<WsSession> weak = s;
    auto forward = [weak, ex](const Event& e) {
        net::post(ex, [weak, text = event_to_json(e).dump()]() mutable {
            if (auto live = weak.lock())
                live->enqueue(std::move(text));
        });
    };

    std::uint64_t sub = 0;
    if (role == WsRole::app) {
        impl.hub->set_connected(run_id, true);
        auto const from = impl.hub->run(run_id).events;
        sub = impl.track_subscribe(run_id, from, [forward](const Event& e) {
            if (e.type == EventType::interrupt || e.type == EventType::user_input)
                forward(e);
        });
    } else {
        sub = impl.track_subscribe(run_id, query_int(target, "from", 0), forward);
    }
    net::co_spawn(ex, run_writer(s), net::detached);

    try {
        beast::flat_buffer buffer;
        while (!s->closing) {
            buffer.clear();
            co_await s->ws.async_read(buffer, use_awaitable);
            auto const text = beast::buffers_to_string(buffer.data());
            try {
                auto envelope = json::parse(text);
                auto const type = parse_event_type(envelope.value("type", ""));
                bool const control = type == EventType::interrupt || type == EventType::user_input;
                if (role == WsRole::ui && !control)
                    throw ValidationError(fmt::format("the ui endpoint does not accept '{}' events", to_string(type)));
                if (role == WsRole::app && control)
                    throw ValidationError(fmt::format("the app endpoint does not accept '{}' events", to_string(type)));
                impl.hub->ingest_json(run_id, envelope);
            } catch (const std::exception& e) {
                send_error(*s, e.what());
            }
        }
    } catch (const std::exception& e) {
        spdlog::debug("studio websocket for run {} closed: {}", run_id, e.what());
    }
    impl.track_unsubscribe(run_id, sub);
    if (role == WsRole::app) {
        try {
            impl.hub->set_connected(run_id, false);
        } catch (const std::exception&) {
        }
    }
    s->shutdown();
}

awaitable<void> http_session(StudioServer::Impl& impl, tcp::socket socket)
{
    beast::tcp_stream stream(std::move(socket));
    beast::flat_buffer buffer;
    try {
        for (;;) {
            http::request_parser<http::string_body> parser;
            parser.body_limit(64 * 1024 * 1024);
            stream.expires_after(std::chrono::minutes(5));
            co_await http::async_read(stream, buffer, parser, use_awaitable);
            auto req = parser.release();

            if (websocket::is_upgrade(req)) {
                auto target = parse_target(std::string_view(req.target().data(), req.target().size()));
                auto const& seg = target.segments;
                std::optional<Response> reject;
                WsRole role = WsRole::ui;
                if (seg.size() == 3 && seg[0] == "ws" && (seg[1] == "app" || seg[1] == "ui")) {
                    role = seg[1] == "app" ? WsRole::app : WsRole::ui;
                    if (role == WsRole::app && !impl.hub->has_run(seg[2])) {
                        auto it = target.query.find("name");
                        try {
                            impl.hub->register_run(it == target.query.end() ? seg[2] : it->second, seg[2]);
                        } catch (const std::exception& e) {
                            reject = json_response(req, json{{"error", e.what()}}, http::status::bad_request);
                        }
                    } else if (role == WsRole::ui && !impl.hub->has_run(seg[2])) {
                        reject = json_response(req, json{{"error", fmt::format("unknown run '{}'", seg[2])}},
                                               http::status::not_found);
                    }
                } else {
                    reject = json_response(req, json{{"error", "unknown websocket endpoint"}}, http::status::not_found);
                }
                if (reject) {
                    reject->keep_alive(false);
                    co_await http::async_write(stream, *reject, use_awaitable);
                    break;
                }
                stream.expires_never();
                auto run_id = seg[2];
                co_await websocket_session(impl, std::move(stream), std::move(req), role, std::move(run_id),
                                           std::move(target));
                co_return;
            }

            auto res = impl.handle(req);
            co_await http::async_write(stream, res, use_awaitable);
            if (!res.keep_alive())
                break;
        }
    } catch (const std::exception& e) {
        spdlog::debug("studio http session ended: {}", e.what());
    }
    beast::error_code ec;
    stream.socket().shutdown(tcp::socket::shutdown_send, ec);
}

awaitable<void> listener(StudioServer::Impl& impl)
{
    for (;;) {
        beast::error_code ec;
        auto socket = co_await impl.acceptor.async_accept(net::redirect_error(use_awaitable, ec));
        if (ec) {
            if (ec == net::error::operation_aborted || !impl.acceptor.is_open())
                co_return;
            spdlog::warn("studio accept failed: {}", ec.message());
            continue;
        }
        net::co_spawn(impl.io, http_session(impl, std::move(socket)), net::detached);
    }
}

} // namespace

Response StudioServer::Impl::handle(const Request& req)
{
    auto const target = parse_target(std::string_view(req.target().data(), req.target().size()));
    try {
        if (req.method() == http::verb::options) {
            auto res = make_response(req, http::status::no_content, "");
            res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
            return res;
        }
        if (!target.segments.empty() && target.segments[0] == "api")
            return handle_api(req, target);
        return handle_static(req, target);
    } catch (const HttpError& e) {
        return json_response(req, json{{"error", e.what()}}, e.status());
    } catch (const NotFoundError& e) {
        return json_response(req, json{{"error", e.what()}}, http::status::not_found);
    } catch (const eval::EmptyReportError& e) {
        return json_response(req, json{{"error", e.what()}}, http::status::not_found);
    } catch (const ValidationError& e) {
        return json_response(req, json{{"error", e.what()}}, http::status::bad_request);
    } catch (const ParseError& e) {
        return json_response(req, json{{"error", e.what()}}, http::status::bad_request);
    } catch (const std::exception& e) {
        return json_response(req, json{{"error", e.what()}}, http::status::internal_server_error);
    }
}

Response StudioServer::Impl::handle_api(const Request& req, const Target& t)
{
    auto const& seg = t.segments;
    auto const get = req.method() == http::verb::get;
    auto const post = req.method() == http::verb::post;
    auto const n = seg.size();

    if (n == 2 && seg[1] == "health" && get)
        return json_response(req, json{{"status", "ok"}});

    if (n >= 2 && seg[1] == "runs") {
        if (n == 2 && post) {
            auto body = parse_body(req);
            if (!body.is_object())
                throw HttpError(http::status::bad_request, "expected an object");
            auto name = body.value("name", std::string("run"));
            std::optional<std::string> id;
            if (body.contains("run_id") && body.at("run_id").is_string())
                id = body.at("run_id").get<std::string>();
            return json_response(req, run_info_to_json(hub->register_run(name, id)), http::status::created);
        }
        if (n == 2 && get) {
            json arr = json::array();
            for (auto const& r : hub->runs())
                arr.push_back(run_info_to_json(r));
            return json_response(req, arr);
        }
        auto const& id = seg[2];
        if (n == 3 && get)
            return json_response(req, run_info_to_json(hub->run(id)));
        if (n == 4 && seg[3] == "events" && get) {
            json arr = json::array();
            for (auto const& e : hub->events(id, query_int(t, "from", 0)))
                arr.push_back(event_to_json(e));
            return json_response(req, arr);
        }
        if (n == 4 && seg[3] == "events" && post) {
            auto e = hub->ingest_json(id, parse_body(req));
            return json_response(req, event_to_json(e), http::status::created);
        }
        if (n == 4 && (seg[3] == "interrupt" || seg[3] == "input") && post) {
            auto body = parse_body(req);
            auto const type = seg[3] == "interrupt" ? EventType::interrupt : EventType::user_input;
            auto const connected = hub->run(id).connected;
            auto e = hub->ingest(id, type, body);
            return json_response(req, json{{"event", event_to_json(e)}, {"delivered", connected}}, http::status::created);
        }
        if (n == 6 && seg[3] == "spans" && seg[5] == "link" && get) {
            auto link = hub->link_span_to_message(id, seg[4]);
            return json_response(req, json{{"span_id", seg[4]}, {"msg_id", link ? json(*link) : json(nullptr)}});
        }
    }

    if (n >= 2 && seg[1] == "eval" && get)
        return handle_eval(req, t);

    throw HttpError(http::status::not_found, fmt::format("no route for {} {}", std::string(req.method_string()),
                                                         std::string(req.target())));
}

Response StudioServer::Impl::handle_eval(const Request& req, const Target& t)
{
    if (!options.storage_root)
        throw HttpError(http::status::not_found, "no evaluation storage configured");
    eval::FileStorage storage(*options.storage_root);
    auto const& seg = t.segments;
    auto const n = seg.size();

    if (n == 3 && seg[2] == "benchmarks") {
        json arr = json::array();
        for (auto const& b : storage.list_benchmarks())
            arr.push_back({{"name", b}, {"tasks", storage.list_tasks(b).size()}});
        return json_response(req, arr);
    }
    if (n < 4)
        throw HttpError(http::status::not_found, "no such evaluation route");
    auto const& bench = seg[2];
    std::error_code ec;
    if (!std::filesystem::is_directory(storage.root() / bench, ec))
        throw NotFoundError(fmt::format("unknown benchmark '{}'", bench));

    if (n == 4 && seg[3] == "aggregate") {
        eval::AggregateOptions opts;
        opts.bootstrap.seed = static_cast<std::uint64_t>(query_int(t, "seed", 0));
        opts.bootstrap.resamples = static_cast<int>(query_int(t, "resamples", 1000));
        return json_response(req, eval::report_to_json(eval::aggregate(storage, bench, opts)));
    }
    if (n == 6 && seg[3] == "items" && seg[5] == "trajectories") {
        auto const& task = seg[4];
        if (!std::filesystem::is_directory(storage.root() / bench / task, ec))
            throw NotFoundError(fmt::format("unknown task '{}' in benchmark '{}'", task, bench));
        json repeats = json::array();
        for (int r : storage.list_repeats(bench, task)) {
            if (!std::filesystem::exists(storage.unit_dir(bench, task, r) / "solution.json", ec))
                continue;
            auto sol = eval::solution_to_json(storage.load_solution(bench, task, r));
            sol["repeat"] = r;
            sol["results"] = storage.has_evaluation(bench, task, r) ? storage.load_evaluation(bench, task, r).at("results")
                                                                    : json::array();
            repeats.push_back(std::move(sol));
        }
        return json_response(req, json{{"benchmark", bench}, {"task", task}, {"repeats", std::move(repeats)}});
    }
    throw HttpError(http::status::not_found, "no such evaluation route");
}

Response StudioServer::Impl::handle_static(const Request& req, const Target& t)
{
    if (!options.static_dir || req.method() != http::verb::get)
        throw HttpError(http::status::not_found, "not found");
    std::filesystem::path rel;
    for (auto const& s : t.segments) {
        if (s == ".." || s == "." || s.find('\\') != std::string::npos)
            throw HttpError(http::status::bad_request, "invalid path");
        rel /= s;
    }
    auto path = *options.static_dir / rel;
    std::error_code ec;
    if (t.segments.empty() || std::filesystem::is_directory(path, ec))
        path /= "index.html";
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw HttpError(http::status::not_found, "not found");
    std::ostringstream ss;
    ss << in.rdbuf();
    return make_response(req, http::status::ok, ss.str(), mime_for(path));
}

StudioServer::StudioServer(std::shared_ptr<StudioHub> hub, ServerOptions options)
    : hub_(std::move(hub)), options_(std::move(options))
{
    if (!hub_)
        throw ValidationError("studio server needs a hub");
}

StudioServer::~StudioServer()
{
    stop();
    impl_.reset();
}

void StudioServer::start()
{
    if (impl_)
        throw StateError("studio server already started");
    auto impl = std::make_unique<Impl>();
    impl->hub = hub_;
    impl->options = options_;

    beast::error_code ec;
    auto const address = net::ip::make_address(options_.host, ec);
    if (ec)
        throw ValidationError(fmt::format("invalid host '{}': {}", options_.host, ec.message()));
    tcp::endpoint endpoint(address, options_.port);
    impl->acceptor.open(endpoint.protocol(), ec);
    if (!ec)
        impl->acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec)
        impl->acceptor.bind(endpoint, ec);
    if (!ec)
        impl->acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec)
        throw TransportError(fmt::format("cannot listen on {}:{}: {}", options_.host, options_.port, ec.message()));
    impl->port = impl->acceptor.local_endpoint().port();
    impl->running = true;

    net::co_spawn(impl->io, listener(*impl), net::detached);
    impl->thread = std::thread([raw = impl.get()] {
        for (;;) {
            try {
                raw->io.run();
                return;
            } catch (const std::exception& e) {
                spdlog::error("studio server loop: {}", e.what());
            }
        }
    });
    impl_ = std::move(impl);
    spdlog::info("studio listening on {}", url());
}

void StudioServer::stop()
{
    if (!impl_)
        return;
    {
        std::lock_guard lock(impl_->mutex);
        if (!impl_->running)
            return;
    }
    net::post(impl_->io, [raw = impl_.get()] {
        beast::error_code ec;
        raw->acceptor.close(ec);
        raw->io.stop();
    });
    if (impl_->thread.joinable())
        impl_->thread.join();
    std::set<std::pair<std::string, std::uint64_t>> subs;
    {
        std::lock_guard lock(impl_->mutex);
        subs.swap(impl_->subscriptions);
        impl_->running = false;
    }
    for (auto const& [run, id] : subs)
        hub_->unsubscribe(run, id);
    impl_->stopped_cv.notify_all();
}

void StudioServer::wait()
{
    if (!impl_)
        return;
    std::unique_lock lock(impl_->mutex);
    impl_->stopped_cv.wait(lock, [&] { return !impl_->running; });
}

unsigned short StudioServer::port() const
{
    if (!impl_)
        throw StateError("studio server is not running");
    return impl_->port;
}

std::string StudioServer::url() const
{
    return fmt::format("http://{}:{}", options_.host, port());
}

} // namespace agentloom::studio
