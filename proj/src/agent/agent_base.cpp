// SPDX-License-Identifier: Apache-2.0
#include "agentloom/agent.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/tracing.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <iostream>

namespace agentloom {

std::string_view to_string(HookSite site)
{
    switch (site) {
    case HookSite::reply: return "reply";
    case HookSite::observe: return "observe";
    case HookSite::reasoning: return "reasoning";
    case HookSite::acting: return "acting";
    case HookSite::print: return "print";
    }
    return "unknown";
}

std::string_view to_string(InterruptPoint at)
{
    switch (at) {
    case InterruptPoint::reasoning: return "reasoning";
    case InterruptPoint::acting: return "acting";
    case InterruptPoint::idle: return "idle";
    }
    return "idle";
}

namespace {

std::size_t expected_hook_index(HookSite site, HookPosition position)
{
    bool const pre = position == HookPosition::pre;
    switch (site) {
    case HookSite::reply: return pre ? 0 : 1;
    case HookSite::observe: return 2;
    case HookSite::reasoning: return pre ? 3 : 4;
    case HookSite::acting: return pre ? 5 : 1;
    case HookSite::print: return 6;
    }
    return 0;
}

std::string describe_block(const ContentBlock& b)
{
    if (auto const* t = b.get_if<TextBlock>())
        return t->text;
    if (auto const* t = b.get_if<ThinkingBlock>())
        return fmt::format("[thinking] {}", t->thinking);
    if (auto const* u = b.get_if<ToolUseBlock>())
        return fmt::format("[tool_use {}] {}", u->name, u->input.dump());
    if (auto const* r = b.get_if<ToolResultBlock>())
        return fmt::format("[tool_result {}] {}", r->name, text_of(r->output));
    return fmt::format("[{}]", to_string(b.kind()));
}

} // namespace

AgentBase::AgentBase(std::string name) : name_(std::move(name)), id_(random_hex_id()), console_(&std::cout)
{
    if (name_.empty())
        throw ValidationError("agent name must be non-empty");
    register_state("name", name_);
}

template <class T>
T AgentBase::run_hooks(HookSite site, HookPosition position, T value)
{
    std::vector<HookEntry> selected;
    {
        std::lock_guard lock(hooks_mutex_);
        for (auto const& h : hooks_)
            if (h.site == site && h.position == position)
                selected.push_back(h);
    }
    for (auto const& h : selected) {
        auto const* fn = std::get_if<Hook<T>>(&h.hook);
        if (!fn || !*fn)
            continue;
        try {
            if (auto replaced = (*fn)(*this, value))
                value = std::move(*replaced);
        } catch (const std::exception& e) {
            spdlog::error("agent {}: {} hook {} failed and was skipped: {}", name_,
                          to_string(site), h.id, e.what());
        } catch (...) {
            spdlog::error("agent {}: {} hook {} failed and was skipped", name_, to_string(site), h.id);
        }
    }
    return value;
}

template ReplyArgs AgentBase::run_hooks(HookSite, HookPosition, ReplyArgs);
template Msg AgentBase::run_hooks(HookSite, HookPosition, Msg);
template std::vector<Msg> AgentBase::run_hooks(HookSite, HookPosition, std::vector<Msg>);
template FormattedPrompt AgentBase::run_hooks(HookSite, HookPosition, FormattedPrompt);
template ChatResponse AgentBase::run_hooks(HookSite, HookPosition, ChatResponse);
template ToolUseBlock AgentBase::run_hooks(HookSite, HookPosition, ToolUseBlock);
template PrintEvent AgentBase::run_hooks(HookSite, HookPosition, PrintEvent);

std::string AgentBase::register_hook(HookSite site, HookPosition position, AnyHook hook)
{
    if (hook.index() != expected_hook_index(site, position))
        throw ValidationError(fmt::format("hook type does not match the {} {} site",
                                          position == HookPosition::pre ? "pre" : "post", to_string(site)));
    std::lock_guard lock(hooks_mutex_);
    auto id = fmt::format("hook-{}", next_hook_++);
    hooks_.push_back({id, site, position, std::move(hook)});
    return id;
}

void AgentBase::remove_hook(const std::string& hook_id)
{
    std::lock_guard lock(hooks_mutex_);
    auto it = std::find_if(hooks_.begin(), hooks_.end(), [&](const HookEntry& h) { return h.id == hook_id; });
    if (it == hooks_.end())
        throw NotFoundError(fmt::format("no hook with id '{}'", hook_id));
    hooks_.erase(it);
}

std::vector<std::string> AgentBase::hook_ids() const
{
    std::lock_guard lock(hooks_mutex_);
    std::vector<std::string> out;
    for (auto const& h : hooks_)
        out.push_back(h.id);
    return out;
}

Msg AgentBase::reply(std::optional<Msg> msg)
{
    std::unique_lock busy(reply_mutex_, std::try_to_lock);
    if (!busy.owns_lock())
        throw StateError(fmt::format("agent '{}' is already replying", name_));

    std::stop_source source;
    {
        std::lock_guard lock(control_mutex_);
        active_stop_ = source;
        pending_payload_.reset();
    }
    struct ClearActive {
        AgentBase& self;
        ~ClearActive()
        {
            std::lock_guard lock(self.control_mutex_);
            self.active_stop_.reset();
        }
    } clear{*this};

    SpanScope span("reply " + name_, SpanKind::agent);
    span.set_attribute("agent", name_);
    auto args = run_hooks(HookSite::reply, HookPosition::pre, ReplyArgs{std::move(msg)});
    std::optional<Msg> out;
    try {
        out = do_reply(args.msg, source.get_token());
    } catch (ReplyInterrupted& interrupted) {
        {
            std::lock_guard lock(control_mutex_);
            if (!interrupted.ctx.user_payload)
                interrupted.ctx.user_payload = pending_payload_;
        }
        if (interrupted.ctx.timestamp.empty())
            interrupted.ctx.timestamp = now_rfc3339();
        span.set_attribute("interrupted", true);
        out = handle_interrupt(interrupted.ctx);
    } catch (const std::exception& e) {
        span.set_error(e.what());
        throw;
    }
    auto result = run_hooks(HookSite::reply, HookPosition::post, std::move(*out));
    span.set_attribute("msg_id", result.id());
    return result;
}

void AgentBase::observe(const std::vector<Msg>& msgs)
{
    auto in = run_hooks(HookSite::observe, HookPosition::pre, msgs);
    do_observe(in);
    run_hooks(HookSite::observe, HookPosition::post, in);
}

bool AgentBase::interrupt(std::optional<Msg> user_payload)
{
    std::lock_guard lock(control_mutex_);
    if (!active_stop_) {
        spdlog::info("agent {} is idle; interrupt ignored", name_);
        return false;
    }
    if (user_payload)
        pending_payload_ = std::move(user_payload);
    active_stop_->request_stop();
    return true;
}

bool AgentBase::replying() const
{
    std::lock_guard lock(control_mutex_);
    return active_stop_.has_value();
}

Msg AgentBase::handle_interrupt(const InterruptContext&)
{
    return Msg(name_, "I noticed that you have interrupted me. What can I do for you?", Role::assistant,
               json{{"interrupt_ack", true}});
}

void AgentBase::print(const Msg& msg, bool last)
{
    auto ev = run_hooks(HookSite::print, HookPosition::pre, PrintEvent{msg, last, false});
    if (!ev.suppress && console_) {
        std::lock_guard lock(print_mutex_);
        auto& out = *console_;
        auto const text = text_of(ev.msg.blocks());
        if (ev.msg.id() != printing_id_ || text.size() < printed_chars_) {
            if (!printing_id_.empty() && printed_chars_ > 0)
                out << '\n';
            printing_id_ = ev.msg.id();
            printed_chars_ = 0;
            out << ev.msg.name() << ": ";
        }
        out << text.substr(printed_chars_);
        printed_chars_ = text.size();
        if (ev.last) {
            for (auto const& b : ev.msg.blocks())
                if (!b.is<TextBlock>())
                    out << (text.empty() ? "" : "\n") << describe_block(b);
            out << '\n';
            printing_id_.clear();
            printed_chars_ = 0;
        }
        out.flush();
    }
    run_hooks(HookSite::print, HookPosition::post, ev);
}

std::string StreamInput::read_line(std::stop_token)
{
    std::string line;
    if (!std::getline(in_, line))
        throw EndOfInputError();
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    return line;
}

void QueueInput::push(std::string line)
{
    std::lock_guard lock(mutex_);
    lines_.push_back(std::move(line));
    cv_.notify_all();
}

void QueueInput::close()
{
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
}

std::string QueueInput::read_line(std::stop_token stop)
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, stop, [&] { return !lines_.empty() || closed_; });
    if (!lines_.empty()) {
        auto line = std::move(lines_.front());
        lines_.pop_front();
        return line;
    }
    if (stop.stop_requested())
        throw ReplyInterrupted{InterruptContext{InterruptPoint::idle, {}, {}, {}, {}, now_rfc3339()}};
    throw EndOfInputError();
}

UserAgent::UserAgent(std::string name, std::shared_ptr<InputSource> input)
    : AgentBase(std::move(name)), input_(std::move(input))
{
}

void UserAgent::set_input(std::shared_ptr<InputSource> input)
{
    std::lock_guard lock(input_mutex_);
    input_ = std::move(input);
}

Msg UserAgent::do_reply(std::optional<Msg>, std::stop_token stop)
{
    std::shared_ptr<InputSource> input;
    {
        std::lock_guard lock(input_mutex_);
        input = input_;
    }
    if (!input)
        throw StateError(fmt::format("user agent '{}' has no input source", name_));
    Msg msg(name_, input->read_line(stop), Role::user);
    print(msg, true);
    return msg;
}

void UserAgent::do_observe(const std::vector<Msg>&) {}

} // namespace agentloom
