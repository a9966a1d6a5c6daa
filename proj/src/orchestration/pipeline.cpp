// SPDX-License-Identifier: Apache-2.0
#include "agentloom/orchestration.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace agentloom {

PipelineError::PipelineError(std::size_t index, const std::string& agent, const std::string& what)
    : Error(fmt::format("pipeline agent #{} ({}) failed: {}", index, agent, what)), index_(index)
{
}

namespace {

std::optional<Msg> run_chain(const std::vector<AgentPtr>& agents, std::optional<Msg> msg)
{
    for (std::size_t i = 0; i < agents.size(); ++i) {
        try {
            msg = agents[i]->reply(std::move(msg));
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError(i, agents[i]->name(), e.what());
        }
    }
    return msg;
}

} // namespace

Msg sequential_pipeline(const std::vector<AgentPtr>& agents, std::optional<Msg> msg)
{
    if (agents.empty())
        throw ValidationError("a pipeline needs at least one agent");
    return *run_chain(agents, std::move(msg));
}

std::optional<Msg> branch_pipeline(const MsgPredicate& condition, const std::vector<AgentPtr>& then_agents,
                                   const std::vector<AgentPtr>& else_agents, std::optional<Msg> msg)
{
    if (!condition)
        throw ValidationError("branch condition must be set");
    auto const& chosen = condition(msg) ? then_agents : else_agents;
    return run_chain(chosen, std::move(msg));
}

Msg loop_pipeline(const std::vector<AgentPtr>& body, const MsgPredicate& stop, int max_rounds,
                  std::optional<Msg> msg)
{
    if (max_rounds < 1)
        throw ValidationError("max_rounds must be at least 1");
    if (body.empty())
        throw ValidationError("a loop body needs at least one agent");
    for (int round = 0; round < max_rounds; ++round) {
        msg = run_chain(body, std::move(msg));
        if (stop && stop(msg))
            break;
    }
    return *msg;
}

SequentialPipeline::SequentialPipeline(std::vector<AgentPtr> agents) : agents_(std::move(agents))
{
    if (agents_.empty())
        throw ValidationError("a pipeline needs at least one agent");
}

Msg SequentialPipeline::operator()(std::optional<Msg> msg) const
{
    return sequential_pipeline(agents_, std::move(msg));
}

MsgHub::MsgHub(std::vector<AgentPtr> participants, std::optional<Msg> announcement)
{
    std::set<const AgentBase*> seen;
    for (auto const& a : participants) {
        if (!a)
            throw ValidationError("hub participant must not be null");
        if (!seen.insert(a.get()).second)
            throw ValidationError(fmt::format("agent '{}' joined the hub twice", a->name()));
    }
    for (auto const& a : participants)
        wire(a);
    if (announcement)
        broadcast(*announcement);
}

MsgHub::~MsgHub()
{
    close();
}

void MsgHub::wire(const AgentPtr& agent)
{
    auto id = agent->register_hook(HookSite::reply, HookPosition::post,
                                   Hook<Msg>([this](AgentBase& self, const Msg& out) -> std::optional<Msg> {
                                       deliver(&self, {out});
                                       return std::nullopt;
                                   }));
    std::lock_guard lock(mutex_);
    members_.push_back({agent, std::move(id)});
}

void MsgHub::deliver(const AgentBase* producer, const std::vector<Msg>& msgs)
{
    std::lock_guard serial(broadcast_mutex_);
    for (auto const& a : participants())
        if (a.get() != producer)
            a->observe(msgs);
}

void MsgHub::broadcast(const Msg& msg)
{
    broadcast(std::vector<Msg>{msg});
}

void MsgHub::broadcast(const std::vector<Msg>& msgs)
{
    if (!is_open())
        throw StateError("hub is closed");
    deliver(nullptr, msgs);
}

void MsgHub::add(const AgentPtr& agent)
{
    if (!agent)
        throw ValidationError("hub participant must not be null");
    {
        std::lock_guard lock(mutex_);
        if (!open_)
            throw StateError("hub is closed");
        if (std::any_of(members_.begin(), members_.end(), [&](const Member& m) { return m.agent == agent; }))
            throw ValidationError(fmt::format("agent '{}' is already in the hub", agent->name()));
    }
    wire(agent);
}

void MsgHub::remove(const AgentPtr& agent)
{
    Member gone;
    {
        std::lock_guard lock(mutex_);
        auto it = std::find_if(members_.begin(), members_.end(), [&](const Member& m) { return m.agent == agent; });
        if (it == members_.end())
            throw NotFoundError(fmt::format("agent '{}' is not in the hub", agent ? agent->name() : "<null>"));
        gone = std::move(*it);
        members_.erase(it);
    }
    gone.agent->remove_hook(gone.hook_id);
}

void MsgHub::close()
{
    std::vector<Member> members;
    {
        std::lock_guard lock(mutex_);
        if (!open_)
            return;
        open_ = false;
        members = std::move(members_);
        members_.clear();
    }
    for (auto const& m : members) {
        try {
            m.agent->remove_hook(m.hook_id);
        } catch (const std::exception& e) {
            spdlog::warn("hub exit: {}", e.what());
        }
    }
}

bool MsgHub::is_open() const
{
    std::lock_guard lock(mutex_);
    return open_;
}

std::vector<AgentPtr> MsgHub::participants() const
{
    std::lock_guard lock(mutex_);
    std::vector<AgentPtr> out;
    for (auto const& m : members_)
        out.push_back(m.agent);
    return out;
}

ToolFunction agent_as_tool(const AgentPtr& agent, std::string name, std::string description)
{
    if (!agent)
        throw ValidationError("agent_as_tool needs an agent");
    std::weak_ptr<AgentBase> weak = agent;
    return make_tool(std::move(name), std::move(description),
                     {{"query", "string", "The question or task for the agent.", std::nullopt}},
                     [weak](const json& args, ToolContext& ctx) {
                         auto inner = weak.lock();
                         if (!inner)
                             throw StateError("the wrapped agent no longer exists");
                         std::stop_callback forward(ctx.stop_token(), [inner] { inner->interrupt(); });
                         auto out = inner->reply(Msg("user", args.value("query", ""), Role::user));
                         return Blocks{TextBlock{out.get_text_content().value_or("")}};
                     });
}

void register_agent_as_tool(Toolkit& toolkit, const AgentPtr& agent, std::string name, std::string description,
                            std::string group)
{
    ToolRegistration opts;
    opts.group = std::move(group);
    toolkit.register_tool_function(agent_as_tool(agent, std::move(name), std::move(description)), std::move(opts));
}

} // namespace agentloom
