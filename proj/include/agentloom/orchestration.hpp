// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/agent.hpp"
#include "agentloom/errors.hpp"
#include "agentloom/tool.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace agentloom {

using AgentPtr = std::shared_ptr<AgentBase>;
using MsgPredicate = std::function<bool(const std::optional<Msg>&)>;

/// An agent inside a pipeline failed; `index` is its position.
class PipelineError : public Error {
public:
    PipelineError(std::size_t index, const std::string& agent, const std::string& what);
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// m0 = msg, m_i = agent_i.reply(m_{i-1}); returns the last. Needs at least one agent.
Msg sequential_pipeline(const std::vector<AgentPtr>& agents, std::optional<Msg> msg = std::nullopt);

/// Runs `then_agents` when the predicate holds, otherwise `else_agents`. An empty branch
/// returns the input unchanged.
std::optional<Msg> branch_pipeline(const MsgPredicate& condition, const std::vector<AgentPtr>& then_agents,
                                   const std::vector<AgentPtr>& else_agents, std::optional<Msg> msg = std::nullopt);

/// Runs the body until `stop` holds for its output or `max_rounds` rounds have run.
Msg loop_pipeline(const std::vector<AgentPtr>& body, const MsgPredicate& stop, int max_rounds,
                  std::optional<Msg> msg = std::nullopt);

/// Reusable sequential pipeline; keeps no state between calls.
class SequentialPipeline {
public:
    explicit SequentialPipeline(std::vector<AgentPtr> agents);
    Msg operator()(std::optional<Msg> msg = std::nullopt) const;
    const std::vector<AgentPtr>& agents() const noexcept { return agents_; }

private:
    std::vector<AgentPtr> agents_;
};

/// Scoped broadcast domain. While alive, every message a participant returns from reply()
/// is observed by every other participant. Wiring is a post-reply hook per participant,
/// removed when the hub closes.
class MsgHub {
public:
    explicit MsgHub(std::vector<AgentPtr> participants, std::optional<Msg> announcement = std::nullopt);
    ~MsgHub();

    MsgHub(const MsgHub&) = delete;
    MsgHub& operator=(const MsgHub&) = delete;

    /// Observed by all current participants.
    void broadcast(const Msg& msg);
    void broadcast(const std::vector<Msg>& msgs);
    void add(const AgentPtr& agent);
    /// Throws NotFoundError for a non-member.
    void remove(const AgentPtr& agent);
    void close();
    bool is_open() const;
    std::vector<AgentPtr> participants() const;

private:
    struct Member {
        AgentPtr agent;
        std::string hook_id;
    };

    void wire(const AgentPtr& agent);
    void deliver(const AgentBase* producer, const std::vector<Msg>& msgs);

    mutable std::mutex mutex_;
    std::mutex broadcast_mutex_;
    std::vector<Member> members_;
    bool open_ = true;
};

/// A tool with one `query` string parameter that forwards the query to `agent.reply` and
/// returns its text. Stopping the tool call interrupts the inner agent.
ToolFunction agent_as_tool(const AgentPtr& agent, std::string name, std::string description);

void register_agent_as_tool(Toolkit& toolkit, const AgentPtr& agent, std::string name,
                            std::string description, std::string group = std::string(kBasicGroup));

} // namespace agentloom
