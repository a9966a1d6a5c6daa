// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/formatter.hpp"
#include "agentloom/memory.hpp"
#include "agentloom/message.hpp"
#include "agentloom/model.hpp"
#include "agentloom/state.hpp"
#include "agentloom/tool.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <variant>
#include <vector>

namespace agentloom {

class AgentBase;

enum class HookSite { reply, observe, reasoning, acting, print };
enum class HookPosition { pre, post };

std::string_view to_string(HookSite site);

struct ReplyArgs {
    std::optional<Msg> msg;
};

/// What `print` is about to show. Streaming chunks share one message id; `last` marks the
/// final one. A pre-print hook may set `suppress` to keep it off the console.
struct PrintEvent {
    Msg msg;
    bool last = true;
    bool suppress = false;
};

/// Returning a value substitutes the site's data; returning nothing leaves it unchanged.
template <class T>
using Hook = std::function<std::optional<T>(AgentBase&, const T&)>;

/// Expected hook type per (site, position):
///   reply: pre ReplyArgs, post Msg          observe: vector<Msg>
///   reasoning: pre FormattedPrompt, post ChatResponse
///   acting: pre ToolUseBlock, post Msg      print: PrintEvent
using AnyHook = std::variant<Hook<ReplyArgs>, Hook<Msg>, Hook<std::vector<Msg>>, Hook<FormattedPrompt>,
                             Hook<ChatResponse>, Hook<ToolUseBlock>, Hook<PrintEvent>>;

enum class InterruptPoint { reasoning, acting, idle };

std::string_view to_string(InterruptPoint at);

struct InterruptContext {
    InterruptPoint at = InterruptPoint::idle;
    std::vector<std::string> tool_ids;
    std::optional<ChatResponse> partial;
    /// Tool-result messages already written, with preserved chunks and notices.
    std::vector<Msg> preserved;
    std::optional<Msg> user_payload;
    std::string timestamp;
};

/// Thrown inside a reply at a delivery point; caught by AgentBase::reply.
struct ReplyInterrupted {
    InterruptContext ctx;
};

class AgentBase : public StateModule {
public:
    explicit AgentBase(std::string name);
    ~AgentBase() override = default;

    const std::string& name() const noexcept { return name_; }
    const std::string& id() const noexcept { return id_; }

    /// Throws StateError when a reply is already in flight on this agent.
    Msg reply(std::optional<Msg> msg = std::nullopt);
    void observe(const std::vector<Msg>& msgs);
    void observe(const Msg& msg) { observe(std::vector<Msg>{msg}); }

    /// Safe from any thread. Outside a reply it only logs a notice and returns false.
    bool interrupt(std::optional<Msg> user_payload = std::nullopt);
    bool replying() const;

    /// Runs print hooks, then writes to the console unless suppressed or disabled.
    void print(const Msg& msg, bool last = true);
    void set_console(std::ostream* out) { console_ = out; }

    /// Throws ValidationError when the hook type does not fit the site and position.
    std::string register_hook(HookSite site, HookPosition position, AnyHook hook);
    /// Throws NotFoundError for an unknown id.
    void remove_hook(const std::string& hook_id);
    std::vector<std::string> hook_ids() const;

protected:
    virtual Msg do_reply(std::optional<Msg> msg, std::stop_token stop) = 0;
    virtual void do_observe(const std::vector<Msg>& msgs) = 0;
    /// Default: a fixed acknowledgement.
    virtual Msg handle_interrupt(const InterruptContext& ctx);

    template <class T>
    T run_hooks(HookSite site, HookPosition position, T value);

    std::string name_;

private:
    struct HookEntry {
        std::string id;
        HookSite site;
        HookPosition position;
        AnyHook hook;
    };

    std::string id_;
    std::mutex reply_mutex_;
    mutable std::mutex control_mutex_;
    std::optional<std::stop_source> active_stop_;
    std::optional<Msg> pending_payload_;

    mutable std::mutex hooks_mutex_;
    std::vector<HookEntry> hooks_;
    std::size_t next_hook_ = 0;

    std::ostream* console_;
    std::mutex print_mutex_;
    std::string printing_id_;
    std::size_t printed_chars_ = 0;
};

enum class FormatterKind { chat, multiagent };

struct ReActAgentConfig {
    std::string name;
    std::string sys_prompt;
    std::shared_ptr<ChatBackend> backend;
    FormatterKind formatter = FormatterKind::chat;
    std::shared_ptr<Toolkit> toolkit;
    std::shared_ptr<MemoryBase> memory;
    std::shared_ptr<LongTermMemoryBase> long_term;
    LongTermMode long_term_mode = LongTermMode::both;
    int max_iters = 10;
    bool parallel_tool_call = false;
    std::string finish_function_name = "generate_response";
    std::string interrupt_ack = "I noticed that you have interrupted me. What can I do for you?";
    std::optional<ReasoningSetting> reasoning;
    RetryPolicy retry;
    /// Defaults to the backend's streaming capability.
    std::optional<bool> stream;
};

inline constexpr std::string_view kInterruptAnnotation = "interrupted by user";

class ReActAgent : public AgentBase {
public:
    explicit ReActAgent(ReActAgentConfig config);

    MemoryBase& memory() { return *config_.memory; }
    Toolkit& toolkit() { return *config_.toolkit; }
    const ReActAgentConfig& config() const noexcept { return config_; }
    void set_parallel_tool_call(bool on) { config_.parallel_tool_call = on; }

    /// One model call over system prompt + memory with the active tool schemas.
    ChatResponse reasoning_step(std::stop_token stop = {});
    /// Runs the calls, appends one tool-result message per call (issue order) and returns them.
    std::vector<Msg> acting_step(const std::vector<ToolUseBlock>& tool_uses, std::stop_token stop = {});

protected:
    Msg do_reply(std::optional<Msg> msg, std::stop_token stop) override;
    void do_observe(const std::vector<Msg>& msgs) override;
    /// Records the interruption in memory (annotation, payload, acknowledgement).
    Msg handle_interrupt(const InterruptContext& ctx) override;

    std::vector<Msg> prompt_messages(std::optional<std::string> hint = std::nullopt) const;
    FormattedPrompt format(const std::vector<Msg>& msgs) const;

private:
    ChatResponse call_model(const FormattedPrompt& prompt, GenerateOptions opts, const Msg& shell,
                            std::stop_token stop);
    Msg run_tool(const ToolUseBlock& call, std::stop_token stop, bool& interrupted);
    void register_builtin_tools();
    Msg summarize(std::stop_token stop);

    ReActAgentConfig config_;
    int schema_version_ = 1;
};

/// Source of user lines. `read_line` blocks; it throws EndOfInputError once closed and
/// ReplyInterrupted when `stop` fires while waiting.
class InputSource {
public:
    virtual ~InputSource() = default;
    virtual std::string read_line(std::stop_token stop) = 0;
};

class StreamInput : public InputSource {
public:
    explicit StreamInput(std::istream& in) : in_(in) {}
    std::string read_line(std::stop_token stop) override;

private:
    std::istream& in_;
};

/// Thread-safe queue fed from elsewhere (for instance the studio relay).
class QueueInput : public InputSource {
public:
    void push(std::string line);
    void close();
    std::string read_line(std::stop_token stop) override;

private:
    std::mutex mutex_;
    std::condition_variable_any cv_;
    std::deque<std::string> lines_;
    bool closed_ = false;
};

class UserAgent : public AgentBase {
public:
    UserAgent(std::string name, std::shared_ptr<InputSource> input);

    void set_input(std::shared_ptr<InputSource> input);

protected:
    Msg do_reply(std::optional<Msg> msg, std::stop_token stop) override;
    void do_observe(const std::vector<Msg>& msgs) override;

private:
    std::mutex input_mutex_;
    std::shared_ptr<InputSource> input_;
};

} // namespace agentloom
