// SPDX-License-Identifier: Apache-2.0
#include "agentloom/agent.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/tracing.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <future>

namespace agentloom {

namespace {

constexpr std::string_view kSummaryHint =
    "You have failed to generate a response within the maximum number of iterations. "
    "Now respond directly by summarizing the current situation and your best answer.";

Blocks printable(const Blocks& content, std::string_view finish)
{
    Blocks out;
    for (auto const& b : content) {
        if (auto const* u = b.get_if<ToolUseBlock>(); u && u->name == finish)
            continue;
        out.push_back(b);
    }
    return out;
}

Blocks text_and_thinking(const Blocks& content)
{
    Blocks out;
    for (auto const& b : content)
        if (b.is<TextBlock>() || b.is<ThinkingBlock>())
            out.push_back(b);
    return out;
}

std::vector<std::string> string_list(const json& j, const char* key)
{
    if (!j.contains(key) || !j.at(key).is_array())
        throw ValidationError(fmt::format("'{}' must be a list of strings", key));
    return j.at(key).get<std::vector<std::string>>();
}

} // namespace

ReActAgent::ReActAgent(ReActAgentConfig config) : AgentBase(config.name), config_(std::move(config))
{
    if (config_.max_iters < 1)
        throw ValidationError("max_iters must be at least 1");
    if (!config_.backend)
        throw ValidationError("ReAct agent needs a backend");
    if (!config_.toolkit)
        config_.toolkit = std::make_shared<Toolkit>();
    if (!config_.memory)
        config_.memory = std::make_shared<InMemoryMemory>();
    register_builtin_tools();

    register_state(
        "schema_version", [this] { return json(schema_version_); },
        [](const json& j) {
            if (j != 1)
                throw StateError(fmt::format("unsupported agent state schema_version {}", j.dump()));
        });
    register_state("sys_prompt", config_.sys_prompt);
    register_module("memory", *config_.memory);
    register_module("toolkit", *config_.toolkit);
}

void ReActAgent::register_builtin_tools()
{
    auto& tk = *config_.toolkit;
    if (!tk.has_tool(config_.finish_function_name))
        tk.register_tool_function(make_tool(
            config_.finish_function_name,
            "Generate the final response to the user. Call this when the task is done.",
            {{"response", "string", "The response to the user.", std::nullopt}},
            [](const json&, ToolContext&) { return Blocks{TextBlock{"Successfully generated response."}}; }));

    if (!config_.long_term || !agent_enabled(config_.long_term_mode))
        return;
    auto store = config_.long_term;
    if (!tk.has_tool("record_to_memory"))
        tk.register_tool_function(make_tool(
            "record_to_memory", "Record important information to long-term memory for later use.",
            {{"thought", "string", "The information to remember.", std::nullopt},
             {"keywords", "array", "Keywords used to retrieve the information later.", std::nullopt}},
            [store](const json& args, ToolContext&) {
                auto text = store->record_to_memory(args.value("thought", ""), string_list(args, "keywords"));
                return Blocks{TextBlock{std::move(text)}};
            }));
    if (!tk.has_tool("retrieve_from_memory"))
        tk.register_tool_function(make_tool(
            "retrieve_from_memory", "Retrieve information from long-term memory by keywords.",
            {{"keywords", "array", "Keywords to search for.", std::nullopt}},
            [store](const json& args, ToolContext&) {
                auto found = store->retrieve_from_memory(string_list(args, "keywords"));
                if (found.empty())
                    return Blocks{TextBlock{"No relevant memory found."}};
                return Blocks{TextBlock{fmt::format("{}", fmt::join(found, "\n"))}};
            }));
}

std::vector<Msg> ReActAgent::prompt_messages(std::optional<std::string> hint) const
{
    std::vector<Msg> msgs;
    auto sys = config_.sys_prompt;
    auto notes = config_.toolkit->active_group_notes();
    if (!notes.empty())
        sys += (sys.empty() ? "" : "\n\n") + notes;
    if (!sys.empty())
        msgs.emplace_back("system", sys, Role::system);
    for (auto& m : config_.memory->get_all())
        msgs.push_back(std::move(m));
    if (hint)
        msgs.emplace_back("system", *hint, Role::system);
    return msgs;
}

FormattedPrompt ReActAgent::format(const std::vector<Msg>& msgs) const
{
    auto caps = config_.backend->capabilities();
    if (config_.formatter == FormatterKind::multiagent)
        return format_multiagent(msgs, caps);
    return format_chat(msgs, caps);
}

ChatResponse ReActAgent::call_model(const FormattedPrompt& prompt, GenerateOptions opts, const Msg& shell,
                                    std::stop_token stop)
{
    ScopedSpanAttributes link({{"msg_id", shell.id()}, {"agent", name_}});
    bool const stream = config_.stream.value_or(config_.backend->capabilities().streaming);
    if (!stream)
        return generate(*config_.backend, prompt, std::move(opts), config_.retry);

    auto chunks = generate_stream(*config_.backend, prompt, std::move(opts), config_.retry);
    std::optional<ChatResponse> last;
    while (true) {
        if (stop.stop_requested()) {
            chunks.cancel();
            InterruptContext ctx;
            ctx.at = InterruptPoint::reasoning;
            ctx.partial = last;
            ctx.timestamp = now_rfc3339();
            auto partial = last ? text_and_thinking(last->content) : Blocks{};
            if (!partial.empty()) {
                auto kept = shell.with_content(partial).with_metadata(
                    json{{"interrupted", true}, {"annotation", kInterruptAnnotation}});
                config_.memory->add(kept);
                print(kept, true);
            }
            throw ReplyInterrupted{std::move(ctx)};
        }
        auto chunk = chunks.next();
        if (!chunk)
            break;
        last = std::move(chunk);
        print(shell.with_content(text_and_thinking(last->content)), false);
    }
    if (!last)
        throw TransportError("model stream ended without any output");
    return *last;
}

ChatResponse ReActAgent::reasoning_step(std::stop_token stop)
{
    auto prompt = run_hooks(HookSite::reasoning, HookPosition::pre, format(prompt_messages()));
    GenerateOptions opts;
    opts.tools = config_.toolkit->get_json_schemas();
    opts.reasoning = config_.reasoning;
    Msg shell(name_, Blocks{}, Role::assistant);
    auto response = call_model(prompt, std::move(opts), shell, stop);
    response = run_hooks(HookSite::reasoning, HookPosition::post, std::move(response));

    auto content = printable(response.content, config_.finish_function_name);
    if (!content.empty()) {
        auto msg = shell.with_content(std::move(content));
        config_.memory->add(msg);
        print(msg, true);
    }
    return response;
}

Msg ReActAgent::run_tool(const ToolUseBlock& call, std::stop_token stop, bool& interrupted)
{
    auto c = run_hooks(HookSite::acting, HookPosition::pre, call);
    SpanScope span("tool " + c.name, SpanKind::tool);
    span.set_attribute("tool_call_id", c.id);
    span.set_attribute("input", c.input);
    auto results = config_.toolkit->call_tool_function(c, stop);
    auto chunks = collect_chunks(results);
    interrupted = stop.stop_requested();
    for (auto const& ch : chunks)
        if (ch.is_error)
            span.set_error(text_of(ch.blocks));
    Msg result("system", Blocks{ToolResultBlock{c.id, c.name, chunks_to_blocks(chunks)}}, Role::system);
    span.set_attribute("msg_id", result.id());
    return run_hooks(HookSite::acting, HookPosition::post, std::move(result));
}

std::vector<Msg> ReActAgent::acting_step(const std::vector<ToolUseBlock>& tool_uses, std::stop_token stop)
{
    std::vector<std::optional<Msg>> results(tool_uses.size());
    if (config_.parallel_tool_call && tool_uses.size() > 1) {
        auto ctx = current_trace_context();
        std::vector<std::future<Msg>> pending;
        for (auto const& call : tool_uses)
            pending.push_back(std::async(std::launch::async, [this, call, stop, ctx] {
                ScopedTraceContext scope(ctx);
                bool interrupted = false;
                return run_tool(call, stop, interrupted);
            }));
        for (std::size_t i = 0; i < pending.size(); ++i)
            results[i] = pending[i].get();
    } else {
        for (std::size_t i = 0; i < tool_uses.size(); ++i) {
            auto const& call = tool_uses[i];
            if (stop.stop_requested()) {
                // Never started; it still gets a result so the trajectory stays complete.
                results[i] = Msg("system",
                                 Blocks{ToolResultBlock{call.id, call.name, {TextBlock{std::string(kInterruptedNotice)}}}},
                                 Role::system);
                continue;
            }
            bool interrupted = false;
            results[i] = run_tool(call, stop, interrupted);
        }
    }
    std::vector<Msg> out;
    for (auto& r : results) {
        config_.memory->add(*r);
        print(*r, true);
        out.push_back(std::move(*r));
    }
    return out;
}

Msg ReActAgent::summarize(std::stop_token stop)
{
    auto prompt = run_hooks(HookSite::reasoning, HookPosition::pre,
                            format(prompt_messages(std::string(kSummaryHint))));
    Msg shell(name_, Blocks{}, Role::assistant);
    auto response = call_model(prompt, GenerateOptions{}, shell, stop);
    response = run_hooks(HookSite::reasoning, HookPosition::post, std::move(response));
    auto content = text_and_thinking(response.content);
    if (text_of(content).empty())
        content.push_back(TextBlock{"I could not finish the task within the allowed number of steps."});
    return shell.with_content(std::move(content));
}

Msg ReActAgent::do_reply(std::optional<Msg> msg, std::stop_token stop)
{
    if (msg)
        config_.memory->add(*msg);

    bool const use_static = config_.long_term && static_enabled(config_.long_term_mode);
    if (use_static && msg) {
        auto found = config_.long_term->retrieve({*msg}, 5);
        if (!found.empty()) {
            std::string text = "<long_term_memory>\n";
            for (auto const& f : found)
                text += "- " + f + "\n";
            text += "</long_term_memory>";
            config_.memory->add(Msg("long_term_memory", text, Role::system));
        }
    }

    auto finish = [&](Msg final_msg) {
        config_.memory->add(final_msg);
        if (use_static) {
            std::vector<Msg> turn;
            if (msg)
                turn.push_back(*msg);
            turn.push_back(final_msg);
            try {
                config_.long_term->record(turn);
            } catch (const std::exception& e) {
                spdlog::error("agent {}: long-term record failed: {}", name_, e.what());
            }
        }
        return final_msg;
    };

    for (int iter = 0; iter < config_.max_iters; ++iter) {
        if (stop.stop_requested())
            throw ReplyInterrupted{InterruptContext{InterruptPoint::reasoning, {}, {}, {}, {}, now_rfc3339()}};

        auto response = reasoning_step(stop);
        auto uses = response.tool_uses();
        std::optional<ToolUseBlock> finish_call;
        std::vector<ToolUseBlock> calls;
        for (auto& u : uses) {
            if (u.name == config_.finish_function_name && !finish_call)
                finish_call = std::move(u);
            else
                calls.push_back(std::move(u));
        }

        if (uses.empty()) {
            // No tool call at all: the reply itself is the answer.
            auto content = text_and_thinking(response.content);
            auto memory = config_.memory->get_all();
            if (!memory.empty() && memory.back().role() == Role::assistant && memory.back().name() == name_ &&
                memory.back().blocks() == content)
                return finish(memory.back());
            return finish(Msg(name_, std::move(content), Role::assistant));
        }

        if (!calls.empty()) {
            auto results = acting_step(calls, stop);
            if (stop.stop_requested()) {
                InterruptContext ctx;
                ctx.at = InterruptPoint::acting;
                for (auto const& c : calls)
                    ctx.tool_ids.push_back(c.id);
                ctx.preserved = std::move(results);
                ctx.timestamp = now_rfc3339();
                throw ReplyInterrupted{std::move(ctx)};
            }
        }

        if (finish_call) {
            auto it = finish_call->input.find("response");
            if (it != finish_call->input.end() && it->is_string()) {
                Msg final_msg(name_, it->get<std::string>(), Role::assistant);
                print(final_msg, true);
                return finish(std::move(final_msg));
            }
            // A malformed finish call is reported back like any failed tool call.
            Msg error("system",
                      Blocks{ToolResultBlock{finish_call->id, finish_call->name,
                                             {TextBlock{"Error: missing required string argument 'response'"}}}},
                      Role::system);
            config_.memory->add(error);
            print(error, true);
        }
    }

    if (stop.stop_requested())
        throw ReplyInterrupted{InterruptContext{InterruptPoint::reasoning, {}, {}, {}, {}, now_rfc3339()}};
    auto final_msg = summarize(stop);
    print(final_msg, true);
    return finish(std::move(final_msg));
}

void ReActAgent::do_observe(const std::vector<Msg>& msgs)
{
    config_.memory->add(msgs);
}

Msg ReActAgent::handle_interrupt(const InterruptContext& ctx)
{
    std::string where = std::string(to_string(ctx.at));
    if (!ctx.tool_ids.empty())
        where += fmt::format(" (tool calls {})", fmt::join(ctx.tool_ids, ", "));
    Msg note("system",
             fmt::format("<system-info>The previous reply was {} during {}. Any partial output above is "
                         "preserved as it was when the interruption happened.</system-info>",
                         kInterruptAnnotation, where),
             Role::system, json{{"interrupted", true}, {"at", to_string(ctx.at)}});
    config_.memory->add(note);
    if (ctx.user_payload)
        config_.memory->add(*ctx.user_payload);
    Msg ack(name_, config_.interrupt_ack, Role::assistant, json{{"interrupt_ack", true}});
    config_.memory->add(ack);
    print(ack, true);
    return ack;
}

} // namespace agentloom
