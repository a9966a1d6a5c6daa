// SPDX-License-Identifier: Apache-2.0
// Acceptance harness: one PASS/FAIL line per criterion. Exit status is nonzero if any fail.
#include "agentloom/agent.hpp"
#include "agentloom/errors.hpp"
#include "agentloom/eval.hpp"
#include "agentloom/formatter.hpp"
#include "agentloom/mcp.hpp"
#include "agentloom/mock_backend.hpp"
#include "agentloom/orchestration.hpp"
#include "agentloom/studio.hpp"

#include "ws_client.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace agentloom;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr auto kStreamingBudget = 10s;
constexpr auto kInterruptBudget = 5s;
constexpr auto kMcpBudget = 5s;
constexpr auto kParallelCeiling = 350ms;
constexpr auto kSequentialFloor = 400ms;
constexpr int kParallelAttempts = 3;
constexpr auto kEvalBudget = 30s;
constexpr double kSpeedupRatio = 0.5;
constexpr double kBootstrapTolerance = 1e-9;

/// Thrown by `check` to fail the current criterion with a reason.
struct Failure {
    std::string reason;
};

void check(bool cond, const std::string& reason)
{
    if (!cond)
        throw Failure{reason};
}

using SteadyClock = std::chrono::steady_clock;

class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        path_ = fs::temp_directory_path() / ("agentloom_accept_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

FormattedPrompt user_prompt(const std::string& text)
{
    std::vector<Msg> h{Msg("user", text, Role::user)};
    return format_chat(h);
}

std::vector<std::string> texts(const std::vector<Msg>& msgs)
{
    std::vector<std::string> out;
    for (auto const& m : msgs)
        out.push_back(m.get_text_content().value_or(""));
    return out;
}

// 1. Streaming

void streaming_contract()
{
    auto const t0 = SteadyClock::now();
    std::mt19937 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        std::size_t len = 1 + rng() % 400;
        while (text.size() < len)
            text += static_cast<char>(' ' + rng() % 95);
        std::vector<std::string> chunks;
        for (std::size_t pos = 0; pos < text.size();) {
            auto n = std::min<std::size_t>(1 + rng() % 32, text.size() - pos);
            chunks.push_back(text.substr(pos, n));
            pos += n;
        }
        auto batch = generate(*mock_backend({ScriptEntry::text(text)}), user_prompt("q"));
        auto b = mock_backend({ScriptEntry::text(text, chunks)});
        auto s = generate_stream(*b, user_prompt("q"));
        std::string prev;
        std::optional<ChatResponse> last;
        std::size_t frames = 0;
        while (auto r = s.next()) {
            auto t = r->text();
            check(t.rfind(prev, 0) == 0, "trial " + std::to_string(trial) + ": chunk is not a cumulative prefix");
            prev = t;
            last = r;
            ++frames;
        }
        check(frames == chunks.size(), "trial " + std::to_string(trial) + ": frame count differs from chunking");
        check(last && last->content == batch.content, "trial " + std::to_string(trial) + ": final frame != batch");
    }
    check(SteadyClock::now() - t0 < kStreamingBudget, "exceeded runtime budget");
}

// 2. Interruption preservation

void interruption_preservation()
{
    auto const t0 = SteadyClock::now();
    Toolkit tk;
    tk.register_tool_function(make_tool("counter", "Counts.", {}, [](const json&, ToolContext& ctx) {
        for (int i = 1; i <= 50; ++i) {
            ctx.emit(std::to_string(i));
            ctx.sleep_for(2ms);
        }
        return Blocks{};
    }));
    for (int k = 0; k <= 10; ++k) {
        std::stop_source stop;
        auto s = tk.call_tool_function(ToolUseBlock{"c", "counter", json::object()}, stop.get_token());
        std::vector<ToolResultChunk> got;
        for (int i = 0; i < k; ++i)
            got.push_back(*s.next());
        stop.request_stop();
        while (auto c = s.next())
            got.push_back(*c);
        auto const ks = "k=" + std::to_string(k);
        check(got.size() == std::size_t(k + 1), ks + ": expected " + std::to_string(k + 1) + " chunks, got " +
                                                    std::to_string(got.size()));
        for (int i = 0; i < k; ++i)
            check(text_of(got[i].blocks) == std::to_string(i + 1) && !got[i].interrupted, ks + ": chunk altered");
        check(got.back().interrupted && got.back().is_last, ks + ": last chunk is not the notice");
        check(text_of(got.back().blocks).find("tool execution was interrupted") != std::string::npos,
              ks + ": notice text missing");
    }
    check(SteadyClock::now() - t0 < kInterruptBudget, "exceeded runtime budget");
}

// 3. MCP session counts

std::size_t count_initialize(const fs::path& log)
{
    std::ifstream in(log);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        auto j = json::parse(line.substr(line.find(' ') + 1));
        n += j.value("method", "") == "initialize";
    }
    return n;
}

void mcp_session_counts()
{
    auto const t0 = SteadyClock::now();
    TempDir dir("mcp");
    auto config = [&](const fs::path& log) {
        mcp::TransportConfig c;
        c.stdio.command = MOCK_MCP_SERVER;
        c.stdio.args = {"--script", std::string(AGENTLOOM_FIXTURES) + "/mcp_tools.json", "--log", log.string()};
        return c;
    };
    auto const stateful_log = dir.path() / "stateful.log", stateless_log = dir.path() / "stateless.log";
    {
        mcp::StatefulClient client(config(stateful_log));
        client.connect();
        for (int i = 0; i < 5; ++i)
            check(text_of(client.call_tool("fetch", {{"url", "u"}}).content) == "<html>page</html>",
                  "stateful call returned the wrong content");
        client.close();
    }
    {
        mcp::StatelessClient client(config(stateless_log));
        for (int i = 0; i < 5; ++i)
            check(text_of(client.call_tool("fetch", {{"url", "u"}}).content) == "<html>page</html>",
                  "stateless call returned the wrong content");
    }
    auto stateful = count_initialize(stateful_log), stateless = count_initialize(stateless_log);
    check(stateful == 1, "stateful client sent " + std::to_string(stateful) + " initialize requests");
    check(stateless == 5, "stateless client sent " + std::to_string(stateless) + " initialize requests");
    check(SteadyClock::now() - t0 < kMcpBudget, "exceeded runtime budget");
}

// 4. Parallel tool speedup

ToolFunction sleep_tool(const std::string& name, std::chrono::milliseconds d)
{
    return make_tool(name, "Sleeps.", {}, [d](const json&, ToolContext& ctx) {
        ctx.sleep_for(d);
        return Blocks{TextBlock{"slept"}};
    });
}

std::shared_ptr<ReActAgent> quiet_agent(std::vector<ScriptEntry> script, std::function<void(ReActAgentConfig&)> tweak = {})
{
    ReActAgentConfig cfg;
    cfg.name = "Friday";
    cfg.sys_prompt = "You are a helpful assistant named Friday.";
    cfg.backend = mock_backend(std::move(script));
    cfg.retry = RetryPolicy::none();
    if (tweak)
        tweak(cfg);
    auto a = std::make_shared<ReActAgent>(std::move(cfg));
    a->set_console(nullptr);
    return a;
}

void parallel_speedup()
{
    std::string last;
    for (int attempt = 0; attempt < kParallelAttempts; ++attempt) {
        auto agent = quiet_agent({ScriptEntry::text("x")});
        agent->toolkit().register_tool_function(sleep_tool("slow_a", 200ms));
        agent->toolkit().register_tool_function(sleep_tool("slow_b", 200ms));
        std::vector<ToolUseBlock> calls{{"a", "slow_a", json::object()}, {"b", "slow_b", json::object()}};
        agent->set_parallel_tool_call(true);
        auto t0 = SteadyClock::now();
        agent->acting_step(calls);
        auto parallel = SteadyClock::now() - t0;
        agent->set_parallel_tool_call(false);
        t0 = SteadyClock::now();
        agent->acting_step(calls);
        auto sequential = SteadyClock::now() - t0;
        if (parallel < kParallelCeiling && sequential > kSequentialFloor)
            return;
        last = "parallel " + std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(parallel).count()) +
               " ms, sequential " +
               std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(sequential).count()) + " ms";
    }
    throw Failure{last};
}

// 5. Group gating

ToolFunction echo_tool(const std::string& name)
{
    return make_tool(name, "Echo.", {{"text"}}, [name](const json& args, ToolContext&) {
        return Blocks{TextBlock{name + ":" + args.value("text", "")}};
    });
}

void group_gating()
{
    std::mt19937 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto const ts = "case " + std::to_string(trial);
        Toolkit tk;
        std::vector<std::string> groups{"basic"};
        int ng = 1 + rng() % 4;
        for (int g = 0; g < ng; ++g) {
            groups.push_back("g" + std::to_string(g));
            tk.create_tool_group(groups.back(), "", rng() % 2);
        }
        std::vector<std::pair<std::string, std::string>> tools;
        int nt = 1 + rng() % 12;
        for (int t = 0; t < nt; ++t) {
            ToolRegistration opts;
            opts.group = groups[rng() % groups.size()];
            tools.emplace_back("t" + std::to_string(t), opts.group);
            tk.register_tool_function(echo_tool(tools.back().first), opts);
        }
        // Random activation pattern applied through either API.
        std::set<std::string> active{"basic"};
        json meta_args = json::object();
        bool via_meta = rng() % 2;
        for (std::size_t g = 1; g < groups.size(); ++g) {
            bool on = rng() % 2;
            if (on)
                active.insert(groups[g]);
            if (via_meta)
                meta_args[groups[g]] = on;
            else
                tk.update_tool_groups({groups[g]}, on);
        }
        if (via_meta) {
            auto s = tk.call_tool_function(ToolUseBlock{"m", std::string(kResetEquippedTools), meta_args});
            auto r = collect_chunks(s);
            check(!r.empty() && !r.back().is_error, ts + ": meta-tool call failed");
        }
        std::vector<std::string> expected, published;
        for (auto const& [name, group] : tools)
            if (active.count(group))
                expected.push_back(name);
        expected.push_back(std::string(kResetEquippedTools));
        for (auto const& s : tk.get_json_schemas())
            published.push_back(s.name);
        check(published == expected, ts + ": published schemas differ from the filter oracle");

        for (auto const& [name, group] : tools) {
            std::vector<ToolResultChunk> r;
            try {
                auto s = tk.call_tool_function(ToolUseBlock{"x", name, {{"text", "hi"}}});
                r = collect_chunks(s);
            } catch (const std::exception& e) {
                throw Failure{ts + ": calling " + name + " threw " + e.what()};
            }
            check(!r.empty(), ts + ": no result for " + name);
            bool const gated = !active.count(group);
            check(r.back().is_error == gated, ts + ": " + name + (gated ? " ran while deactivated" : " failed"));
        }
    }
}

// 6. ReAct trajectory integrity

ToolFunction weather_tool()
{
    return make_tool("get_weather", "Get weather.", {{"location"}}, [](const json& args, ToolContext&) {
        return Blocks{TextBlock{"sunny in " + args.value("location", "?")}};
    });
}

void react_integrity()
{
    std::mt19937 rng(6);
    for (int conv = 0; conv < 50; ++conv) {
        auto const cs = "conversation " + std::to_string(conv);
        int const max_iters = 1 + rng() % 5;
        std::vector<ScriptEntry> script;
        int n = 1 + rng() % 8;
        for (int i = 0; i < n; ++i) {
            ScriptEntry e;
            int calls = rng() % 3;
            if (calls == 0)
                e.blocks.push_back(TextBlock{"thinking " + std::to_string(i)});
            for (int c = 0; c < calls; ++c)
                e.blocks.push_back(ToolUseBlock{"c" + std::to_string(i) + "_" + std::to_string(c),
                                                rng() % 5 ? "get_weather" : "missing_tool", {{"location", "x"}}});
            if (rng() % 4 == 0)
                e.blocks.push_back(ToolUseBlock{"f" + std::to_string(i), "generate_response", {{"response", "fin"}}});
            script.push_back(e);
        }
        for (int i = 0; i < max_iters + 1; ++i)
            script.push_back(ScriptEntry::text("pad"));
        auto backend = mock_backend(script);
        auto agent = quiet_agent(script, [&](ReActAgentConfig& c) {
            c.backend = backend;
            c.max_iters = max_iters;
            c.parallel_tool_call = rng() % 2;
        });
        agent->toolkit().register_tool_function(weather_tool());
        agent->toolkit().create_tool_group("extra", "", false);
        ToolRegistration extra;
        extra.group = "extra";
        agent->toolkit().register_tool_function(echo_tool("extra_echo"), extra);
        if (rng() % 2)
            agent->toolkit().update_tool_groups({"extra"}, true);
        agent->reply(Msg("user", "go", Role::user));

        check(backend->calls() <= std::size_t(max_iters + 1),
              cs + ": " + std::to_string(backend->calls()) + " backend calls with max_iters " + std::to_string(max_iters));
        std::set<std::string> uses, results;
        for (auto const& m : agent->memory().get_all())
            for (auto const& b : m.blocks()) {
                if (auto const* u = b.get_if<ToolUseBlock>())
                    uses.insert(u->id);
                if (auto const* r = b.get_if<ToolResultBlock>())
                    results.insert(r->id);
            }
        for (auto const& id : uses)
            check(results.count(id) == 1, cs + ": tool use " + id + " has no result");

        auto state = agent->state_dict();
        auto clone = quiet_agent({ScriptEntry::text("unused")});
        clone->toolkit().create_tool_group("extra", "", false);
        clone->load_state_dict(json::parse(state.dump()));
        check(clone->memory().get_all() == agent->memory().get_all(), cs + ": restored memory differs");
        check(clone->toolkit().active_groups() == agent->toolkit().active_groups(), cs + ": restored groups differ");
        check(clone->state_dict() == state, cs + ": state round trip is not a fixed point");
    }
}

// 7. MsgHub propagation

class RecordingAgent : public AgentBase {
public:
    explicit RecordingAgent(std::string name) : AgentBase(std::move(name)) { set_console(nullptr); }
    std::vector<Msg> observed;

protected:
    Msg do_reply(std::optional<Msg> msg, std::stop_token) override
    {
        return Msg(name_, (msg ? msg->get_text_content().value_or("") : "") + name_, Role::assistant);
    }
    void do_observe(const std::vector<Msg>& msgs) override { observed.insert(observed.end(), msgs.begin(), msgs.end()); }
};

std::shared_ptr<ReActAgent> scripted(const std::string& name, std::vector<std::string> replies)
{
    std::vector<ScriptEntry> script;
    for (auto& r : replies)
        script.push_back(ScriptEntry::text(r));
    return quiet_agent(std::move(script), [&](ReActAgentConfig& c) {
        c.name = name;
        c.sys_prompt = "You are " + name + ".";
        c.formatter = FormatterKind::multiagent;
    });
}

void group_conversation_with_departure()
{
    auto alice = scripted("Alice", {"Hi, I'm Alice, a friendly teacher.", "Good luck with homework, Bob!"});
    auto bob = scripted("Bob", {"I'm Bob. Whatever."});
    auto charlie = scripted("Charlie", {"Charlie here, a doctor.", "See you, Bob."});
    std::string const greeting = "Now you meet each other with a brief self-introduction.";
    std::string const departure = "I have to start my homework now, see you later!";
    {
        MsgHub hub({alice, bob, charlie}, Msg("system", greeting, Role::system));
        sequential_pipeline({alice, bob, charlie});
        hub.remove(bob);
        hub.broadcast(Msg("bob", departure, Role::assistant));
        alice->reply();
        charlie->reply();
    }
    std::vector<std::string> const intros{greeting, "Hi, I'm Alice, a friendly teacher.", "I'm Bob. Whatever.",
                                          "Charlie here, a doctor."};
    auto full = intros;
    full.insert(full.end(), {departure, "Good luck with homework, Bob!", "See you, Bob."});
    check(texts(alice->memory().get_all()) == full, "group conversation: Alice's memory differs");
    check(texts(charlie->memory().get_all()) == full, "group conversation: Charlie's memory differs");
    check(texts(bob->memory().get_all()) == intros, "group conversation: Bob's memory differs");
}

void hub_propagation()
{
    std::mt19937 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + rng() % 4;
        std::vector<std::shared_ptr<RecordingAgent>> agents;
        std::vector<AgentPtr> ptrs;
        for (int i = 0; i < n; ++i) {
            agents.push_back(std::make_shared<RecordingAgent>("g" + std::to_string(i)));
            ptrs.push_back(agents.back());
        }
        std::map<int, std::vector<std::string>> expected;
        std::set<int> members;
        for (int i = 0; i < n; ++i)
            members.insert(i);
        {
            MsgHub hub(ptrs);
            int replies = 1 + rng() % 10;
            int delete_at = rng() % replies;
            int victim = rng() % n;
            for (int k = 0; k < replies; ++k) {
                if (k == delete_at) {
                    hub.remove(ptrs[victim]);
                    members.erase(victim);
                }
                int speaker = rng() % n;
                auto out = agents[speaker]->reply(Msg("user", std::to_string(k) + ":", Role::user));
                if (members.count(speaker))
                    for (int m : members)
                        if (m != speaker)
                            expected[m].push_back(out.get_text_content().value_or(""));
            }
        }
        // Leaving the hub stops propagation.
        agents[0]->reply(Msg("user", "after:", Role::user));
        for (int i = 0; i < n; ++i)
            check(texts(agents[i]->observed) == expected[i],
                  "trial " + std::to_string(trial) + ": agent " + std::to_string(i) + " observed the wrong set");
    }
    group_conversation_with_departure();
}

// 8. Evaluation resumption and parallel equivalence

eval::Benchmark toy_benchmark(int n)
{
    std::vector<eval::Task> tasks;
    for (int i = 0; i < n; ++i) {
        eval::Task t;
        t.id = "t" + std::to_string(i);
        t.input = i;
        t.ground_truth = i % 3 ? json(i) : json(-1);
        t.metrics = {std::make_shared<eval::ExactMatch>(t.ground_truth)};
        tasks.push_back(std::move(t));
    }
    return eval::Benchmark("toy", std::move(tasks));
}

eval::SolutionOutput echo(const eval::Task& task)
{
    eval::SolutionOutput out;
    out.success = true;
    out.output = task.input;
    out.trajectory = {Msg("user", task.input.dump(), Role::user), Msg("solver", task.input.dump(), Role::assistant)};
    return out;
}

class KillingStorage : public eval::FileStorage {
public:
    KillingStorage(fs::path root, int budget) : FileStorage(std::move(root)), budget_(budget) {}
    void save_solution(const std::string& b, const std::string& t, int r, const eval::SolutionOutput& s) override
    {
        spend();
        FileStorage::save_solution(b, t, r, s);
    }
    void save_evaluation(const std::string& b, const std::string& t, int r, const json& e) override
    {
        spend();
        FileStorage::save_evaluation(b, t, r, e);
    }

private:
    void spend()
    {
        if (budget_.fetch_sub(1) <= 0)
            throw StorageError("killed");
    }
    std::atomic<int> budget_;
};

std::map<std::pair<std::string, int>, std::pair<json, json>> snapshot(const eval::FileStorage& storage)
{
    std::map<std::pair<std::string, int>, std::pair<json, json>> out;
    for (auto const& task : storage.list_tasks("toy"))
        for (int r : storage.list_repeats("toy", task)) {
            if (!storage.has_evaluation("toy", task, r))
                continue;
            auto results = storage.load_evaluation("toy", task, r).at("results");
            for (auto& m : results)
                m.erase("timestamp");
            auto sol = eval::solution_to_json(storage.load_solution("toy", task, r));
            for (auto& m : sol["trajectory"]) {
                m.erase("id");
                m.erase("timestamp");
            }
            out[{task, r}] = {sol, results};
        }
    return out;
}

void eval_resumption()
{
    auto const t0 = SteadyClock::now();
    std::mt19937 rng(8);
    int const repeats = 2;
    auto const units = std::size_t(20 * repeats);
    auto b = toy_benchmark(20);
    eval::SolutionFn fn = [](const eval::Task& t, const eval::PreHook&) { return echo(t); };

    for (int trial = 0; trial < 10; ++trial) {
        auto const ts = "trial " + std::to_string(trial);
        TempDir dir("eval_kill");
        int workers = std::vector<int>{1, 2, 4}[rng() % 3];
        for (int k = 0, kills = 1 + rng() % 3; k < kills; ++k) {
            KillingStorage dying(dir.path(), static_cast<int>(rng() % (2 * units)));
            try {
                eval::run_parallel(b, fn, repeats, workers, dying);
            } catch (const StorageError&) {
            }
        }
        eval::FileStorage storage(dir.path());
        auto s = eval::run_parallel(b, fn, repeats, workers, storage);
        check(s.executed + s.skipped == units, ts + ": units not accounted for");
        std::size_t files = 0;
        for (auto const& e : fs::recursive_directory_iterator(dir.path()))
            files += e.path().filename() == "evaluation.json";
        check(files == units, ts + ": " + std::to_string(files) + " results for " + std::to_string(units) + " units");
        for (auto const& task : b)
            for (int r = 0; r < repeats; ++r)
                check(storage.has_evaluation("toy", task.id, r), ts + ": missing " + task.id);
    }

    TempDir dir("eval_workers");
    eval::FileStorage reference_store(dir.path() / "seq");
    eval::run_sequential(b, fn, repeats, reference_store);
    auto reference = snapshot(reference_store);
    check(reference.size() == units, "sequential reference is incomplete");
    for (int workers : {1, 2, 4}) {
        eval::FileStorage storage(dir.path() / std::to_string(workers));
        eval::ParallelEvaluator(workers).run(b, fn, repeats, storage);
        check(snapshot(storage) == reference, std::to_string(workers) + " workers: results differ");
    }

    auto sleepy = toy_benchmark(8);
    eval::SolutionFn slow = [](const eval::Task& t, const eval::PreHook&) {
        std::this_thread::sleep_for(150ms);
        return echo(t);
    };
    double seq_s = 0, par_s = 0;
    bool fast = false;
    for (int attempt = 0; attempt < 3 && !fast; ++attempt) {
        TempDir sd("eval_sleep");
        eval::FileStorage a(sd.path() / "a"), c(sd.path() / "c");
        seq_s = eval::run_sequential(sleepy, slow, 1, a).elapsed_seconds;
        par_s = eval::run_parallel(sleepy, slow, 1, 4, c).elapsed_seconds;
        fast = par_s < kSpeedupRatio * seq_s;
    }
    check(fast, "4 workers took " + std::to_string(par_s) + " s vs sequential " + std::to_string(seq_s) + " s");
    check(SteadyClock::now() - t0 < kEvalBudget, "exceeded runtime budget");
}

// 9. Bootstrap CI

// Independent percentile bootstrap: draws every index up front, then takes linear-interpolated
// order statistics through nth_element.
std::pair<double, double> oracle_bootstrap(const std::vector<double>& v, int resamples, std::uint64_t seed,
                                           double confidence)
{
    std::mt19937_64 engine(seed);
    std::size_t const n = v.size();
    std::vector<std::size_t> idx(n * static_cast<std::size_t>(resamples));
    for (auto& i : idx) {
        std::uint64_t bits = engine() >> 11;
        long double u = static_cast<long double>(bits) / 9007199254740992.0L;
        i = static_cast<std::size_t>(std::floor(u * static_cast<long double>(n)));
    }
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (int b = 0; b < resamples; ++b) {
        double s = 0;
        for (std::size_t k = 0; k < n; ++k)
            s += v[idx[static_cast<std::size_t>(b) * n + k]];
        means[static_cast<std::size_t>(b)] = s / static_cast<double>(n);
    }
    auto order_stat = [&](std::size_t k) {
        auto copy = means;
        std::nth_element(copy.begin(), copy.begin() + static_cast<long>(k), copy.end());
        return copy[k];
    };
    auto q = [&](double p) {
        double pos = p * static_cast<double>(resamples - 1);
        auto j = static_cast<std::size_t>(pos);
        double frac = pos - static_cast<double>(j);
        double lo = order_stat(j);
        double hi = j + 1 < means.size() ? order_stat(j + 1) : lo;
        return lo + frac * (hi - lo);
    };
    double alpha = 1 - confidence;
    return {q(alpha / 2), q(1 - alpha / 2)};
}

void bootstrap_ci()
{
    std::mt19937_64 gen(9);
    for (int v = 0; v < 10; ++v) {
        std::size_t n = 3 + gen() % 80;
        std::vector<double> values(n);
        std::uniform_real_distribution<double> dist(0, 1);
        for (auto& x : values)
            x = v % 2 ? double(gen() % 2) : dist(gen);
        eval::BootstrapOptions opts;
        opts.seed = gen();
        check(opts.resamples == 1000, "default resample count is not 1000");
        auto ci = eval::bootstrap_mean_ci(values, opts);
        auto [lo, hi] = oracle_bootstrap(values, opts.resamples, opts.seed, opts.confidence);
        check(std::abs(ci.low - lo) <= kBootstrapTolerance && std::abs(ci.high - hi) <= kBootstrapTolerance,
              "vector " + std::to_string(v) + ": interval differs from the oracle");
        auto again = eval::bootstrap_mean_ci(values, opts);
        check(again.low == ci.low && again.high == ci.high, "vector " + std::to_string(v) + ": not reproducible");
    }
}

// 10. Studio relay loop

void studio_relay()
{
    using testing_ws::WsClient;
    auto hub = std::make_shared<studio::StudioHub>();
    studio::StudioServer server(hub, {});
    server.start();
    auto conn = studio::studio_init(server.url(), "relay");
    auto deadline = SteadyClock::now() + 5s;
    while (!conn->connected() && SteadyClock::now() < deadline)
        std::this_thread::sleep_for(5ms);
    check(conn->connected(), "app did not connect");
    auto const run_id = conn->run_id();
    WsClient ui_a("127.0.0.1", server.port(), "/ws/ui/" + run_id);
    WsClient ui_b("127.0.0.1", server.port(), "/ws/ui/" + run_id);

    auto e = ScriptEntry::text("one two three four five six", {"one", " two", " three", " four", " five", " six"});
    e.chunk_delay = 150ms;
    auto agent = quiet_agent({e});
    conn->attach(agent);

    auto reply = std::async(std::launch::async, [&] { return agent->reply(Msg("user", "count", Role::user)); });
    std::vector<json> a_frames;
    bool saw_chunk = false;
    while (auto f = ui_a.next(5s)) {
        a_frames.push_back(*f);
        if ((*f)["type"] == "message" && !(*f)["payload"]["last"].get<bool>()) {
            saw_chunk = true;
            break;
        }
    }
    check(saw_chunk, "no streamed chunk reached the UI");
    ui_a.send(json{{"type", "interrupt"}, {"payload", {{"text", "wait"}}}});
    check(reply.wait_for(10s) == std::future_status::ready, "reply did not finish after the interrupt");
    auto ack = reply.get();

    bool annotated = false;
    for (auto const& m : agent->memory().get_all())
        annotated = annotated || (m.metadata() && m.metadata()->value("annotation", "") == kInterruptAnnotation);
    check(annotated, "memory has no interruption annotation");

    check(conn->flush(5s), "app events were not flushed");
    deadline = SteadyClock::now() + 5s;
    auto acked = [&] {
        for (auto const& ev : hub->events(run_id))
            if (ev.type == studio::EventType::message && ev.payload["msg"]["id"] == ack.id())
                return true;
        return false;
    };
    while (!acked() && SteadyClock::now() < deadline)
        std::this_thread::sleep_for(5ms);
    check(acked(), "acknowledgement never reached the hub");

    auto const last = hub->events(run_id).back().seq;
    auto drain = [last](WsClient& c) {
        std::vector<json> out;
        while (auto f = c.next(5s)) {
            out.push_back(*f);
            if (f->value("seq", -1) == last)
                break;
        }
        return out;
    };
    auto rest = drain(ui_a);
    a_frames.insert(a_frames.end(), rest.begin(), rest.end());
    auto b_frames = drain(ui_b);
    check(!b_frames.empty() && b_frames.back()["seq"] == last, "subscriber B missed events");
    check(a_frames == b_frames, "subscribers saw different event sequences");
    for (std::size_t i = 0; i < b_frames.size(); ++i)
        check(b_frames[i]["seq"] == std::int64_t(i), "sequence numbers are not contiguous");
    conn->close();
    server.stop();
}

struct Criterion {
    const char* name;
    void (*fn)();
};

} // namespace

int main()
{
    spdlog::set_level(spdlog::level::off);
    Criterion const criteria[] = {
        {"streaming-contract", streaming_contract},
        {"interruption-preservation", interruption_preservation},
        {"mcp-session-count", mcp_session_counts},
        {"parallel-tool-speedup", parallel_speedup},
        {"group-gating", group_gating},
        {"react-trajectory-integrity", react_integrity},
        {"msghub-propagation", hub_propagation},
        {"eval-resumption-and-parallel-equivalence", eval_resumption},
        {"bootstrap-ci", bootstrap_ci},
        {"studio-relay-loop", studio_relay},
    };
    int failed = 0;
    for (auto const& c : criteria) {
        auto const t0 = SteadyClock::now();
        std::string error;
        try {
            c.fn();
        } catch (const Failure& f) {
            error = f.reason;
        } catch (const std::exception& e) {
            error = std::string("exception: ") + e.what();
        }
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - t0).count();
        if (error.empty())
            std::cout << "PASS " << c.name << " (" << ms << " ms)\n";
        else {
            ++failed;
            std::cout << "FAIL " << c.name << " (" << ms << " ms): " << error << "\n";
        }
        std::cout.flush();
    }
    return failed == 0 ? 0 : 1;
}
