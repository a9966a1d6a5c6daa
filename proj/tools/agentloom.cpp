// SPDX-License-Identifier: Apache-2.0
// agentloom command line: chat, hub, eval and studio.
#include "agentloom/agent.hpp"
#include "agentloom/config.hpp"
#include "agentloom/eval.hpp"
#include "agentloom/mcp.hpp"
#include "agentloom/mock_backend.hpp"
#include "agentloom/openai_backend.hpp"
#include "agentloom/orchestration.hpp"
#include "agentloom/studio.hpp"
#include "agentloom/tracing.hpp"
#include "agentloom/util.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <regex>
#include <sstream>

#include <pthread.h>

using namespace agentloom;

namespace {

constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::shared_ptr<ChatBackend> make_backend(const ModelConfig& m)
{
    if (m.mock_script)
        return trace_llm(mock_backend(load_mock_script(*m.mock_script)));
    if (m.kind == "mock")
        throw UsageError("model.backend is \"mock\" but no mock script was given; pass --mock-script FILE");
    auto const* key = std::getenv(m.api_key_env.c_str());
    if (!key || !*key)
        throw UsageError(fmt::format("environment variable {} is not set; export your API key there "
                                     "(or run offline with --mock-script FILE)",
                                     m.api_key_env));
    return trace_llm(openai_compatible_backend(m.base_url, key, m.model_name));
}

std::vector<std::string> split_command(const std::string& s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w)
        out.push_back(w);
    return out;
}

ToolFunction current_time_tool()
{
    return make_tool("get_current_time", "Get the current UTC time in RFC 3339 format.", {},
                     [](const json&, ToolContext&) -> Blocks { return {TextBlock{now_rfc3339()}}; });
}

struct Common {
    std::string config_path = "agentloom.toml";
    std::optional<std::string> mock_script;
    std::string log_level;
};

CliConfig resolve_config(const Common& c)
{
    auto cfg = load_cli_config(c.config_path);
    if (c.mock_script)
        cfg.model.mock_script = *c.mock_script;
    if (!c.log_level.empty())
        cfg.log_level = c.log_level;
    spdlog::set_level(spdlog::level::from_str(cfg.log_level));
    return cfg;
}

struct ChatFlags {
    std::string name = "Friday";
    std::string sys_prompt = "You are a helpful assistant named Friday.";
    int max_iters = 10;
    bool parallel_tools = false;
    std::optional<std::string> studio;
    bool studio_input = false;
    std::vector<std::string> mcp_servers;
};

int cmd_chat(const Common& common, const ChatFlags& f)
{
    auto cfg = resolve_config(common);
    if (f.studio)
        cfg.studio_url = *f.studio;

    ReActAgentConfig ac;
    ac.name = f.name;
    ac.sys_prompt = f.sys_prompt;
    ac.backend = make_backend(cfg.model);
    ac.max_iters = f.max_iters;
    ac.parallel_tool_call = f.parallel_tools;
    ac.toolkit = std::make_shared<Toolkit>();
    ac.toolkit->register_tool_function(current_time_tool());

    std::vector<std::unique_ptr<mcp::StatefulClient>> clients;
    for (auto const& cmd : f.mcp_servers) {
        auto words = split_command(cmd);
        if (words.empty())
            throw UsageError("--mcp needs a command");
        mcp::TransportConfig tc;
        tc.stdio.command = words.front();
        tc.stdio.args.assign(words.begin() + 1, words.end());
        auto client = std::make_unique<mcp::StatefulClient>(tc, "mcp");
        client->connect();
        ac.toolkit->register_mcp_client(*client);
        clients.push_back(std::move(client));
    }

    auto agent = std::make_shared<ReActAgent>(ac);
    auto user = std::make_shared<UserAgent>("user", std::make_shared<StreamInput>(std::cin));
    user->set_console(nullptr);

    std::shared_ptr<studio::StudioConnection> conn;
    if (cfg.studio_url) {
        conn = studio::studio_init(*cfg.studio_url, "chat");
        conn->attach(agent);
        if (f.studio_input)
            conn->attach_user(user);
        else
            conn->attach(user);
    }

    for (;;) {
        Msg msg = [&] {
            try {
                return user->reply();
            } catch (const EndOfInputError&) {
                return Msg("user", "exit", Role::user);
            }
        }();
        auto const text = msg.get_text_content().value_or("");
        if (text == "exit")
            break;
        std::cout << "user: " << text << std::endl;
        agent->reply(msg);
    }
    if (conn)
        conn->close();
    for (auto& c : clients)
        c->close();
    return 0;
}

struct HubFlags {
    std::string agents = "Alice,Bob,Charlie";
    std::string topic = "Introduce yourselves briefly.";
    int rounds = 1;
};

int cmd_hub(const Common& common, const HubFlags& f)
{
    auto cfg = resolve_config(common);
    auto backend = make_backend(cfg.model);
    std::vector<AgentPtr> agents;
    std::istringstream names(f.agents);
    std::string name;
    while (std::getline(names, name, ',')) {
        if (name.empty())
            continue;
        ReActAgentConfig ac;
        ac.name = name;
        ac.sys_prompt = fmt::format("You are {}, taking part in a group conversation.", name);
        ac.backend = backend;
        ac.formatter = FormatterKind::multiagent;
        agents.push_back(std::make_shared<ReActAgent>(ac));
    }
    if (agents.size() < 2)
        throw UsageError("--agents needs at least two comma-separated names");
    MsgHub hub(agents, Msg("Host", f.topic, Role::user));
    for (int r = 0; r < f.rounds; ++r)
        sequential_pipeline(agents);
    hub.close();
    return 0;
}

std::optional<double> arithmetic(const std::string& text)
{
    static const std::regex re(R"((-?\d+(?:\.\d+)?)\s*([-+*/x])\s*(-?\d+(?:\.\d+)?))");
    std::smatch m;
    if (!std::regex_search(text, m, re))
        return std::nullopt;
    double a = std::stod(m[1]);
    double b = std::stod(m[3]);
    switch (m[2].str()[0]) {
    case '+': return a + b;
    case '-': return a - b;
    case '*':
    case 'x': return a * b;
    case '/':
        if (b == 0)
            throw ValidationError("division by zero");
        return a / b;
    }
    return std::nullopt;
}

json number_json(double v)
{
    if (v == static_cast<double>(static_cast<long long>(v)))
        return static_cast<long long>(v);
    return v;
}

eval::SolutionFn builtin_solution(const std::string& kind)
{
    if (kind == "calc") {
        return [](const eval::Task& task, const eval::PreHook& pre) {
            pre("solve");
            auto const question = task.input.is_string() ? task.input.get<std::string>() : task.input.dump();
            eval::SolutionOutput out;
            out.trajectory.push_back(Msg("user", question, Role::user));
            auto v = arithmetic(question);
            if (!v) {
                out.output = nullptr;
                out.trajectory.push_back(Msg("calc", "I cannot find an arithmetic expression.", Role::assistant));
                return out;
            }
            out.success = true;
            out.output = number_json(*v);
            out.trajectory.push_back(Msg("calc", out.output.dump(), Role::assistant));
            return out;
        };
    }
    if (kind == "echo") {
        return [](const eval::Task& task, const eval::PreHook& pre) {
            pre("solve");
            eval::SolutionOutput out;
            out.success = true;
            out.output = task.input;
            auto const text = task.input.is_string() ? task.input.get<std::string>() : task.input.dump();
            out.trajectory.push_back(Msg("user", text, Role::user));
            out.trajectory.push_back(Msg("echo", text, Role::assistant));
            return out;
        };
    }
    throw UsageError(fmt::format("unknown solution '{}' (expected calc or echo)", kind));
}

struct EvalFlags {
    std::string benchmark;
    int repeat = 1;
    int workers = 1;
    std::optional<std::string> storage;
    std::string solution = "calc";
    std::uint64_t seed = 0;
};

int cmd_eval(const Common& common, const EvalFlags& f)
{
    auto cfg = resolve_config(common);
    if (f.storage)
        cfg.storage_root = *f.storage;
    eval::Benchmark bench = [&] {
        try {
            return eval::load_benchmark(f.benchmark);
        } catch (const ParseError& e) {
            throw UsageError(fmt::format("invalid benchmark: {}", e.what()));
        }
    }();
    auto solution = builtin_solution(f.solution);
    eval::FileStorage storage(cfg.storage_root);
    auto const summary = f.workers <= 1 ? eval::run_sequential(bench, solution, f.repeat, storage)
                                        : eval::run_parallel(bench, solution, f.repeat, f.workers, storage);
    std::cout << fmt::format("benchmark {}: {} units, {} executed, {} skipped, {} failed ({:.2f}s)\n",
                             summary.benchmark, summary.units, summary.executed, summary.skipped, summary.failed,
                             summary.elapsed_seconds);
    if (summary.skipped > 0)
        std::cout << fmt::format("resumed: {} skipped\n", summary.skipped);

    eval::AggregateOptions opts;
    opts.bootstrap.seed = f.seed;
    auto report = eval::aggregate(storage, bench, opts);
    storage.write_json_atomic(storage.root() / bench.name() / "aggregate.json", eval::report_to_json(report));
    for (auto const& m : report.metrics) {
        std::size_t correct = 0, incorrect = 0, unstable = 0;
        for (auto const& [task, cohort] : m.cohorts) {
            correct += cohort == eval::kConsistentlyCorrect;
            incorrect += cohort == eval::kConsistentlyIncorrect;
            unstable += cohort == eval::kUnstable;
        }
        std::string rate = m.pass_rate ? fmt::format(" pass-rate {:.3f}", *m.pass_rate) : "";
        std::cout << fmt::format("{}: mean {:.3f}{} stddev {:.3f} {:.0f}% CI [{:.3f}, {:.3f}]; cohorts: {} "
                                 "consistently correct, {} consistently incorrect, {} unstable\n",
                                 m.name, m.mean, rate, m.stddev, report.bootstrap.confidence * 100, m.ci.low,
                                 m.ci.high, correct, incorrect, unstable);
    }
    return 0;
}

struct StudioFlags {
    std::string host = "127.0.0.1";
    unsigned short port = 5173;
    std::optional<std::string> storage;
    std::optional<std::string> static_dir;
    std::optional<std::string> dump_dir;
};

int cmd_studio(const Common& common, const StudioFlags& f)
{
    auto cfg = resolve_config(common);
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    auto hub = std::make_shared<studio::StudioHub>();
    if (f.dump_dir)
        hub->set_dump_dir(std::filesystem::path(*f.dump_dir));
    studio::ServerOptions opts;
    opts.host = f.host;
    opts.port = f.port;
    opts.storage_root = f.storage ? std::filesystem::path(*f.storage) : cfg.storage_root;
    if (f.static_dir)
        opts.static_dir = std::filesystem::path(*f.static_dir);
    studio::StudioServer server(hub, opts);
    try {
        server.start();
    } catch (const TransportError& e) {
        throw UsageError(e.what());
    }
    std::cout << "studio listening on " << server.url() << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    std::cout << "shutting down" << std::endl;
    server.stop();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("agentloom"));
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"agentloom: agents, tools, evaluation and studio"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "Config file")->capture_default_str();
    app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error, off");

    ChatFlags chat;
    auto* c = app.add_subcommand("chat", "Talk to a ReAct agent; type exit to leave");
    c->add_option("--mock-script", common.mock_script, "Scripted model responses (offline)");
    c->add_option("--name", chat.name, "Agent name")->capture_default_str();
    c->add_option("--sys-prompt", chat.sys_prompt, "System prompt");
    c->add_option("--max-iters", chat.max_iters, "Reasoning-acting iterations per reply")->capture_default_str();
    c->add_flag("--parallel-tools", chat.parallel_tools, "Run tool calls of one step concurrently");
    c->add_option("--studio", chat.studio, "Studio URL, e.g. http://127.0.0.1:5173");
    c->add_flag("--studio-input", chat.studio_input, "Read user input from the studio instead of stdin");
    c->add_option("--mcp", chat.mcp_servers, "Stdio MCP server command line (repeatable)");

    HubFlags hubf;
    auto* h = app.add_subcommand("hub", "Multi-agent conversation in a message hub");
    h->add_option("--mock-script", common.mock_script, "Scripted model responses (offline)");
    h->add_option("--agents", hubf.agents, "Comma-separated agent names")->capture_default_str();
    h->add_option("--topic", hubf.topic, "Announcement");
    h->add_option("--rounds", hubf.rounds, "Rounds")->capture_default_str();

    EvalFlags evalf;
    auto* e = app.add_subcommand("eval", "Run a benchmark");
    e->add_option("--benchmark", evalf.benchmark, "Benchmark JSON file")->required();
    e->add_option("--repeat", evalf.repeat, "Repeats per task")->capture_default_str();
    e->add_option("--workers", evalf.workers, "Parallel workers")->capture_default_str();
    e->add_option("--storage", evalf.storage, "Storage root");
    e->add_option("--solution", evalf.solution, "Built-in solution: calc or echo")->capture_default_str();
    e->add_option("--seed", evalf.seed, "Bootstrap seed")->capture_default_str();

    StudioFlags studiof;
    auto* s = app.add_subcommand("studio", "Serve the studio API");
    s->add_option("--host", studiof.host)->capture_default_str();
    s->add_option("--port", studiof.port)->capture_default_str();
    s->add_option("--storage", studiof.storage, "Evaluation storage root");
    s->add_option("--static", studiof.static_dir, "Built UI directory");
    s->add_option("--dump-dir", studiof.dump_dir, "Append run events as JSON lines here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed())
            return cmd_chat(common, chat);
        if (h->parsed())
            return cmd_hub(common, hubf);
        if (e->parsed())
            return cmd_eval(common, evalf);
        if (s->parsed())
            return cmd_studio(common, studiof);
    } catch (const UsageError& ex) {
        std::cerr << "error: " << ex.what() << std::endl;
        return kUsageError;
    } catch (const ParseError& ex) {
        std::cerr << "error: " << ex.what() << std::endl;
        return kUsageError;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << std::endl;
        return 1;
    }
    return 0;
}
