// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/tool.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

using namespace agentloom;
using namespace std::chrono_literals;

namespace {

ToolFunction weather_tool(std::shared_ptr<json> seen = nullptr)
{
    return make_tool("get_weather", "Get weather.", {{"location", "string", "City name"}},
                     [seen](const json& args, ToolContext&) {
                         if (seen)
                             *seen = args;
                         return Blocks{TextBlock{"sunny"}};
                     });
}

ToolFunction echo_tool(const std::string& name)
{
    return make_tool(name, "Echo.", {{"text"}}, [name](const json& args, ToolContext&) {
        return Blocks{TextBlock{name + ":" + args.value("text", "")}};
    });
}

/// Streams "1", "2", ... up to `n`, pausing between chunks.
ToolFunction counter_tool(int n, std::chrono::milliseconds pause)
{
    return make_tool("counter", "Counts.", {}, [n, pause](const json&, ToolContext& ctx) {
        for (int i = 1; i <= n; ++i) {
            ctx.emit(std::to_string(i));
            ctx.sleep_for(pause);
        }
        return Blocks{};
    });
}

std::vector<std::string> names(const std::vector<ToolSchema>& schemas)
{
    std::vector<std::string> out;
    for (auto const& s : schemas)
        out.push_back(s.name);
    return out;
}

std::vector<ToolResultChunk> run(const Toolkit& tk, const std::string& name, json input = json::object())
{
    auto s = tk.call_tool_function(ToolUseBlock{"id1", name, std::move(input)});
    return collect_chunks(s);
}

} // namespace

TEST(Schema, DerivedFromDescriptor)
{
    auto s = derive_schema(weather_tool().descriptor);
    EXPECT_EQ(s.name, "get_weather");
    EXPECT_EQ(s.description, "Get weather.");
    EXPECT_EQ(s.parameters["required"], json::array({"location"}));
    EXPECT_EQ(s.parameters["properties"]["location"]["type"], "string");
    auto j = s.to_json();
    EXPECT_EQ(j["type"], "function");
    EXPECT_EQ(j["function"]["name"], "get_weather");
    EXPECT_EQ(ToolSchema::from_json(j), s);
}

TEST(Schema, DefaultsAreOptional)
{
    FunctionDescriptor d{"search", "Search.", {{"query"}, {"limit", "integer", "", json(10)}}};
    auto s = derive_schema(d);
    EXPECT_EQ(s.parameters["required"], json::array({"query"}));
    EXPECT_EQ(s.parameters["properties"]["limit"]["default"], 10);
}

TEST(Schema, NameGrammar)
{
    EXPECT_THROW(validate_schema(ToolSchema{"bad name", ""}), ValidationError);
    EXPECT_NO_THROW(validate_schema(ToolSchema{"ok_name-2", ""}));
    ToolSchema s{"x", ""};
    s.parameters = json::array();
    EXPECT_THROW(validate_schema(s), ValidationError);
}

TEST(Register, DuplicateIsConflict)
{
    Toolkit tk;
    tk.register_tool_function(weather_tool());
    EXPECT_THROW(tk.register_tool_function(weather_tool()), ConflictError);
    ToolRegistration opts;
    opts.group = "nope";
    EXPECT_THROW(tk.register_tool_function(echo_tool("e"), opts), NotFoundError);
}

TEST(Register, PresetArgsHiddenAndInjected)
{
    auto seen = std::make_shared<json>();
    auto fn = make_tool("search", "Search.", {{"query"}, {"api_key"}}, [seen](const json& args, ToolContext&) {
        *seen = args;
        return Blocks{TextBlock{"ok"}};
    });
    Toolkit tk;
    ToolRegistration opts;
    opts.preset_args = {{"api_key", "K"}};
    tk.register_tool_function(fn, opts);
    auto schemas = tk.get_json_schemas();
    ASSERT_EQ(schemas.size(), 1u);
    EXPECT_FALSE(schemas[0].parameters["properties"].contains("api_key"));
    EXPECT_EQ(schemas[0].parameters["required"], json::array({"query"}));
    // Preset wins over a model-supplied value.
    run(tk, "search", {{"query", "q"}, {"api_key", "stolen"}});
    EXPECT_EQ((*seen)["api_key"], "K");
    EXPECT_EQ((*seen)["query"], "q");
}

TEST(Register, PresetKeyMustBeAParameter)
{
    Toolkit tk;
    ToolRegistration opts;
    opts.preset_args = {{"token", "x"}};
    EXPECT_THROW(tk.register_tool_function(weather_tool(), opts), ValidationError);
}

TEST(Register, ExtendModelAddsThinking)
{
    auto seen = std::make_shared<json>();
    Toolkit tk;
    ToolRegistration opts;
    opts.extend_model = json{{"thinking", {{"type", "string"}}}, {"$required", {"thinking"}}};
    tk.register_tool_function(weather_tool(seen), opts);
    auto s = tk.get_json_schemas().at(0);
    EXPECT_TRUE(s.parameters["properties"].contains("thinking"));
    EXPECT_NE(std::find(s.parameters["required"].begin(), s.parameters["required"].end(), "thinking"),
              s.parameters["required"].end());
    run(tk, "get_weather", {{"location", "Beijing"}, {"thinking", "hmm"}});
    EXPECT_FALSE(seen->contains("thinking"));
}

TEST(Register, ReservedMetaToolName)
{
    Toolkit tk;
    EXPECT_THROW(tk.register_tool_function(echo_tool(std::string(kResetEquippedTools))), ConflictError);
}

TEST(Call, NonStreamingSingleChunk)
{
    auto seen = std::make_shared<json>();
    Toolkit tk;
    tk.register_tool_function(weather_tool(seen));
    auto chunks = run(tk, "get_weather", {{"location", "Beijing"}});
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_TRUE(chunks[0].is_last);
    EXPECT_FALSE(chunks[0].interrupted);
    EXPECT_EQ(text_of(chunks[0].blocks), "sunny");
    EXPECT_EQ(*seen, (json{{"location", "Beijing"}}));
}

TEST(Call, StreamingPassesThroughWithPostprocess)
{
    Toolkit tk;
    ToolRegistration opts;
    opts.postprocess = [](const ToolUseBlock&, Blocks b) {
        b.push_back(TextBlock{"!"});
        return b;
    };
    tk.register_tool_function(counter_tool(3, 0ms), opts);
    auto chunks = run(tk, "counter");
    ASSERT_EQ(chunks.size(), 3u);
    EXPECT_EQ(text_of(chunks[0].blocks), "1!");
    EXPECT_EQ(text_of(chunks[2].blocks), "3!");
    EXPECT_FALSE(chunks[1].is_last);
    EXPECT_TRUE(chunks[2].is_last);
    EXPECT_EQ(text_of(chunks_to_blocks(chunks)), "1!2!3!");
}

TEST(Call, InterruptAfterTwoYields)
{
    Toolkit tk;
    tk.register_tool_function(counter_tool(100, 20ms));
    std::stop_source stop;
    auto s = tk.call_tool_function(ToolUseBlock{"c", "counter", json::object()}, stop.get_token());
    std::vector<ToolResultChunk> got;
    got.push_back(*s.next());
    got.push_back(*s.next());
    stop.request_stop();
    while (auto c = s.next())
        got.push_back(*c);
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(text_of(got[0].blocks), "1");
    EXPECT_EQ(text_of(got[1].blocks), "2");
    EXPECT_TRUE(got[2].is_last);
    EXPECT_TRUE(got[2].interrupted);
    EXPECT_NE(text_of(got[2].blocks).find("tool execution was interrupted"), std::string::npos);
}

TEST(Call, InterruptionPreservationProperty)
{
    Toolkit tk;
    tk.register_tool_function(counter_tool(50, 2ms));
    for (int k = 0; k <= 10; ++k) {
        std::stop_source stop;
        auto s = tk.call_tool_function(ToolUseBlock{"c", "counter", json::object()}, stop.get_token());
        std::vector<ToolResultChunk> got;
        for (int i = 0; i < k; ++i)
            got.push_back(*s.next());
        stop.request_stop();
        while (auto c = s.next())
            got.push_back(*c);
        ASSERT_EQ(got.size(), std::size_t(k + 1)) << "k=" << k;
        for (int i = 0; i < k; ++i) {
            EXPECT_EQ(text_of(got[i].blocks), std::to_string(i + 1));
            EXPECT_FALSE(got[i].interrupted);
        }
        EXPECT_TRUE(got.back().interrupted);
    }
}

TEST(Call, TimeoutUsesNotice)
{
    Toolkit tk;
    ToolRegistration opts;
    opts.timeout = 100ms;
    tk.register_tool_function(counter_tool(100, 30ms), opts);
    auto const t0 = std::chrono::steady_clock::now();
    auto chunks = run(tk, "counter");
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
    ASSERT_GE(chunks.size(), 2u);
    EXPECT_TRUE(chunks.back().interrupted);
    EXPECT_NE(text_of(chunks.back().blocks).find("tool execution timed out"), std::string::npos);
}

TEST(Call, FaultsBecomeErrorResults)
{
    Toolkit tk;
    tk.register_tool_function(make_tool("boom", "Fails.", {}, [](const json&, ToolContext&) -> Blocks {
        throw std::runtime_error("kaput");
    }));
    auto chunks = run(tk, "boom");
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_TRUE(chunks[0].is_error);
    EXPECT_NE(text_of(chunks[0].blocks).find("kaput"), std::string::npos);

    auto missing = run(tk, "nope");
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_TRUE(missing[0].is_error);
    EXPECT_NE(text_of(missing[0].blocks).find("nope"), std::string::npos);
}

TEST(Call, FuzzedInputsNeverThrow)
{
    Toolkit tk;
    tk.register_tool_function(weather_tool());
    tk.register_tool_function(make_tool("strict", "Needs int.", {{"n", "integer"}}, [](const json& a, ToolContext&) {
        return Blocks{TextBlock{std::to_string(a.at("n").get<int>() * 2)}};
    }));
    std::mt19937 rng(17);
    const std::vector<json> values{json(), json(1), json("s"), json::array({1, 2}), json::object(),
                                   json{{"n", "x"}}, json{{"n", 4}}};
    for (int i = 0; i < 300; ++i) {
        std::string name = std::vector<std::string>{"get_weather", "strict", "", "zzz", std::string(kResetEquippedTools)}[rng() % 5];
        json input = values[rng() % values.size()];
        std::vector<ToolResultChunk> chunks;
        EXPECT_NO_THROW({
            auto s = tk.call_tool_function(ToolUseBlock{"f", name, input});
            chunks = collect_chunks(s);
        });
        ASSERT_FALSE(chunks.empty());
        EXPECT_TRUE(chunks.back().is_last);
    }
}

TEST(Groups, InactiveGroupHidden)
{
    Toolkit tk;
    tk.register_tool_function(echo_tool("a"));
    tk.register_tool_function(echo_tool("b"));
    tk.create_tool_group("browser_tools", "Web browsing.", false, "Use the browser carefully.");
    ToolRegistration opts;
    opts.group = "browser_tools";
    tk.register_tool_function(echo_tool("navigate"), opts);
    EXPECT_EQ(names(tk.get_json_schemas()), (std::vector<std::string>{"a", "b", std::string(kResetEquippedTools)}));

    auto gated = run(tk, "navigate");
    ASSERT_EQ(gated.size(), 1u);
    EXPECT_TRUE(gated[0].is_error);
    auto text = text_of(gated[0].blocks);
    EXPECT_NE(text.find("navigate"), std::string::npos);
    EXPECT_NE(text.find("browser_tools"), std::string::npos);

    tk.update_tool_groups({"browser_tools"}, true);
    EXPECT_EQ(names(tk.get_json_schemas()),
              (std::vector<std::string>{"a", "b", "navigate", std::string(kResetEquippedTools)}));
    EXPECT_EQ(text_of(run(tk, "navigate", {{"text", "x"}})[0].blocks), "navigate:x");
    EXPECT_NE(tk.active_group_notes().find("Use the browser carefully."), std::string::npos);
}

TEST(Groups, BasicIsProtected)
{
    Toolkit tk;
    EXPECT_THROW(tk.update_tool_groups({"basic"}, false), ValidationError);
    EXPECT_THROW(tk.remove_tool_groups({"basic"}), ValidationError);
    EXPECT_THROW(tk.update_tool_groups({"ghost"}, true), NotFoundError);
    tk.create_tool_group("g", "");
    EXPECT_THROW(tk.create_tool_group("g", ""), ConflictError);
}

TEST(Groups, RemoveGroupRemovesMembers)
{
    Toolkit tk;
    tk.register_tool_function(echo_tool("keep"));
    tk.create_tool_group("g", "", true);
    ToolRegistration opts;
    opts.group = "g";
    for (auto n : {"x", "y", "z"})
        tk.register_tool_function(echo_tool(n), opts);
    EXPECT_EQ(tk.tool_names().size(), 4u);
    tk.remove_tool_groups({"g"});
    EXPECT_EQ(tk.tool_names(), std::vector<std::string>{"keep"});
    EXPECT_EQ(tk.groups().size(), 1u);
}

TEST(Groups, MetaToolTogglesGroups)
{
    Toolkit tk;
    tk.create_tool_group("browser_tools", "Web.", false, "browser notes");
    tk.create_tool_group("files", "Files.", true);
    auto schemas = tk.get_json_schemas();
    auto const& meta = schemas.back();
    EXPECT_EQ(meta.name, kResetEquippedTools);
    EXPECT_TRUE(meta.parameters["properties"].contains("browser_tools"));
    EXPECT_FALSE(meta.parameters["properties"].contains("basic"));

    auto r = run(tk, std::string(kResetEquippedTools), {{"browser_tools", true}, {"files", false}});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_FALSE(r[0].is_error);
    EXPECT_NE(text_of(r[0].blocks).find("browser notes"), std::string::npos);
    EXPECT_EQ(tk.active_groups(), (std::vector<std::string>{"basic", "browser_tools"}));

    auto bad = run(tk, std::string(kResetEquippedTools), {{"ghost", true}});
    EXPECT_TRUE(bad[0].is_error);
}

TEST(Groups, RandomActivationMatchesFilterOracle)
{
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        Toolkit tk;
        std::vector<std::string> groups{"basic"};
        int ng = rng() % 4;
        for (int g = 0; g < ng; ++g) {
            groups.push_back("g" + std::to_string(g));
            tk.create_tool_group(groups.back(), "");
        }
        std::vector<std::pair<std::string, std::string>> tools;
        int nt = rng() % 12;
        for (int t = 0; t < nt; ++t) {
            ToolRegistration opts;
            opts.group = groups[rng() % groups.size()];
            tools.emplace_back("t" + std::to_string(t), opts.group);
            tk.register_tool_function(echo_tool(tools.back().first), opts);
        }
        std::set<std::string> active{"basic"};
        for (std::size_t g = 1; g < groups.size(); ++g)
            if (rng() % 2) {
                tk.update_tool_groups({groups[g]}, true);
                active.insert(groups[g]);
            }
        std::vector<std::string> expected;
        for (auto const& [name, group] : tools)
            if (active.count(group))
                expected.push_back(name);
        if (groups.size() > 1)
            expected.push_back(std::string(kResetEquippedTools));
        EXPECT_EQ(names(tk.get_json_schemas()), expected);
    }
}

TEST(Remove, RegisterThenRemove)
{
    Toolkit tk;
    tk.register_tool_function(echo_tool("a"));
    auto before = names(tk.get_json_schemas());
    tk.register_tool_function(echo_tool("b"));
    tk.remove_tool_function("b");
    EXPECT_EQ(names(tk.get_json_schemas()), before);
    EXPECT_THROW(tk.remove_tool_function("b"), NotFoundError);
}

TEST(Remove, RandomRemovalsMatchSetDifference)
{
    std::mt19937 rng(31);
    Toolkit tk;
    std::vector<std::string> all;
    for (int i = 0; i < 30; ++i) {
        all.push_back("t" + std::to_string(i));
        tk.register_tool_function(echo_tool(all.back()));
    }
    std::vector<std::string> remaining = all;
    for (int i = 0; i < 15; ++i) {
        auto idx = rng() % remaining.size();
        tk.remove_tool_function(remaining[idx]);
        remaining.erase(remaining.begin() + idx);
    }
    EXPECT_EQ(tk.tool_names(), remaining);
}

namespace {

class FakeProvider : public ToolProvider {
public:
    explicit FakeProvider(std::string id) : id_(std::move(id)) {}
    std::string client_id() const override { return id_; }
    std::vector<ToolSchema> list_tool_schemas() override
    {
        return {ToolSchema{id_ + "_search", "Search."}, ToolSchema{id_ + "_fetch", "Fetch."}};
    }
    ToolCallable get_callable(const std::string& name) override
    {
        return [name](const json&, ToolContext&) { return Blocks{TextBlock{"remote " + name}}; };
    }

private:
    std::string id_;
};

} // namespace

TEST(McpRegistration, FilterGroupAndRemoval)
{
    Toolkit tk;
    FakeProvider a("a"), b("b");
    EXPECT_EQ(tk.register_mcp_client(a), 2u);
    EXPECT_EQ(tk.register_mcp_client(b, std::nullopt, std::vector<std::string>{"b_search"}), 1u);
    EXPECT_EQ(tk.entry("a_fetch")->origin, (ToolOrigin{true, "a"}));
    EXPECT_EQ(text_of(run(tk, "b_search")[0].blocks), "remote b_search");
    EXPECT_THROW(tk.register_mcp_client(a), ConflictError);

    EXPECT_EQ(tk.remove_mcp_clients({"a"}), 2u);
    EXPECT_EQ(tk.tool_names(), std::vector<std::string>{"b_search"});
    EXPECT_THROW(tk.remove_mcp_clients({"a"}), NotFoundError);
}

TEST(Toolkit, StateRoundTrip)
{
    Toolkit tk;
    tk.create_tool_group("g", "");
    tk.update_tool_groups({"g"}, true);
    auto state = tk.state_dict();
    Toolkit other;
    other.create_tool_group("g", "");
    other.load_state_dict(state);
    EXPECT_EQ(other.active_groups(), tk.active_groups());
    Toolkit mismatched;
    EXPECT_THROW(mismatched.load_state_dict(state), StateError);
}

TEST(Toolkit, ConcurrentCallsDuringRegistration)
{
    Toolkit tk;
    tk.register_tool_function(weather_tool());
    std::atomic<bool> stop{false};
    std::thread writer([&] {
        for (int i = 0; i < 200; ++i) {
            tk.register_tool_function(echo_tool("tmp" + std::to_string(i)));
            tk.remove_tool_function("tmp" + std::to_string(i));
        }
        stop = true;
    });
    int calls = 0;
    while (!stop) {
        auto chunks = run(tk, "get_weather", {{"location", "x"}});
        ASSERT_EQ(text_of(chunks.at(0).blocks), "sunny");
        ++calls;
    }
    writer.join();
    EXPECT_GT(calls, 0);
}
