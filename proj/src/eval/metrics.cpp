// SPDX-License-Identifier: Apache-2.0
#include "agentloom/eval.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace agentloom::eval {

json solution_to_json(const SolutionOutput& s)
{
    json traj = json::array();
    for (auto const& m : s.trajectory)
        traj.push_back(msg_to_json_value(m));
    return {{"success", s.success}, {"output", s.output}, {"trajectory", std::move(traj)}};
}

SolutionOutput solution_from_json(const json& j)
{
    if (!j.is_object())
        throw ParseError("", "solution must be an object");
    SolutionOutput s;
    try {
        s.success = j.at("success").get<bool>();
        s.output = j.value("output", json());
        auto const& traj = j.at("trajectory");
        if (!traj.is_array())
            throw ParseError("trajectory", "expected an array");
        for (std::size_t i = 0; i < traj.size(); ++i)
            s.trajectory.push_back(msg_from_json_value(traj[i], fmt::format("trajectory[{}]", i)));
    } catch (const json::exception& e) {
        throw ParseError("", fmt::format("malformed solution: {}", e.what()));
    }
    return s;
}

std::string_view to_string(MetricKind kind)
{
    return kind == MetricKind::categorical ? "categorical" : "numerical";
}

json metric_result_to_json(const MetricResult& r)
{
    json j{{"name", r.name}, {"kind", to_string(r.kind)}, {"timestamp", r.timestamp}};
    if (r.kind == MetricKind::categorical)
        j["value"] = r.value;
    else
        j["score"] = r.score;
    if (r.message)
        j["message"] = *r.message;
    return j;
}

MetricResult metric_result_from_json(const json& j)
{
    MetricResult r;
    try {
        r.name = j.at("name").get<std::string>();
        auto const kind = j.at("kind").get<std::string>();
        if (kind == "categorical") {
            r.kind = MetricKind::categorical;
            r.value = j.at("value").get<std::string>();
        } else if (kind == "numerical") {
            r.kind = MetricKind::numerical;
            r.score = j.at("score").get<double>();
        } else {
            throw ParseError("kind", fmt::format("unknown metric kind '{}'", kind));
        }
        r.timestamp = j.value("timestamp", "");
        if (j.contains("message") && j.at("message").is_string())
            r.message = j.at("message").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("", fmt::format("malformed metric result: {}", e.what()));
    }
    return r;
}

MetricResult metric_eval(const Metric& metric, const SolutionOutput& solution)
{
    try {
        auto r = metric.evaluate(solution);
        if (r.timestamp.empty())
            r.timestamp = now_rfc3339();
        if (r.kind == MetricKind::categorical && r.value != "error") {
            auto labels = metric.labels();
            if (!labels.empty() && std::find(labels.begin(), labels.end(), r.value) == labels.end())
                throw ValidationError(fmt::format("label '{}' is not declared by metric '{}'", r.value, r.name));
        }
        return r;
    } catch (const std::exception& e) {
        MetricResult r;
        r.name = metric.name();
        r.kind = MetricKind::categorical;
        r.value = "error";
        r.timestamp = now_rfc3339();
        r.message = e.what();
        return r;
    }
}

MetricResult ExactMatch::evaluate(const SolutionOutput& solution) const
{
    MetricResult r;
    r.name = name();
    r.kind = MetricKind::categorical;
    r.value = solution.output == truth_ ? "pass" : "fail";
    r.timestamp = now_rfc3339();
    return r;
}

namespace {

std::string as_text(const json& j)
{
    return j.is_string() ? j.get<std::string>() : j.dump();
}

std::set<std::string> token_set(std::string_view s)
{
    std::set<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok)
        out.insert(to_lower(tok));
    return out;
}

} // namespace

double jaccard_index(std::string_view a, std::string_view b)
{
    auto const x = token_set(a);
    auto const y = token_set(b);
    if (x.empty() && y.empty())
        return 1.0;
    std::size_t inter = 0;
    for (auto const& t : x)
        inter += y.count(t);
    return static_cast<double>(inter) / static_cast<double>(x.size() + y.size() - inter);
}

MetricResult Jaccard::evaluate(const SolutionOutput& solution) const
{
    MetricResult r;
    r.name = name();
    r.kind = MetricKind::numerical;
    r.score = jaccard_index(as_text(solution.output), as_text(truth_));
    r.timestamp = now_rfc3339();
    return r;
}

namespace {

void check_path_component(const std::string& s, const std::string& what)
{
    if (s.empty() || s == "." || s == ".." || s.find('/') != std::string::npos || s.find('\\') != std::string::npos ||
        s.find('\0') != std::string::npos)
        throw ValidationError(fmt::format("{} '{}' cannot be used as a directory name", what, s));
}

} // namespace

Benchmark::Benchmark(std::string name, std::vector<Task> tasks) : name_(std::move(name)), tasks_(std::move(tasks))
{
    check_path_component(name_, "benchmark name");
    std::set<std::string> ids;
    for (auto const& t : tasks_) {
        check_path_component(t.id, "task id");
        if (!ids.insert(t.id).second)
            throw ValidationError(fmt::format("duplicate task id '{}'", t.id));
        if (t.metrics.empty())
            throw ValidationError(fmt::format("task '{}' has no metrics", t.id));
    }
}

const Task& Benchmark::operator[](std::size_t i) const
{
    if (i >= tasks_.size())
        throw RangeError(fmt::format("task index {} out of bounds for size {}", i, tasks_.size()));
    return tasks_[i];
}

std::vector<std::string> Benchmark::task_ids() const
{
    std::vector<std::string> out;
    for (auto const& t : tasks_)
        out.push_back(t.id);
    return out;
}

Benchmark benchmark_from_json(const json& j)
{
    if (!j.is_object())
        throw ParseError("", "benchmark must be an object");
    if (!j.contains("name") || !j.at("name").is_string())
        throw ParseError("name", "expected a string");
    if (!j.contains("tasks") || !j.at("tasks").is_array())
        throw ParseError("tasks", "expected an array");
    std::vector<Task> tasks;
    auto const& arr = j.at("tasks");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        auto const path = fmt::format("tasks[{}]", i);
        auto const& t = arr[i];
        if (!t.is_object())
            throw ParseError(path, "expected an object");
        Task task;
        if (!t.contains("id") || !t.at("id").is_string())
            throw ParseError(path + ".id", "expected a string");
        task.id = t.at("id").get<std::string>();
        if (!t.contains("input"))
            throw ParseError(path + ".input", "missing");
        task.input = t.at("input");
        if (!t.contains("ground_truth"))
            throw ParseError(path + ".ground_truth", "missing");
        task.ground_truth = t.at("ground_truth");
        task.tags = t.value("tags", json::object());
        std::vector<std::string> metric_names;
        if (t.contains("metric") && t.at("metric").is_string())
            metric_names.push_back(t.at("metric").get<std::string>());
        else if (t.contains("metrics") && t.at("metrics").is_array())
            metric_names = t.at("metrics").get<std::vector<std::string>>();
        else
            throw ParseError(path + ".metric", "expected \"exact_match\" or \"jaccard\"");
        for (auto const& m : metric_names) {
            if (m == "exact_match")
                task.metrics.push_back(std::make_shared<ExactMatch>(task.ground_truth));
            else if (m == "jaccard")
                task.metrics.push_back(std::make_shared<Jaccard>(task.ground_truth));
            else
                throw ParseError(path + ".metric", fmt::format("unknown metric '{}'", m));
        }
        tasks.push_back(std::move(task));
    }
    try {
        return Benchmark(j.at("name").get<std::string>(), std::move(tasks));
    } catch (const ValidationError& e) {
        throw ParseError("tasks", e.what());
    }
}

Benchmark load_benchmark(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError(path.string(), "cannot open benchmark file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), e.what());
    }
    try {
        return benchmark_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path.string(), e.what());
    }
}

} // namespace agentloom::eval
