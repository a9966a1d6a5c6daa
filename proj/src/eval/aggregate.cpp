// SPDX-License-Identifier: Apache-2.0
#include "agentloom/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace agentloom::eval {

namespace {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
double quantile(const std::vector<double>& sorted, double q)
{
    auto const h = (static_cast<double>(sorted.size()) - 1.0) * q;
    auto const lo = static_cast<std::size_t>(std::floor(h));
    auto const hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_of(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

ConfidenceInterval bootstrap_mean_ci(const std::vector<double>& values, const BootstrapOptions& opts)
{
    if (values.empty())
        throw ValidationError("bootstrap needs at least one value");
    if (opts.resamples < 1)
        throw ValidationError("bootstrap needs at least one resample");
    if (!(opts.confidence > 0 && opts.confidence < 1))
        throw ValidationError("confidence must be in (0, 1)");

    std::mt19937_64 rng(opts.seed);
    auto const n = values.size();
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(opts.resamples));
    for (int b = 0; b < opts.resamples; ++b) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            auto const u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            sum += values[static_cast<std::size_t>(u * static_cast<double>(n))];
        }
        means.push_back(sum / static_cast<double>(n));
    }
    std::sort(means.begin(), means.end());
    auto const alpha = 1.0 - opts.confidence;
    return {quantile(means, alpha / 2), quantile(means, 1 - alpha / 2)};
}

namespace {

struct Observation {
    std::string task;
    int repeat;
    MetricResult result;
};

double score_of(const MetricResult& r)
{
    if (r.kind == MetricKind::numerical)
        return r.score;
    return r.value == "pass" ? 1.0 : 0.0;
}

bool correct(const MetricResult& r, double threshold)
{
    if (r.kind == MetricKind::numerical)
        return r.score >= threshold;
    return r.value == "pass";
}

} // namespace

AggregateReport aggregate(const FileStorage& storage, const std::string& benchmark,
                          const std::vector<std::string>& task_ids, const AggregateOptions& opts)
{
    AggregateReport report;
    report.benchmark = benchmark;
    report.bootstrap = opts.bootstrap;

    std::vector<std::string> metric_order;
    std::map<std::string, std::vector<Observation>> by_metric;
    std::set<int> repeats;

    for (auto const& task : task_ids) {
        std::vector<int> task_repeats;
        std::error_code ec;
        if (std::filesystem::is_directory(storage.root() / benchmark / task, ec))
            task_repeats = storage.list_repeats(benchmark, task);
        for (int r : task_repeats) {
            if (!storage.has_evaluation(benchmark, task, r))
                continue;
            auto const eval = storage.load_evaluation(benchmark, task, r);
            ++report.completed_units;
            repeats.insert(r);
            for (auto const& rj : eval.at("results")) {
                MetricResult m;
                try {
                    m = metric_result_from_json(rj);
                } catch (const ParseError& e) {
                    throw StorageError(fmt::format(
                        "'{}': {}", (storage.unit_dir(benchmark, task, r) / "evaluation.json").string(), e.what()));
                }
                if (!by_metric.count(m.name))
                    metric_order.push_back(m.name);
                by_metric[m.name].push_back({task, r, std::move(m)});
            }
        }
    }
    if (report.completed_units == 0)
        throw EmptyReportError(fmt::format("benchmark '{}' has no completed evaluations", benchmark));
    report.repeats.assign(repeats.begin(), repeats.end());

    for (auto const& name : metric_order) {
        auto const& obs = by_metric[name];
        MetricAggregate agg;
        agg.name = name;
        agg.kind = obs.front().result.kind;
        // Mixed kinds happen when a numerical metric failed and was recorded as "error".
        for (auto const& o : obs)
            if (o.result.kind == MetricKind::numerical)
                agg.kind = MetricKind::numerical;

        std::map<int, std::vector<double>> per_repeat;
        std::map<std::string, std::pair<std::size_t, std::size_t>> per_task; // correct, total
        std::size_t passes = 0;
        for (auto const& o : obs) {
            auto const s = score_of(o.result);
            agg.scores.push_back(s);
            per_repeat[o.repeat].push_back(s);
            if (o.result.kind == MetricKind::categorical)
                ++agg.label_counts[o.result.value];
            auto& t = per_task[o.task];
            if (correct(o.result, opts.correct_threshold)) {
                ++t.first;
                ++passes;
            }
            ++t.second;
        }
        agg.samples = agg.scores.size();
        agg.mean = mean_of(agg.scores);
        if (agg.kind == MetricKind::categorical)
            agg.pass_rate = static_cast<double>(passes) / static_cast<double>(agg.samples);

        std::vector<double> repeat_means;
        for (auto const& [r, v] : per_repeat)
            repeat_means.push_back(mean_of(v));
        if (repeat_means.size() > 1) {
            auto const m = mean_of(repeat_means);
            double ss = 0;
            for (double x : repeat_means)
                ss += (x - m) * (x - m);
            agg.stddev = std::sqrt(ss / static_cast<double>(repeat_means.size() - 1));
        }

        agg.ci = bootstrap_mean_ci(agg.scores, opts.bootstrap);

        for (auto const& [task, counts] : per_task) {
            if (counts.first == counts.second)
                agg.cohorts[task] = std::string(kConsistentlyCorrect);
            else if (counts.first == 0)
                agg.cohorts[task] = std::string(kConsistentlyIncorrect);
            else
                agg.cohorts[task] = std::string(kUnstable);
        }
        report.metrics.push_back(std::move(agg));
    }
    return report;
}

AggregateReport aggregate(const FileStorage& storage, const Benchmark& benchmark, const AggregateOptions& opts)
{
    return aggregate(storage, benchmark.name(), benchmark.task_ids(), opts);
}

AggregateReport aggregate(const FileStorage& storage, const std::string& benchmark, const AggregateOptions& opts)
{
    return aggregate(storage, benchmark, storage.list_tasks(benchmark), opts);
}

json report_to_json(const AggregateReport& report)
{
    json metrics = json::array();
    for (auto const& m : report.metrics) {
        json j{{"name", m.name},
               {"kind", to_string(m.kind)},
               {"samples", m.samples},
               {"mean", m.mean},
               {"stddev", m.stddev},
               {"pass_rate", m.pass_rate ? json(*m.pass_rate) : json(nullptr)},
               {"label_counts", m.label_counts},
               {"scores", m.scores},
               {"ci", {{"low", m.ci.low}, {"high", m.ci.high}}},
               {"cohorts", m.cohorts}};
        metrics.push_back(std::move(j));
    }
    return {{"benchmark", report.benchmark},
            {"repeats", report.repeats},
            {"completed_units", report.completed_units},
            {"bootstrap",
             {{"resamples", report.bootstrap.resamples},
              {"seed", report.bootstrap.seed},
              {"confidence", report.bootstrap.confidence},
              {"method", "percentile"}}},
            {"metrics", std::move(metrics)}};
}

} // namespace agentloom::eval
