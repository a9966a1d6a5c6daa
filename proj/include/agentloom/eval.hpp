// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/errors.hpp"
#include "agentloom/message.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentloom::eval {

struct SolutionOutput {
    bool success = false;
    json output;
    std::vector<Msg> trajectory;
};

json solution_to_json(const SolutionOutput& s);
SolutionOutput solution_from_json(const json& j);

enum class MetricKind { categorical, numerical };

std::string_view to_string(MetricKind kind);

struct MetricResult {
    std::string name;
    MetricKind kind = MetricKind::categorical;
    std::string value; // categorical
    double score = 0;  // numerical
    std::string timestamp;
    std::optional<std::string> message;
};

json metric_result_to_json(const MetricResult& r);
MetricResult metric_result_from_json(const json& j);

class Metric {
public:
    virtual ~Metric() = default;
    virtual std::string name() const = 0;
    virtual MetricKind kind() const = 0;
    /// Declared label set of a categorical metric ("error" is always allowed too).
    virtual std::vector<std::string> labels() const { return {}; }
    virtual MetricResult evaluate(const SolutionOutput& solution) const = 0;
};

/// Runs the metric; an exception becomes a categorical "error" result carrying the message.
MetricResult metric_eval(const Metric& metric, const SolutionOutput& solution);

/// "pass" when the output equals the ground truth, otherwise "fail".
class ExactMatch : public Metric {
public:
    explicit ExactMatch(json ground_truth) : truth_(std::move(ground_truth)) {}
    std::string name() const override { return "exact_match"; }
    MetricKind kind() const override { return MetricKind::categorical; }
    std::vector<std::string> labels() const override { return {"pass", "fail"}; }
    MetricResult evaluate(const SolutionOutput& solution) const override;

private:
    json truth_;
};

/// Jaccard index of lowercased whitespace token sets of output and ground truth.
class Jaccard : public Metric {
public:
    explicit Jaccard(json ground_truth) : truth_(std::move(ground_truth)) {}
    std::string name() const override { return "jaccard"; }
    MetricKind kind() const override { return MetricKind::numerical; }
    MetricResult evaluate(const SolutionOutput& solution) const override;

private:
    json truth_;
};

double jaccard_index(std::string_view a, std::string_view b);

struct Task {
    std::string id;
    json input;
    json ground_truth;
    std::vector<std::shared_ptr<Metric>> metrics;
    json tags = json::object();
};

class Benchmark {
public:
    /// Throws ValidationError on duplicate ids, unsafe ids or tasks without metrics.
    Benchmark(std::string name, std::vector<Task> tasks);

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return tasks_.size(); }
    /// Throws RangeError when out of bounds.
    const Task& operator[](std::size_t i) const;
    auto begin() const { return tasks_.begin(); }
    auto end() const { return tasks_.end(); }
    std::vector<std::string> task_ids() const;

private:
    std::string name_;
    std::vector<Task> tasks_;
};

/// `{name, tasks:[{id, input, ground_truth, metric: "exact_match"|"jaccard", tags?}]}`.
/// Throws ParseError carrying the offending path.
Benchmark benchmark_from_json(const json& j);
Benchmark load_benchmark(const std::filesystem::path& path);

/// Progress callback passed to solutions; called with a phase name.
using PreHook = std::function<void(std::string_view phase)>;
using SolutionFn = std::function<SolutionOutput(const Task& task, const PreHook& pre_hook)>;

/// A solution can throw this to report that its worker died rather than that the task failed.
/// The unit is retried once and then recorded as failed.
class WorkerDeath : public Error {
public:
    using Error::Error;
};

/// `{root}/{benchmark}/{task_id}/{repeat}/solution.json` and `evaluation.json`, written
/// via temp file and rename. A unit is complete once evaluation.json exists.
class FileStorage {
public:
    explicit FileStorage(std::filesystem::path root);
    virtual ~FileStorage() = default;

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path unit_dir(const std::string& benchmark, const std::string& task, int repeat) const;

    virtual bool has_evaluation(const std::string& benchmark, const std::string& task, int repeat) const;
    virtual void save_solution(const std::string& benchmark, const std::string& task, int repeat,
                               const SolutionOutput& solution);
    virtual void save_evaluation(const std::string& benchmark, const std::string& task, int repeat,
                                 const json& evaluation);
    SolutionOutput load_solution(const std::string& benchmark, const std::string& task, int repeat) const;
    json load_evaluation(const std::string& benchmark, const std::string& task, int repeat) const;

    /// Directory listings. Throw StorageError naming the offending path when malformed.
    std::vector<std::string> list_benchmarks() const;
    std::vector<std::string> list_tasks(const std::string& benchmark) const;
    std::vector<int> list_repeats(const std::string& benchmark, const std::string& task) const;

    void write_json_atomic(const std::filesystem::path& path, const json& value) const;

private:
    std::filesystem::path root_;
};

struct EvalSummary {
    std::string benchmark;
    std::size_t units = 0;
    std::size_t executed = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    double elapsed_seconds = 0;
};

class Evaluator {
public:
    virtual ~Evaluator() = default;
    /// Runs every (task, repeat) not yet complete in storage. Storage errors abort the run.
    virtual EvalSummary run(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                            FileStorage& storage) = 0;
};

class SequentialEvaluator : public Evaluator {
public:
    EvalSummary run(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                    FileStorage& storage) override;
};

/// Same interface and artifacts as SequentialEvaluator; units are spread over an in-process
/// pool of worker threads.
class ParallelEvaluator : public Evaluator {
public:
    explicit ParallelEvaluator(int workers);
    EvalSummary run(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                    FileStorage& storage) override;

private:
    int workers_;
};

EvalSummary run_sequential(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                           FileStorage& storage);
EvalSummary run_parallel(const Benchmark& benchmark, const SolutionFn& solution, int repeats, int workers,
                         FileStorage& storage);

class EmptyReportError : public Error {
public:
    using Error::Error;
};

struct BootstrapOptions {
    int resamples = 1000;
    std::uint64_t seed = 0;
    double confidence = 0.95;
};

struct ConfidenceInterval {
    double low = 0;
    double high = 0;
};

/// Percentile bootstrap of the mean. Resample indices are floor(u * n) with
/// u = (mt19937_64() >> 11) * 2^-53; quantiles interpolate linearly between order statistics.
ConfidenceInterval bootstrap_mean_ci(const std::vector<double>& values, const BootstrapOptions& opts = {});

struct AggregateOptions {
    BootstrapOptions bootstrap;
    /// A numerical score counts as correct when it reaches this value.
    double correct_threshold = 1.0;
};

inline constexpr std::string_view kConsistentlyCorrect = "consistently correct";
inline constexpr std::string_view kConsistentlyIncorrect = "consistently incorrect";
inline constexpr std::string_view kUnstable = "unstable";

struct MetricAggregate {
    std::string name;
    MetricKind kind = MetricKind::categorical;
    std::size_t samples = 0;
    double mean = 0;
    /// Sample standard deviation of the per-repeat means (0 with one repeat).
    double stddev = 0;
    std::optional<double> pass_rate;
    std::map<std::string, std::size_t> label_counts;
    std::vector<double> scores;
    ConfidenceInterval ci;
    std::map<std::string, std::string> cohorts;
};

struct AggregateReport {
    std::string benchmark;
    std::vector<int> repeats;
    std::size_t completed_units = 0;
    BootstrapOptions bootstrap;
    std::vector<MetricAggregate> metrics;
};

json report_to_json(const AggregateReport& report);

/// Pure function of storage contents. Throws EmptyReportError when nothing is complete.
AggregateReport aggregate(const FileStorage& storage, const std::string& benchmark,
                          const std::vector<std::string>& task_ids, const AggregateOptions& opts = {});
AggregateReport aggregate(const FileStorage& storage, const Benchmark& benchmark, const AggregateOptions& opts = {});
/// Uses the task directories present in storage.
AggregateReport aggregate(const FileStorage& storage, const std::string& benchmark, const AggregateOptions& opts = {});

} // namespace agentloom::eval
