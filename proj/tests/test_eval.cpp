// SPDX-License-Identifier: Apache-2.0
#include "agentloom/eval.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

using namespace agentloom;
using namespace agentloom::eval;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir()
    {
        auto const* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() /
                (std::string("agentloom_eval_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Task exact_task(const std::string& id, json input, json truth)
{
    Task t;
    t.id = id;
    t.input = std::move(input);
    t.ground_truth = truth;
    t.metrics = {std::make_shared<ExactMatch>(truth)};
    return t;
}

/// Tasks whose answer is the input; even-numbered tasks get the wrong truth.
Benchmark toy_benchmark(int n, const std::string& name = "toy")
{
    std::vector<Task> tasks;
    for (int i = 0; i < n; ++i)
        tasks.push_back(exact_task("t" + std::to_string(i), i, i % 2 ? i : -1));
    return Benchmark(name, std::move(tasks));
}

SolutionOutput echo(const Task& task)
{
    SolutionOutput out;
    out.success = true;
    out.output = task.input;
    out.trajectory = {Msg("user", task.input.dump(), Role::user), Msg("solver", task.input.dump(), Role::assistant)};
    return out;
}

/// Completes `budget` storage writes, then "kills" the run.
class KillingStorage : public FileStorage {
public:
    KillingStorage(fs::path root, int budget) : FileStorage(std::move(root)), budget_(budget) {}

    void save_solution(const std::string& b, const std::string& t, int r, const SolutionOutput& s) override
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

/// (task, repeat) -> (solution json, metric results without timestamps)
using Snapshot = std::map<std::pair<std::string, int>, std::pair<json, json>>;

Snapshot snapshot(const FileStorage& storage, const std::string& bench)
{
    Snapshot out;
    for (auto const& task : storage.list_tasks(bench))
        for (int r : storage.list_repeats(bench, task)) {
            if (!storage.has_evaluation(bench, task, r))
                continue;
            auto results = storage.load_evaluation(bench, task, r).at("results");
            for (auto& m : results)
                m.erase("timestamp");
            auto sol = solution_to_json(storage.load_solution(bench, task, r));
            for (auto& m : sol["trajectory"]) {
                m.erase("id");
                m.erase("timestamp");
            }
            out[{task, r}] = {sol, results};
        }
    return out;
}

std::size_t count_files(const fs::path& root, const std::string& name)
{
    std::size_t n = 0;
    for (auto const& e : fs::recursive_directory_iterator(root))
        n += e.path().filename() == name;
    return n;
}

// Independent percentile bootstrap: draws all indices first, then takes type-7 quantiles
// through nth_element on a copy.
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

} // namespace

TEST(Metrics, ExactMatch)
{
    ExactMatch m(json(5));
    SolutionOutput s;
    s.output = 5;
    EXPECT_EQ(metric_eval(m, s).value, "pass");
    s.output = 6;
    auto r = metric_eval(m, s);
    EXPECT_EQ(r.value, "fail");
    EXPECT_EQ(r.kind, MetricKind::categorical);
    EXPECT_FALSE(r.timestamp.empty());
}

TEST(Metrics, JaccardHandComputed)
{
    EXPECT_DOUBLE_EQ(jaccard_index("a b c", "a b d"), 0.5);
    EXPECT_DOUBLE_EQ(jaccard_index("The cat", "the CAT"), 1.0);
    EXPECT_DOUBLE_EQ(jaccard_index("x", "y"), 0.0);
    Jaccard m(json("red green blue"));
    SolutionOutput s;
    s.output = "red green yellow";
    auto r = metric_eval(m, s);
    EXPECT_EQ(r.kind, MetricKind::numerical);
    EXPECT_DOUBLE_EQ(r.score, 0.5);
}

TEST(Metrics, ThrowingMetricBecomesError)
{
    struct Boom : Metric {
        std::string name() const override { return "boom"; }
        MetricKind kind() const override { return MetricKind::numerical; }
        MetricResult evaluate(const SolutionOutput&) const override { throw std::runtime_error("judge offline"); }
    };
    struct Liar : Metric {
        std::string name() const override { return "liar"; }
        MetricKind kind() const override { return MetricKind::categorical; }
        std::vector<std::string> labels() const override { return {"yes", "no"}; }
        MetricResult evaluate(const SolutionOutput&) const override
        {
            MetricResult r;
            r.name = "liar";
            r.value = "maybe";
            return r;
        }
    };
    auto r = metric_eval(Boom{}, SolutionOutput{});
    EXPECT_EQ(r.value, "error");
    EXPECT_EQ(r.message, "judge offline");
    EXPECT_EQ(metric_eval(Liar{}, SolutionOutput{}).value, "error");
}

TEST(Metrics, ResultJsonRoundTrip)
{
    MetricResult r{"jaccard", MetricKind::numerical, "", 0.25, "2026-01-01T00:00:00Z", "note"};
    auto back = metric_result_from_json(metric_result_to_json(r));
    EXPECT_EQ(back.name, r.name);
    EXPECT_EQ(back.score, r.score);
    EXPECT_EQ(back.message, r.message);
    EXPECT_THROW(metric_result_from_json(json{{"name", "x"}, {"kind", "fuzzy"}}), ParseError);
}

TEST(BenchmarkTest, IndexingAndValidation)
{
    auto b = toy_benchmark(3);
    EXPECT_EQ(b.size(), 3u);
    EXPECT_EQ(b[2].id, "t2");
    EXPECT_THROW(b[3], RangeError);
    EXPECT_EQ(b.task_ids(), (std::vector<std::string>{"t0", "t1", "t2"}));
    EXPECT_THROW(Benchmark("x", {exact_task("a", 1, 1), exact_task("a", 2, 2)}), ValidationError);
    Task bare;
    bare.id = "bare";
    EXPECT_THROW(Benchmark("x", {bare}), ValidationError);
    EXPECT_THROW(Benchmark("x", {exact_task("../escape", 1, 1)}), ValidationError);
}

TEST(BenchmarkTest, LoadFixture)
{
    auto b = load_benchmark(std::string(AGENTLOOM_FIXTURES) + "/toy_arithmetic.json");
    EXPECT_EQ(b.name(), "toy_arithmetic");
    EXPECT_EQ(b.size(), 5u);
    EXPECT_EQ(b[3].ground_truth, 4.5);
    try {
        benchmark_from_json(json{{"name", "x"}, {"tasks", {{{"id", "a"}, {"input", 1}}}}});
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.path(), "tasks[0].ground_truth");
    }
}

TEST(Storage, LayoutAndAtomicWrites)
{
    TempDir dir;
    FileStorage storage(dir.path());
    SequentialEvaluator ev;
    auto b = toy_benchmark(3);
    auto summary = ev.run(b, [](const Task& t, const PreHook&) { return echo(t); }, 2, storage);
    EXPECT_EQ(summary.units, 6u);
    EXPECT_EQ(summary.executed, 6u);
    EXPECT_EQ(count_files(dir.path(), "solution.json"), 6u);
    for (auto const& t : {"t0", "t1", "t2"})
        for (int r : {0, 1}) {
            auto unit = dir.path() / "toy" / t / std::to_string(r);
            EXPECT_TRUE(fs::exists(unit / "solution.json"));
            EXPECT_TRUE(fs::exists(unit / "evaluation.json"));
            auto eval = json::parse(std::ifstream(unit / "evaluation.json"));
            EXPECT_TRUE(eval["results"].is_array());
            EXPECT_TRUE(eval["meta"].contains("started_at"));
            EXPECT_TRUE(eval["meta"].contains("finished_at"));
        }
    // Nothing but the two artifacts per unit.
    std::size_t files = 0;
    for (auto const& e : fs::recursive_directory_iterator(dir.path()))
        files += e.is_regular_file();
    EXPECT_EQ(files, 12u);
    EXPECT_EQ(storage.list_benchmarks(), std::vector<std::string>{"toy"});
    EXPECT_EQ(storage.list_repeats("toy", "t1"), (std::vector<int>{0, 1}));
}

TEST(Storage, MalformedListingNamesPath)
{
    TempDir dir;
    FileStorage storage(dir.path());
    fs::create_directories(dir.path() / "b" / "task" / "not-a-number");
    try {
        storage.list_repeats("b", "task");
        FAIL();
    } catch (const StorageError& e) {
        EXPECT_NE(std::string(e.what()).find("not-a-number"), std::string::npos);
    }
}

TEST(Sequential, PreSeededUnitIsSkipped)
{
    TempDir dir;
    FileStorage storage(dir.path());
    auto b = toy_benchmark(3);
    std::atomic<int> runs{0};
    SolutionFn fn = [&](const Task& t, const PreHook&) {
        ++runs;
        return echo(t);
    };
    run_sequential(Benchmark("toy", {b[0]}), fn, 1, storage);
    runs = 0;
    auto s = run_sequential(b, fn, 2, storage);
    EXPECT_EQ(runs, 5);
    EXPECT_EQ(s.executed, 5u);
    EXPECT_EQ(s.skipped, 1u);
}

TEST(Sequential, CrashAfterFirstTaskThenRerun)
{
    TempDir dir;
    auto b = toy_benchmark(3);
    std::atomic<int> runs{0};
    SolutionFn fn = [&](const Task& t, const PreHook&) {
        ++runs;
        return echo(t);
    };
    // Two repeats of the first task write four files; the fifth write dies.
    KillingStorage dying(dir.path(), 4);
    EXPECT_THROW(run_sequential(b, fn, 2, dying), StorageError);
    EXPECT_EQ(runs, 3);
    FileStorage storage(dir.path());
    auto s = run_sequential(b, fn, 2, storage);
    EXPECT_EQ(s.skipped, 2u);
    EXPECT_EQ(runs, 3 + 4);
    EXPECT_EQ(count_files(dir.path(), "evaluation.json"), 6u);
}

TEST(Sequential, TaskFailureIsRecorded)
{
    TempDir dir;
    FileStorage storage(dir.path());
    std::vector<std::string> phases;
    auto s = run_sequential(
        toy_benchmark(2),
        [&](const Task& t, const PreHook& pre) -> SolutionOutput {
            pre("start");
            phases.emplace_back("start");
            if (t.id == "t0")
                throw std::runtime_error("tool crashed");
            return echo(t);
        },
        1, storage);
    EXPECT_EQ(s.failed, 1u);
    EXPECT_EQ(s.executed, 2u);
    EXPECT_EQ(phases.size(), 2u);
    auto sol = storage.load_solution("toy", "t0", 0);
    EXPECT_FALSE(sol.success);
    EXPECT_EQ(sol.output["error"], "tool crashed");
    EXPECT_TRUE(storage.has_evaluation("toy", "t0", 0));
}

TEST(Parallel, WorkerDeathRetriedOnceThenFailed)
{
    TempDir dir;
    FileStorage storage(dir.path());
    std::map<std::string, int> attempts;
    std::mutex m;
    auto s = run_parallel(
        toy_benchmark(2), [&](const Task& t, const PreHook&) -> SolutionOutput {
            int n;
            {
                std::lock_guard lock(m);
                n = ++attempts[t.id];
            }
            if (t.id == "t0" || n == 1)
                throw WorkerDeath("segfault in worker");
            return echo(t);
        },
        1, 2, storage);
    EXPECT_EQ(attempts["t0"], 2);
    EXPECT_EQ(attempts["t1"], 2);
    EXPECT_EQ(s.failed, 1u);
    EXPECT_FALSE(storage.load_solution("toy", "t0", 0).success);
    EXPECT_TRUE(storage.load_solution("toy", "t1", 0).success);
}

TEST(Parallel, IdenticalResultsAcrossWorkerCounts)
{
    auto b = toy_benchmark(12);
    SolutionFn fn = [](const Task& t, const PreHook&) { return echo(t); };
    TempDir dir;
    FileStorage seq(dir.path() / "seq");
    run_sequential(b, fn, 3, seq);
    auto reference = snapshot(seq, "toy");
    ASSERT_EQ(reference.size(), 36u);
    for (int workers : {1, 2, 4}) {
        FileStorage storage(dir.path() / std::to_string(workers));
        auto s = ParallelEvaluator(workers).run(b, fn, 3, storage);
        EXPECT_EQ(s.executed, 36u);
        EXPECT_EQ(snapshot(storage, "toy"), reference) << workers << " workers";
    }
}

TEST(Parallel, SleepTasksScale)
{
    auto b = toy_benchmark(8);
    SolutionFn fn = [](const Task& t, const PreHook&) {
        std::this_thread::sleep_for(150ms);
        return echo(t);
    };
    bool ok = false;
    for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
        TempDir dir;
        FileStorage a(dir.path() / "a"), c(dir.path() / "c");
        auto seq = run_sequential(b, fn, 1, a);
        auto par = run_parallel(b, fn, 1, 4, c);
        ok = par.elapsed_seconds < 0.5 * seq.elapsed_seconds;
    }
    EXPECT_TRUE(ok);
}

TEST(Parallel, StorageFailureAborts)
{
    TempDir dir;
    KillingStorage storage(dir.path(), 3);
    EXPECT_THROW(run_parallel(toy_benchmark(10), [](const Task& t, const PreHook&) { return echo(t); }, 1, 3, storage),
                 StorageError);
}

TEST(Resumption, RandomKillPointsLeaveNoGapsOrDuplicates)
{
    std::mt19937 rng(31);
    auto b = toy_benchmark(20);
    int const repeats = 2;
    SolutionFn fn = [](const Task& t, const PreHook&) { return echo(t); };
    for (int trial = 0; trial < 12; ++trial) {
        TempDir dir;
        int workers = std::vector<int>{1, 2, 4}[rng() % 3];
        int kills = 1 + rng() % 3;
        for (int k = 0; k < kills; ++k) {
            KillingStorage dying(dir.path(), static_cast<int>(rng() % 80));
            try {
                run_parallel(b, fn, repeats, workers, dying);
            } catch (const StorageError&) {
            }
        }
        FileStorage storage(dir.path());
        auto s = run_parallel(b, fn, repeats, workers, storage);
        EXPECT_EQ(s.executed + s.skipped, 40u);
        EXPECT_EQ(count_files(dir.path(), "evaluation.json"), 40u);
        for (auto const& task : b)
            for (int r = 0; r < repeats; ++r)
                EXPECT_TRUE(storage.has_evaluation("toy", task.id, r));
        auto rerun = run_parallel(b, fn, repeats, workers, storage);
        EXPECT_EQ(rerun.executed, 0u);
        EXPECT_EQ(rerun.skipped, 40u);
    }
}

TEST(Aggregate, AllPassIsConsistentlyCorrect)
{
    TempDir dir;
    FileStorage storage(dir.path());
    Benchmark b("ok", {exact_task("a", 1, 1), exact_task("b", 2, 2)});
    run_sequential(b, [](const Task& t, const PreHook&) { return echo(t); }, 2, storage);
    auto report = aggregate(storage, b);
    ASSERT_EQ(report.metrics.size(), 1u);
    auto const& m = report.metrics[0];
    EXPECT_EQ(m.pass_rate, 1.0);
    EXPECT_EQ(m.ci.low, 1.0);
    EXPECT_EQ(m.ci.high, 1.0);
    EXPECT_EQ(m.stddev, 0.0);
    for (auto const& [task, cohort] : m.cohorts)
        EXPECT_EQ(cohort, kConsistentlyCorrect);
    EXPECT_EQ(report.repeats, (std::vector<int>{0, 1}));
    EXPECT_EQ(report.completed_units, 4u);
}

TEST(Aggregate, CohortsAndStats)
{
    TempDir dir;
    FileStorage storage(dir.path());
    Benchmark b("mix", {exact_task("always", 1, 1), exact_task("never", 1, 2), exact_task("flaky", 1, 1)});
    run_sequential(
        b,
        [](const Task& t, const PreHook&) {
            static std::atomic<int> flaky{0};
            auto out = echo(t);
            if (t.id == "flaky" && flaky++ % 2)
                out.output = 0;
            return out;
        },
        2, storage);
    auto report = aggregate(storage, b);
    auto const& m = report.metrics.at(0);
    EXPECT_EQ(m.cohorts.at("always"), kConsistentlyCorrect);
    EXPECT_EQ(m.cohorts.at("never"), kConsistentlyIncorrect);
    EXPECT_EQ(m.cohorts.at("flaky"), kUnstable);
    EXPECT_DOUBLE_EQ(*m.pass_rate, 0.5);
    EXPECT_EQ(m.label_counts.at("pass"), 3u);
    EXPECT_EQ(m.label_counts.at("fail"), 3u);
    // Repeat 0: always+flaky pass (2/3); repeat 1: only always (1/3).
    EXPECT_NEAR(m.stddev, std::sqrt(2.0 * std::pow(1.0 / 6, 2)), 1e-12);
}

TEST(Aggregate, PureFunctionOfStorage)
{
    TempDir dir;
    FileStorage storage(dir.path());
    auto b = toy_benchmark(6);
    run_sequential(b, [](const Task& t, const PreHook&) { return echo(t); }, 3, storage);
    auto a = report_to_json(aggregate(storage, b));
    auto c = report_to_json(aggregate(storage, "toy"));
    EXPECT_EQ(a, c);
    EXPECT_EQ(a["bootstrap"]["resamples"], 1000);
    EXPECT_EQ(a["bootstrap"]["seed"], 0);
    EXPECT_EQ(a["bootstrap"]["method"], "percentile");
    for (auto const* key : {"name", "kind", "samples", "mean", "stddev", "pass_rate", "ci", "cohorts"})
        EXPECT_TRUE(a["metrics"][0].contains(key)) << key;
}

TEST(Aggregate, EmptyStorage)
{
    TempDir dir;
    FileStorage storage(dir.path());
    EXPECT_THROW(aggregate(storage, toy_benchmark(2)), EmptyReportError);
}

TEST(Bootstrap, MatchesIndependentOracle)
{
    std::mt19937_64 gen(99);
    for (int v = 0; v < 10; ++v) {
        std::size_t n = 5 + gen() % 60;
        std::vector<double> values(n);
        std::uniform_real_distribution<double> dist(-3, 7);
        for (auto& x : values)
            x = v % 3 == 0 ? double(gen() % 2) : dist(gen);
        BootstrapOptions opts;
        opts.seed = gen();
        auto ci = bootstrap_mean_ci(values, opts);
        auto [lo, hi] = oracle_bootstrap(values, opts.resamples, opts.seed, opts.confidence);
        EXPECT_NEAR(ci.low, lo, 1e-9);
        EXPECT_NEAR(ci.high, hi, 1e-9);
        EXPECT_LE(ci.low, ci.high);
    }
}

TEST(Bootstrap, Validation)
{
    EXPECT_THROW(bootstrap_mean_ci({}), ValidationError);
    BootstrapOptions bad;
    bad.confidence = 1.0;
    EXPECT_THROW(bootstrap_mean_ci({1.0}, bad), ValidationError);
    auto ci = bootstrap_mean_ci({2.0, 2.0, 2.0});
    EXPECT_EQ(ci.low, 2.0);
    EXPECT_EQ(ci.high, 2.0);
}
