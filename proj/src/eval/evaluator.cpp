// SPDX-License-Identifier: Apache-2.0
#include "agentloom/eval.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <new>
#include <thread>

namespace agentloom::eval {

namespace {

struct Unit {
    const Task* task;
    int repeat;
};

std::vector<Unit> units_of(const Benchmark& benchmark, int repeats)
{
    if (repeats < 1)
        throw ValidationError(fmt::format("repeats must be at least 1, got {}", repeats));
    std::vector<Unit> out;
    for (auto const& task : benchmark)
        for (int r = 0; r < repeats; ++r)
            out.push_back({&task, r});
    return out;
}

SolutionOutput failed_solution(const std::string& message)
{
    SolutionOutput s;
    s.success = false;
    s.output = json{{"error", message}};
    return s;
}

enum class Outcome { skipped, executed, failed };

// Storage errors escape; everything the solution throws is recorded.
Outcome run_unit(const Benchmark& benchmark, const Unit& unit, const SolutionFn& solution, FileStorage& storage)
{
    auto const& task = *unit.task;
    if (storage.has_evaluation(benchmark.name(), task.id, unit.repeat))
        return Outcome::skipped;

    auto const started = now_rfc3339();
    PreHook pre_hook = [&](std::string_view phase) {
        spdlog::debug("{}/{}/{}: {}", benchmark.name(), task.id, unit.repeat, phase);
    };

    SolutionOutput out;
    bool failed = false;
    for (int attempt = 0;; ++attempt) {
        try {
            out = solution(task, pre_hook);
            break;
        } catch (const WorkerDeath& e) {
            if (attempt == 0) {
                spdlog::warn("worker died on {}/{}: {}; retrying", task.id, unit.repeat, e.what());
                continue;
            }
            out = failed_solution(fmt::format("worker died: {}", e.what()));
        } catch (const std::bad_alloc&) {
            if (attempt == 0) {
                spdlog::warn("worker ran out of memory on {}/{}; retrying", task.id, unit.repeat);
                continue;
            }
            out = failed_solution("worker died: out of memory");
        } catch (const std::exception& e) {
            out = failed_solution(e.what());
        } catch (...) {
            out = failed_solution("unknown error");
        }
        failed = true;
        break;
    }

    storage.save_solution(benchmark.name(), task.id, unit.repeat, out);

    json results = json::array();
    for (auto const& metric : task.metrics)
        results.push_back(metric_result_to_json(metric_eval(*metric, out)));
    json evaluation{{"results", std::move(results)},
                    {"meta", {{"started_at", started}, {"finished_at", now_rfc3339()}, {"success", out.success}}}};
    storage.save_evaluation(benchmark.name(), task.id, unit.repeat, evaluation);
    return failed ? Outcome::failed : Outcome::executed;
}

void tally(EvalSummary& s, Outcome o)
{
    switch (o) {
    case Outcome::skipped: ++s.skipped; break;
    case Outcome::executed: ++s.executed; break;
    case Outcome::failed:
        ++s.executed;
        ++s.failed;
        break;
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

EvalSummary SequentialEvaluator::run(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                                     FileStorage& storage)
{
    auto const t0 = std::chrono::steady_clock::now();
    auto const units = units_of(benchmark, repeats);
    EvalSummary s;
    s.benchmark = benchmark.name();
    s.units = units.size();
    for (auto const& u : units)
        tally(s, run_unit(benchmark, u, solution, storage));
    s.elapsed_seconds = seconds_since(t0);
    return s;
}

ParallelEvaluator::ParallelEvaluator(int workers) : workers_(workers)
{
    if (workers < 1)
        throw ValidationError(fmt::format("workers must be at least 1, got {}", workers));
}

EvalSummary ParallelEvaluator::run(const Benchmark& benchmark, const SolutionFn& solution, int repeats,
                                   FileStorage& storage)
{
    auto const t0 = std::chrono::steady_clock::now();
    auto const units = units_of(benchmark, repeats);
    EvalSummary s;
    s.benchmark = benchmark.name();
    s.units = units.size();

    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex mutex;
    std::exception_ptr error;

    auto worker = [&] {
        while (!abort.load()) {
            auto const i = next.fetch_add(1);
            if (i >= units.size())
                return;
            try {
                auto const o = run_unit(benchmark, units[i], solution, storage);
                std::lock_guard lock(mutex);
                tally(s, o);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!error)
                    error = std::current_exception();
                abort = true;
            }
        }
    };

    auto const n = std::min<std::size_t>(static_cast<std::size_t>(workers_), units.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
    s.elapsed_seconds = seconds_since(t0);
    return s;
}

EvalSummary run_sequential(const Benchmark& benchmark, const SolutionFn& solution, int repeats, FileStorage& storage)
{
    return SequentialEvaluator{}.run(benchmark, solution, repeats, storage);
}

EvalSummary run_parallel(const Benchmark& benchmark, const SolutionFn& solution, int repeats, int workers,
                         FileStorage& storage)
{
    return ParallelEvaluator{workers}.run(benchmark, solution, repeats, storage);
}

} // namespace agentloom::eval
