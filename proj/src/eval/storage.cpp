// SPDX-License-Identifier: Apache-2.0
#include "agentloom/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>

#include <unistd.h>

namespace agentloom::eval {

namespace fs = std::filesystem;

FileStorage::FileStorage(fs::path root) : root_(std::move(root)) {}

fs::path FileStorage::unit_dir(const std::string& benchmark, const std::string& task, int repeat) const
{
    return root_ / benchmark / task / std::to_string(repeat);
}

bool FileStorage::has_evaluation(const std::string& benchmark, const std::string& task, int repeat) const
{
    std::error_code ec;
    return fs::is_regular_file(unit_dir(benchmark, task, repeat) / "evaluation.json", ec);
}

void FileStorage::write_json_atomic(const fs::path& path, const json& value) const
{
    static std::atomic<unsigned> counter{0};
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec)
        throw StorageError(fmt::format("cannot create '{}': {}", path.parent_path().string(), ec.message()));
    auto tmp = path;
    tmp += fmt::format(".tmp.{}.{}", ::getpid(), counter++);
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw StorageError(fmt::format("cannot write '{}'", tmp.string()));
        out << value.dump(2) << '\n';
        out.flush();
        if (!out)
            throw StorageError(fmt::format("write to '{}' failed", tmp.string()));
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw StorageError(fmt::format("cannot rename into '{}'", path.string()));
    }
}

void FileStorage::save_solution(const std::string& benchmark, const std::string& task, int repeat,
                                const SolutionOutput& solution)
{
    write_json_atomic(unit_dir(benchmark, task, repeat) / "solution.json", solution_to_json(solution));
}

void FileStorage::save_evaluation(const std::string& benchmark, const std::string& task, int repeat,
                                  const json& evaluation)
{
    write_json_atomic(unit_dir(benchmark, task, repeat) / "evaluation.json", evaluation);
}

namespace {

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw StorageError(fmt::format("cannot open '{}'", path.string()));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw StorageError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
}

std::vector<std::string> subdirectories(const fs::path& dir)
{
    std::vector<std::string> out;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        return out;
    for (auto const& e : fs::directory_iterator(dir, ec))
        if (e.is_directory())
            out.push_back(e.path().filename().string());
    if (ec)
        throw StorageError(fmt::format("cannot list '{}': {}", dir.string(), ec.message()));
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

SolutionOutput FileStorage::load_solution(const std::string& benchmark, const std::string& task, int repeat) const
{
    auto const path = unit_dir(benchmark, task, repeat) / "solution.json";
    try {
        return solution_from_json(read_json(path));
    } catch (const ParseError& e) {
        throw StorageError(fmt::format("'{}': {}", path.string(), e.what()));
    }
}

json FileStorage::load_evaluation(const std::string& benchmark, const std::string& task, int repeat) const
{
    auto const path = unit_dir(benchmark, task, repeat) / "evaluation.json";
    auto j = read_json(path);
    if (!j.is_object() || !j.contains("results") || !j.at("results").is_array())
        throw StorageError(fmt::format("'{}': expected an object with a results array", path.string()));
    return j;
}

std::vector<std::string> FileStorage::list_benchmarks() const
{
    return subdirectories(root_);
}

std::vector<std::string> FileStorage::list_tasks(const std::string& benchmark) const
{
    return subdirectories(root_ / benchmark);
}

std::vector<int> FileStorage::list_repeats(const std::string& benchmark, const std::string& task) const
{
    std::vector<int> out;
    for (auto const& name : subdirectories(root_ / benchmark / task)) {
        int r = 0;
        auto [p, ec] = std::from_chars(name.data(), name.data() + name.size(), r);
        if (ec != std::errc() || p != name.data() + name.size() || r < 0)
            throw StorageError(
                fmt::format("'{}' is not a repeat directory", (root_ / benchmark / task / name).string()));
        out.push_back(r);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace agentloom::eval
