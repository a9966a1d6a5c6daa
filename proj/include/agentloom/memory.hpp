// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"
#include "agentloom/state.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

namespace agentloom {

class MemoryBase : public StateModule {
public:
    virtual void add(const Msg& msg) = 0;
    virtual void add(const std::vector<Msg>& msgs);
    virtual std::vector<Msg> get_all() const = 0;
    /// Half-open slice [start, end). Throws RangeError when out of bounds.
    virtual std::vector<Msg> get_range(std::size_t start, std::size_t end) const = 0;
    /// Throws RangeError for a bad index.
    virtual void erase(std::size_t index) = 0;
    virtual void clear() = 0;
    virtual std::size_t size() const = 0;
};

/// Ordered in-memory list of messages. Adding a message whose id is already present is a no-op.
class InMemoryMemory : public MemoryBase {
public:
    InMemoryMemory();

    using MemoryBase::add;
    void add(const Msg& msg) override;
    std::vector<Msg> get_all() const override;
    std::vector<Msg> get_range(std::size_t start, std::size_t end) const override;
    void erase(std::size_t index) override;
    void clear() override;
    std::size_t size() const override;

private:
    mutable std::mutex mutex_;
    std::vector<Msg> entries_;
    std::unordered_set<std::string> ids_;
};

enum class RecordSource { developer, agent };

std::string_view to_string(RecordSource source);

struct LongTermRecord {
    std::string id;
    std::string text;
    std::vector<std::string> keywords;
    std::string created_at;
    RecordSource source = RecordSource::developer;

    bool operator==(const LongTermRecord&) const = default;
};

json record_to_json(const LongTermRecord& r);
LongTermRecord record_from_json(const json& j);

/// Which long-term paradigm is active: static (developer-driven record/retrieve around each
/// reply), agent (two tools the agent calls itself), or both.
enum class LongTermMode { agent_control, static_control, both };

LongTermMode parse_long_term_mode(std::string_view text);
bool static_enabled(LongTermMode mode);
bool agent_enabled(LongTermMode mode);

class LongTermMemoryBase {
public:
    virtual ~LongTermMemoryBase() = default;

    /// Developer-controlled: one record per message with non-empty text. Returns records written.
    virtual std::size_t record(const std::vector<Msg>& msgs) = 0;
    /// Developer-controlled: top-k record texts relevant to the messages.
    virtual std::vector<std::string> retrieve(const std::vector<Msg>& msgs, std::size_t k = 5) const = 0;
    /// Agent-controlled: stores a thought under the given keywords. Returns a confirmation.
    virtual std::string record_to_memory(const std::string& thought,
                                         const std::vector<std::string>& keywords) = 0;
    /// Agent-controlled: top-5 record texts for the keywords.
    virtual std::vector<std::string> retrieve_from_memory(
        const std::vector<std::string>& keywords) const = 0;
};

/// Lowercased, stop-word filtered, de-duplicated alphanumeric terms in order of appearance.
std::vector<std::string> extract_keywords(std::string_view text);

const std::vector<std::string>& stop_words();

/// Keyword-overlap long-term store backed by an append-only JSON-lines file (or nothing).
/// Ranking: overlap count with the query keywords, ties newest first; zero overlap excluded.
class KeywordStore : public LongTermMemoryBase {
public:
    /// Loads existing records from `path` when given.
    explicit KeywordStore(std::optional<std::filesystem::path> path = std::nullopt);

    std::size_t record(const std::vector<Msg>& msgs) override;
    std::vector<std::string> retrieve(const std::vector<Msg>& msgs, std::size_t k = 5) const override;
    std::string record_to_memory(const std::string& thought,
                                 const std::vector<std::string>& keywords) override;
    std::vector<std::string> retrieve_from_memory(
        const std::vector<std::string>& keywords) const override;

    /// Ranked texts for an explicit keyword set.
    std::vector<std::string> search(const std::vector<std::string>& keywords, std::size_t k) const;

    std::vector<LongTermRecord> records() const;
    /// Drops all records and truncates the backing file.
    void clear();

private:
    void append(std::vector<LongTermRecord> batch);

    std::optional<std::filesystem::path> path_;
    mutable std::shared_mutex mutex_;
    std::vector<LongTermRecord> records_;
};

} // namespace agentloom
