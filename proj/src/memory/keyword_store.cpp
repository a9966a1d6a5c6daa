// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/memory.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>

namespace agentloom {

std::string_view to_string(RecordSource source)
{
    return source == RecordSource::developer ? "developer" : "agent";
}

json record_to_json(const LongTermRecord& r)
{
    return {{"id", r.id},
            {"text", r.text},
            {"keywords", r.keywords},
            {"created_at", r.created_at},
            {"source", to_string(r.source)}};
}

LongTermRecord record_from_json(const json& j)
{
    LongTermRecord r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.keywords = j.at("keywords").get<std::vector<std::string>>();
    r.created_at = j.at("created_at").get<std::string>();
    auto const source = j.at("source").get<std::string>();
    if (source != "developer" && source != "agent")
        throw ParseError("source", fmt::format("unknown record source '{}'", source));
    r.source = source == "developer" ? RecordSource::developer : RecordSource::agent;
    if (r.text.empty() || r.keywords.empty())
        throw ParseError("", "record text and keywords must be non-empty");
    return r;
}

LongTermMode parse_long_term_mode(std::string_view text)
{
    if (text == "agent_control")
        return LongTermMode::agent_control;
    if (text == "static_control")
        return LongTermMode::static_control;
    if (text == "both")
        return LongTermMode::both;
    throw ValidationError(fmt::format("unknown long-term memory mode '{}'", text));
}

bool static_enabled(LongTermMode mode)
{
    return mode != LongTermMode::agent_control;
}

bool agent_enabled(LongTermMode mode)
{
    return mode != LongTermMode::static_control;
}

const std::vector<std::string>& stop_words()
{
    static const std::vector<std::string> words{
        "a",    "an",   "the",   "and",  "or",   "but",  "if",   "of",   "to",    "in",
        "on",   "at",   "for",   "with", "by",   "from", "as",   "is",   "are",   "was",
        "were", "be",   "been",  "am",   "it",   "its",  "this", "that", "these", "those",
        "i",    "me",   "my",    "we",   "our",  "you",  "your", "he",   "she",   "they",
        "them", "his",  "her",   "their", "do",  "does", "did",  "not",  "so",    "have"};
    return words;
}

std::vector<std::string> extract_keywords(std::string_view text)
{
    static const std::set<std::string, std::less<>> stops(stop_words().begin(), stop_words().end());
    std::vector<std::string> out;
    std::set<std::string, std::less<>> seen;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !stops.count(current) && seen.insert(current).second)
            out.push_back(current);
        current.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            current.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return out;
}

KeywordStore::KeywordStore(std::optional<std::filesystem::path> path) : path_(std::move(path))
{
    if (!path_ || !std::filesystem::exists(*path_))
        return;
    std::ifstream in(*path_);
    if (!in)
        throw StorageError(fmt::format("cannot read long-term store '{}'", path_->string()));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            records_.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            // A torn final line from an interrupted append is skipped; anything else is fatal.
            if (in.peek() == std::char_traits<char>::eof()) {
                spdlog::warn("long-term store {}: skipping torn line {}", path_->string(), lineno);
                continue;
            }
            throw StorageError(
                fmt::format("long-term store {} line {}: {}", path_->string(), lineno, e.what()));
        }
    }
}

void KeywordStore::append(std::vector<LongTermRecord> batch)
{
    if (batch.empty())
        return;
    std::unique_lock lock(mutex_);
    if (path_) {
        std::ofstream out(*path_, std::ios::app);
        for (auto const& r : batch)
            out << record_to_json(r).dump() << '\n';
        out.flush();
        if (!out)
            throw StorageError(fmt::format("cannot append to long-term store '{}'", path_->string()));
    }
    for (auto& r : batch)
        records_.push_back(std::move(r));
}

std::size_t KeywordStore::record(const std::vector<Msg>& msgs)
{
    std::vector<LongTermRecord> batch;
    for (auto const& m : msgs) {
        auto text = m.get_text_content();
        if (!text || text->empty())
            continue;
        auto keywords = extract_keywords(*text);
        if (keywords.empty())
            continue;
        batch.push_back({random_hex_id(), *text, std::move(keywords), now_rfc3339(),
                         RecordSource::developer});
    }
    auto const n = batch.size();
    append(std::move(batch));
    return n;
}

std::vector<std::string> KeywordStore::search(const std::vector<std::string>& keywords,
                                              std::size_t k) const
{
    if (k == 0)
        throw ValidationError("k must be at least 1");
    std::set<std::string> query;
    for (auto const& kw : keywords)
        for (auto& t : extract_keywords(kw))
            query.insert(std::move(t));

    std::shared_lock lock(mutex_);
    struct Scored {
        std::size_t overlap;
        std::size_t position;
    };
    std::vector<Scored> scored;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        std::size_t overlap = 0;
        for (auto const& kw : records_[i].keywords)
            overlap += query.count(kw);
        if (overlap > 0)
            scored.push_back({overlap, i});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.overlap != b.overlap)
            return a.overlap > b.overlap;
        return a.position > b.position;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i)
        out.push_back(records_[scored[i].position].text);
    return out;
}

std::vector<std::string> KeywordStore::retrieve(const std::vector<Msg>& msgs, std::size_t k) const
{
    std::vector<std::string> keywords;
    for (auto const& m : msgs)
        if (auto text = m.get_text_content())
            for (auto& kw : extract_keywords(*text))
                keywords.push_back(std::move(kw));
    return search(keywords, k);
}

std::string KeywordStore::record_to_memory(const std::string& thought,
                                           const std::vector<std::string>& keywords)
{
    if (thought.empty())
        throw ValidationError("thought must be non-empty");
    std::vector<std::string> normalized;
    for (auto const& kw : keywords)
        for (auto& t : extract_keywords(kw))
            if (std::find(normalized.begin(), normalized.end(), t) == normalized.end())
                normalized.push_back(std::move(t));
    if (normalized.empty())
        throw ValidationError("keywords must be non-empty");
    append({{random_hex_id(), thought, normalized, now_rfc3339(), RecordSource::agent}});
    return fmt::format("Successfully recorded to memory: {}", thought);
}

std::vector<std::string> KeywordStore::retrieve_from_memory(const std::vector<std::string>& keywords) const
{
    if (keywords.empty())
        throw ValidationError("keywords must be non-empty");
    return search(keywords, 5);
}

std::vector<LongTermRecord> KeywordStore::records() const
{
    std::shared_lock lock(mutex_);
    return records_;
}

void KeywordStore::clear()
{
    std::unique_lock lock(mutex_);
    records_.clear();
    if (path_) {
        std::ofstream out(*path_, std::ios::trunc);
        if (!out)
            throw StorageError(fmt::format("cannot truncate long-term store '{}'", path_->string()));
    }
}

} // namespace agentloom
