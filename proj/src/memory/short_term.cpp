// SPDX-License-Identifier: Apache-2.0
#include "agentloom/errors.hpp"
#include "agentloom/memory.hpp"

#include <fmt/format.h>

namespace agentloom {

void MemoryBase::add(const std::vector<Msg>& msgs)
{
    for (auto const& m : msgs)
        add(m);
}

InMemoryMemory::InMemoryMemory()
{
    register_state(
        "content",
        [this] {
            json arr = json::array();
            std::lock_guard lock(mutex_);
            for (auto const& m : entries_)
                arr.push_back(msg_to_json_value(m));
            return arr;
        },
        [this](const json& j) {
            if (!j.is_array())
                throw StateError("memory content must be an array");
            std::vector<Msg> loaded;
            for (std::size_t i = 0; i < j.size(); ++i)
                loaded.push_back(msg_from_json_value(j[i], fmt::format("content[{}]", i)));
            std::lock_guard lock(mutex_);
            entries_.clear();
            ids_.clear();
            for (auto& m : loaded)
                if (ids_.insert(m.id()).second)
                    entries_.push_back(std::move(m));
        });
}

void InMemoryMemory::add(const Msg& msg)
{
    std::lock_guard lock(mutex_);
    if (!ids_.insert(msg.id()).second)
        return;
    entries_.push_back(msg);
}

std::vector<Msg> InMemoryMemory::get_all() const
{
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<Msg> InMemoryMemory::get_range(std::size_t start, std::size_t end) const
{
    std::lock_guard lock(mutex_);
    if (start > end || end > entries_.size())
        throw RangeError(
            fmt::format("range [{}, {}) out of bounds for size {}", start, end, entries_.size()));
    return {entries_.begin() + static_cast<std::ptrdiff_t>(start),
            entries_.begin() + static_cast<std::ptrdiff_t>(end)};
}

void InMemoryMemory::erase(std::size_t index)
{
    std::lock_guard lock(mutex_);
    if (index >= entries_.size())
        throw RangeError(fmt::format("index {} out of bounds for size {}", index, entries_.size()));
    ids_.erase(entries_[index].id());
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(index));
}

void InMemoryMemory::clear()
{
    std::lock_guard lock(mutex_);
    entries_.clear();
    ids_.clear();
}

std::size_t InMemoryMemory::size() const
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

} // namespace agentloom
