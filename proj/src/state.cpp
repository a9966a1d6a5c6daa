// SPDX-License-Identifier: Apache-2.0
#include "agentloom/state.hpp"

#include "agentloom/errors.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>

namespace agentloom {

StateModule::Entry& StateModule::slot(const std::string& name)
{
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.name == name; });
    if (it != entries_.end())
        return *it;
    return entries_.emplace_back(Entry{name, {}, {}, nullptr});
}

void StateModule::register_state(std::string name, Getter get, Setter set)
{
    auto& e = slot(name);
    e.get = std::move(get);
    e.set = std::move(set);
    e.child = nullptr;
}

void StateModule::register_module(std::string name, StateModule& child)
{
    if (&child == this)
        throw ValidationError("a state module cannot contain itself");
    auto& e = slot(name);
    e.get = {};
    e.set = {};
    e.child = &child;
}

std::vector<std::string> StateModule::state_keys() const
{
    std::vector<std::string> keys;
    for (auto const& e : entries_)
        keys.push_back(e.name);
    return keys;
}

json StateModule::state_dict() const
{
    json out = json::object();
    for (auto const& e : entries_)
        out[e.name] = e.child ? e.child->state_dict() : e.get();
    return out;
}

void StateModule::check_shape(const json& state, const std::string& prefix) const
{
    if (!state.is_object())
        throw StateError(fmt::format("state at '{}' must be a JSON object", prefix.empty() ? "." : prefix));
    std::vector<std::string> missing;
    std::vector<std::string> extra;
    for (auto const& e : entries_)
        if (!state.contains(e.name))
            missing.push_back(prefix + e.name);
    for (auto const& [k, v] : state.items())
        if (std::none_of(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.name == k; }))
            extra.push_back(prefix + k);
    if (!missing.empty() || !extra.empty())
        throw StateError(fmt::format("state shape mismatch; missing keys: [{}], extra keys: [{}]",
                                     fmt::join(missing, ", "), fmt::join(extra, ", ")));
    for (auto const& e : entries_)
        if (e.child)
            e.child->check_shape(state.at(e.name), prefix + e.name + ".");
}

void StateModule::load_state_dict(const json& state)
{
    check_shape(state, "");
    for (auto const& e : entries_) {
        auto const& value = state.at(e.name);
        if (e.child) {
            e.child->load_state_dict(value);
            continue;
        }
        try {
            e.set(value);
        } catch (const json::exception& ex) {
            throw StateError(fmt::format("state key '{}': {}", e.name, ex.what()));
        }
    }
}

} // namespace agentloom
