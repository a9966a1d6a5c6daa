// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"

#include <functional>
#include <string>
#include <vector>

namespace agentloom {

/// Compositional save/restore. Attributes and child modules are registered by name; the
/// state dict is a JSON object keyed by those names, children nested recursively.
class StateModule {
public:
    using Getter = std::function<json()>;
    using Setter = std::function<void(const json&)>;

    StateModule() = default;
    virtual ~StateModule() = default;

    // Registrations bind to `this`; copying would leave them pointing at the source.
    StateModule(const StateModule&) = delete;
    StateModule& operator=(const StateModule&) = delete;

    virtual json state_dict() const;

    /// Throws StateError listing missing and extra keys when the shape does not match.
    virtual void load_state_dict(const json& state);

    void register_state(std::string name, Getter get, Setter set);

    template <class T>
    void register_state(std::string name, T& attribute)
    {
        register_state(
            std::move(name), [&attribute] { return json(attribute); },
            [&attribute](const json& j) { attribute = j.get<T>(); });
    }

    void register_module(std::string name, StateModule& child);

    /// Registered attribute and module names, in registration order.
    std::vector<std::string> state_keys() const;

private:
    struct Entry {
        std::string name;
        Getter get;
        Setter set;
        StateModule* child = nullptr;
    };

    Entry& slot(const std::string& name);
    void check_shape(const json& state, const std::string& prefix) const;

    std::vector<Entry> entries_;
};

} // namespace agentloom
