// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"
#include "agentloom/model.hpp"

#include <memory>
#include <span>

namespace agentloom {

/// Turns a Msg history into the chat-completions message shape.
class Formatter {
public:
    explicit Formatter(Capabilities caps = {}) : caps_(caps) {}
    virtual ~Formatter() = default;

    virtual FormattedPrompt format(std::span<const Msg> history) const = 0;

    const Capabilities& capabilities() const noexcept { return caps_; }

protected:
    Capabilities caps_;
};

/// One user, one assistant, plus system. Tool use and tool result blocks become native
/// `tool_calls` / `tool` entries; local media files are inlined as base64 data URLs.
class ChatFormatter : public Formatter {
public:
    using Formatter::Formatter;
    FormattedPrompt format(std::span<const Msg> history) const override;
};

/// Many named speakers. Consecutive plain messages fold into one user entry holding a
/// `<history>` transcript of `Name: text` lines; tool traffic stays native; leading system first.
class MultiAgentFormatter : public Formatter {
public:
    using Formatter::Formatter;
    FormattedPrompt format(std::span<const Msg> history) const override;
};

FormattedPrompt format_chat(std::span<const Msg> history, const Capabilities& caps = {});
FormattedPrompt format_multiagent(std::span<const Msg> history, const Capabilities& caps = {});

inline constexpr std::string_view kHistoryOpen = "<history>";
inline constexpr std::string_view kHistoryClose = "</history>";

/// Provider content part for a media block: resolves local paths to base64 data URLs.
/// Throws CapabilityError if `caps.vision` is false.
json media_part(const ContentBlock& block, const Capabilities& caps);

} // namespace agentloom
