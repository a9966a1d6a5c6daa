// SPDX-License-Identifier: Apache-2.0
#include "agentloom/formatter.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iterator>

namespace agentloom {

namespace {

namespace fs = std::filesystem;

std::optional<fs::path> local_file(const std::string& url)
{
    if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0 ||
        url.rfind("data:", 0) == 0)
        return std::nullopt;
    std::string path = url;
    if (path.rfind("file://", 0) == 0)
        path = path.substr(7);
    std::error_code ec;
    if (!path.empty() && fs::is_regular_file(path, ec))
        return fs::path(path);
    return std::nullopt;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Returns {data-url-or-url, base64-data, media_type}; base64 empty for remote URLs.
struct ResolvedMedia {
    std::string url;
    std::string data;
    std::string media_type;
};

ResolvedMedia resolve(const MediaSource& source)
{
    if (auto const* b64 = std::get_if<Base64Source>(&source))
        return {fmt::format("data:{};base64,{}", b64->media_type, b64->data), b64->data,
                b64->media_type};
    auto const& url = std::get<UrlSource>(source).url;
    if (auto path = local_file(url)) {
        auto mime = mime_from_extension(path->string());
        if (mime.empty())
            mime = "application/octet-stream";
        auto data = base64_encode(read_file(*path));
        return {fmt::format("data:{};base64,{}", mime, data), data, mime};
    }
    return {url, {}, {}};
}

std::string audio_format(const std::string& media_type)
{
    auto const slash = media_type.find('/');
    auto fmt = slash == std::string::npos ? media_type : media_type.substr(slash + 1);
    return fmt == "mpeg" ? "mp3" : fmt;
}

std::string describe_media(const ContentBlock& b)
{
    MediaSource const* source = nullptr;
    if (auto const* i = b.get_if<ImageBlock>())
        source = &i->source;
    else if (auto const* a = b.get_if<AudioBlock>())
        source = &a->source;
    else if (auto const* v = b.get_if<VideoBlock>())
        source = &v->source;
    if (!source)
        return {};
    auto const where = std::holds_alternative<UrlSource>(*source)
                           ? std::get<UrlSource>(*source).url
                           : std::get<Base64Source>(*source).media_type + " data";
    return fmt::format("[{}: {}]", to_string(b.kind()), where);
}

bool is_media(const ContentBlock& b)
{
    auto const k = b.kind();
    return k == BlockKind::image || k == BlockKind::audio || k == BlockKind::video;
}

std::string tool_output_text(const Blocks& output)
{
    std::string out;
    for (auto const& b : output) {
        std::string piece;
        if (auto const* t = b.get_if<TextBlock>())
            piece = t->text;
        else if (is_media(b))
            piece = describe_media(b);
        else if (auto const* r = b.get_if<ToolResultBlock>())
            piece = tool_output_text(r->output);
        else
            continue;
        if (!out.empty())
            out += '\n';
        out += piece;
    }
    return out;
}

json tool_call_json(const ToolUseBlock& t)
{
    return {{"id", t.id},
            {"type", "function"},
            {"function", {{"name", t.name}, {"arguments", t.input.dump()}}}};
}

/// Accumulates one provider entry from consecutive non-tool-result blocks.
struct EntryBuilder {
    std::string role;
    std::string text;
    bool has_text = false;
    json media = json::array();
    json tool_calls = json::array();

    bool empty() const { return !has_text && media.empty() && tool_calls.empty(); }

    json build() const
    {
        json entry;
        entry["role"] = tool_calls.empty() ? role : std::string("assistant");
        if (!media.empty()) {
            json parts = json::array();
            if (has_text)
                parts.push_back({{"type", "text"}, {"text", text}});
            for (auto const& m : media)
                parts.push_back(m);
            entry["content"] = std::move(parts);
        } else if (has_text) {
            entry["content"] = text;
        } else {
            entry["content"] = nullptr;
        }
        if (!tool_calls.empty())
            entry["tool_calls"] = tool_calls;
        return entry;
    }
};

/// Native chat-completions entries for one message.
void append_native(const Msg& msg, const Capabilities& caps, std::vector<json>& out)
{
    EntryBuilder current;
    current.role = to_string(msg.role());
    if (msg.has_string_content()) {
        current.text = *msg.get_text_content();
        current.has_text = true;
    }
    auto flush = [&] {
        if (!current.empty())
            out.push_back(current.build());
        current = EntryBuilder{};
        current.role = to_string(msg.role());
    };
    if (!msg.has_string_content()) {
        for (auto const& b : msg.blocks()) {
            if (auto const* t = b.get_if<TextBlock>()) {
                current.text += t->text;
                current.has_text = true;
            } else if (auto const* u = b.get_if<ToolUseBlock>()) {
                current.tool_calls.push_back(tool_call_json(*u));
            } else if (auto const* r = b.get_if<ToolResultBlock>()) {
                flush();
                out.push_back({{"role", "tool"},
                               {"tool_call_id", r->id},
                               {"name", r->name},
                               {"content", tool_output_text(r->output)}});
            } else if (is_media(b)) {
                current.media.push_back(media_part(b, caps));
            }
        }
    }
    flush();
}

bool has_tool_traffic(const Msg& m)
{
    return m.has_block(BlockKind::tool_use) || m.has_block(BlockKind::tool_result);
}

} // namespace

json media_part(const ContentBlock& block, const Capabilities& caps)
{
    if (!caps.vision)
        throw CapabilityError(fmt::format("backend lacks vision support for '{}' blocks",
                                          to_string(block.kind())));
    if (auto const* i = block.get_if<ImageBlock>()) {
        auto const r = resolve(i->source);
        return {{"type", "image_url"}, {"image_url", {{"url", r.url}}}};
    }
    if (auto const* a = block.get_if<AudioBlock>()) {
        auto const r = resolve(a->source);
        if (r.data.empty())
            return {{"type", "audio_url"}, {"audio_url", {{"url", r.url}}}};
        return {{"type", "input_audio"},
                {"input_audio", {{"data", r.data}, {"format", audio_format(r.media_type)}}}};
    }
    if (auto const* v = block.get_if<VideoBlock>()) {
        auto const r = resolve(v->source);
        return {{"type", "video_url"}, {"video_url", {{"url", r.url}}}};
    }
    throw ValidationError(fmt::format("'{}' is not a media block", to_string(block.kind())));
}

FormattedPrompt ChatFormatter::format(std::span<const Msg> history) const
{
    FormattedPrompt prompt;
    for (auto const& msg : history)
        append_native(msg, caps_, prompt.messages);
    return prompt;
}

FormattedPrompt MultiAgentFormatter::format(std::span<const Msg> history) const
{
    FormattedPrompt prompt;
    // The leading system messages (the system prompt) stay native and first; later system
    // notes are transcript lines so their position in the conversation is kept.
    std::size_t lead = 0;
    while (lead < history.size() && history[lead].role() == Role::system &&
           !has_tool_traffic(history[lead]))
        append_native(history[lead++], caps_, prompt.messages);

    std::vector<std::string> lines;
    json media = json::array();
    auto flush = [&] {
        if (lines.empty() && media.empty())
            return;
        std::string transcript(kHistoryOpen);
        transcript += '\n';
        for (auto const& line : lines) {
            transcript += line;
            transcript += '\n';
        }
        transcript += kHistoryClose;
        json entry{{"role", "user"}};
        if (media.empty()) {
            entry["content"] = transcript;
        } else {
            json parts = json::array({{{"type", "text"}, {"text", transcript}}});
            for (auto const& m : media)
                parts.push_back(m);
            entry["content"] = std::move(parts);
        }
        prompt.messages.push_back(std::move(entry));
        lines.clear();
        media = json::array();
    };

    for (auto const& msg : history.subspan(lead)) {
        if (has_tool_traffic(msg)) {
            flush();
            append_native(msg, caps_, prompt.messages);
            continue;
        }
        lines.push_back(fmt::format("{}: {}", msg.name(), msg.get_text_content().value_or("")));
        for (auto const& b : msg.blocks())
            if (is_media(b))
                media.push_back(media_part(b, caps_));
    }
    flush();
    return prompt;
}

FormattedPrompt format_chat(std::span<const Msg> history, const Capabilities& caps)
{
    return ChatFormatter(caps).format(history);
}

FormattedPrompt format_multiagent(std::span<const Msg> history, const Capabilities& caps)
{
    return MultiAgentFormatter(caps).format(history);
}

} // namespace agentloom
