// SPDX-License-Identifier: Apache-2.0
#include "agentloom/message.hpp"

#include "agentloom/errors.hpp"
#include "agentloom/util.hpp"

#include <fmt/format.h>

namespace agentloom {

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::system: return "system";
    }
    return "user";
}

Role parse_role(std::string_view text)
{
    if (text == "user")
        return Role::user;
    if (text == "assistant")
        return Role::assistant;
    if (text == "system")
        return Role::system;
    throw ValidationError(fmt::format(
        "invalid role '{}': expected one of \"user\", \"assistant\", \"system\"", text));
}

std::string_view to_string(BlockKind kind)
{
    switch (kind) {
    case BlockKind::text: return "text";
    case BlockKind::thinking: return "thinking";
    case BlockKind::image: return "image";
    case BlockKind::audio: return "audio";
    case BlockKind::video: return "video";
    case BlockKind::tool_use: return "tool_use";
    case BlockKind::tool_result: return "tool_result";
    }
    return "text";
}

namespace {

json source_to_json(const MediaSource& source)
{
    if (auto const* url = std::get_if<UrlSource>(&source))
        return {{"type", "url"}, {"url", url->url}};
    auto const& b64 = std::get<Base64Source>(source);
    return {{"type", "base64"}, {"media_type", b64.media_type}, {"data", b64.data}};
}

std::string sub(const std::string& path, std::string_view field)
{
    return path.empty() ? std::string(field) : path + "." + std::string(field);
}

const json& require(const json& j, const std::string& path, std::string_view field)
{
    auto it = j.find(field);
    if (it == j.end())
        throw ParseError(sub(path, field), "missing field");
    return *it;
}

std::string require_string(const json& j, const std::string& path, std::string_view field)
{
    auto const& v = require(j, path, field);
    if (!v.is_string())
        throw ParseError(sub(path, field), "expected a string");
    return v.get<std::string>();
}

void require_object(const json& j, const std::string& path)
{
    if (!j.is_object())
        throw ParseError(path, "expected an object");
}

MediaSource source_from_json(const json& j, const std::string& path)
{
    require_object(j, path);
    auto const type = require_string(j, path, "type");
    if (type == "url")
        return UrlSource{require_string(j, path, "url")};
    if (type == "base64") {
        auto media_type = require_string(j, path, "media_type");
        if (!is_valid_mime(media_type))
            throw ParseError(sub(path, "media_type"),
                             fmt::format("'{}' is not a type/subtype MIME string", media_type));
        auto data = require_string(j, path, "data");
        if (!is_valid_base64(data))
            throw ParseError(sub(path, "data"), "invalid base64 data");
        return Base64Source{std::move(media_type), std::move(data)};
    }
    throw ParseError(sub(path, "type"), fmt::format("unknown source type '{}'", type));
}

} // namespace

json block_to_json(const ContentBlock& block)
{
    return std::visit(
        [](const auto& b) -> json {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, TextBlock>) {
                return {{"type", "text"}, {"text", b.text}};
            } else if constexpr (std::is_same_v<T, ThinkingBlock>) {
                return {{"type", "thinking"}, {"thinking", b.thinking}};
            } else if constexpr (std::is_same_v<T, ImageBlock>) {
                return {{"type", "image"}, {"source", source_to_json(b.source)}};
            } else if constexpr (std::is_same_v<T, AudioBlock>) {
                return {{"type", "audio"}, {"source", source_to_json(b.source)}};
            } else if constexpr (std::is_same_v<T, VideoBlock>) {
                return {{"type", "video"}, {"source", source_to_json(b.source)}};
            } else if constexpr (std::is_same_v<T, ToolUseBlock>) {
                return {{"type", "tool_use"}, {"id", b.id}, {"name", b.name}, {"input", b.input}};
            } else {
                json output = json::array();
                for (auto const& o : b.output)
                    output.push_back(block_to_json(o));
                return {{"type", "tool_result"}, {"id", b.id}, {"name", b.name},
                        {"output", std::move(output)}};
            }
        },
        block.value());
}

ContentBlock block_from_json(const json& j, const std::string& path)
{
    require_object(j, path);
    auto const type = require_string(j, path, "type");
    if (type == "text")
        return TextBlock{require_string(j, path, "text")};
    if (type == "thinking")
        return ThinkingBlock{require_string(j, path, "thinking")};
    if (type == "image")
        return ImageBlock{source_from_json(require(j, path, "source"), sub(path, "source"))};
    if (type == "audio")
        return AudioBlock{source_from_json(require(j, path, "source"), sub(path, "source"))};
    if (type == "video")
        return VideoBlock{source_from_json(require(j, path, "source"), sub(path, "source"))};
    if (type == "tool_use") {
        auto id = require_string(j, path, "id");
        if (id.empty())
            throw ParseError(sub(path, "id"), "tool_use id must be non-empty");
        auto const& input = require(j, path, "input");
        if (!input.is_object())
            throw ParseError(sub(path, "input"), "expected an object");
        return ToolUseBlock{std::move(id), require_string(j, path, "name"), input};
    }
    if (type == "tool_result") {
        ToolResultBlock result{require_string(j, path, "id"), require_string(j, path, "name"), {}};
        auto const& output = require(j, path, "output");
        auto const out_path = sub(path, "output");
        if (!output.is_array())
            throw ParseError(out_path, "expected an array");
        for (std::size_t i = 0; i < output.size(); ++i)
            result.output.push_back(block_from_json(output[i], fmt::format("{}[{}]", out_path, i)));
        return result;
    }
    throw ParseError(sub(path, "type"), fmt::format("unknown block tag '{}'", type));
}

Msg::Msg(std::string name, std::string content, Role role, std::optional<json> metadata)
    : id_(random_hex_id()), name_(std::move(name)), role_(role),
      blocks_{TextBlock{std::move(content)}}, string_content_(true),
      metadata_(std::move(metadata)), timestamp_(now_rfc3339())
{
}

Msg::Msg(std::string name, Blocks content, Role role, std::optional<json> metadata)
    : id_(random_hex_id()), name_(std::move(name)), role_(role), blocks_(std::move(content)),
      metadata_(std::move(metadata)), timestamp_(now_rfc3339())
{
}

std::optional<std::string> Msg::get_text_content() const
{
    if (string_content_)
        return std::get<TextBlock>(blocks_.front().value()).text;
    std::optional<std::string> out;
    for (auto const& b : blocks_) {
        if (auto const* t = b.get_if<TextBlock>()) {
            if (!out)
                out.emplace();
            *out += t->text;
        }
    }
    return out;
}

Blocks Msg::blocks_of_type(BlockKind kind) const
{
    Blocks out;
    for (auto const& b : blocks_)
        if (b.kind() == kind)
            out.push_back(b);
    return out;
}

bool Msg::has_block(BlockKind kind) const
{
    for (auto const& b : blocks_)
        if (b.kind() == kind)
            return true;
    return false;
}

Msg Msg::with_content(Blocks content) const
{
    Msg copy = *this;
    copy.blocks_ = std::move(content);
    copy.string_content_ = false;
    return copy;
}

Msg Msg::with_content(std::string content) const
{
    Msg copy = *this;
    copy.blocks_ = {TextBlock{std::move(content)}};
    copy.string_content_ = true;
    return copy;
}

Msg Msg::with_metadata(std::optional<json> metadata) const
{
    Msg copy = *this;
    copy.metadata_ = std::move(metadata);
    return copy;
}

Msg create_msg(std::string name, std::string content, std::string_view role,
               std::optional<json> metadata)
{
    return Msg(std::move(name), std::move(content), parse_role(role), std::move(metadata));
}

Msg create_msg(std::string name, Blocks content, std::string_view role,
               std::optional<json> metadata)
{
    return Msg(std::move(name), std::move(content), parse_role(role), std::move(metadata));
}

json msg_to_json_value(const Msg& msg)
{
    json j;
    j["id"] = msg.id_;
    j["name"] = msg.name_;
    j["role"] = to_string(msg.role_);
    if (msg.string_content_) {
        j["content"] = std::get<TextBlock>(msg.blocks_.front().value()).text;
    } else {
        json content = json::array();
        for (auto const& b : msg.blocks_)
            content.push_back(block_to_json(b));
        j["content"] = std::move(content);
    }
    if (msg.metadata_)
        j["metadata"] = *msg.metadata_;
    j["timestamp"] = msg.timestamp_;
    return j;
}

Msg msg_from_json_value(const json& j, const std::string& path)
{
    require_object(j, path);
    Msg msg;
    msg.id_ = require_string(j, path, "id");
    msg.name_ = require_string(j, path, "name");
    auto const role = require_string(j, path, "role");
    try {
        msg.role_ = parse_role(role);
    } catch (const ValidationError& e) {
        throw ParseError(sub(path, "role"), e.what());
    }
    auto const& content = require(j, path, "content");
    auto const content_path = sub(path, "content");
    if (content.is_string()) {
        msg.blocks_ = {TextBlock{content.get<std::string>()}};
        msg.string_content_ = true;
    } else if (content.is_array()) {
        for (std::size_t i = 0; i < content.size(); ++i)
            msg.blocks_.push_back(
                block_from_json(content[i], fmt::format("{}[{}]", content_path, i)));
    } else {
        throw ParseError(content_path, "expected a string or an array of blocks");
    }
    if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
        if (!it->is_object())
            throw ParseError(sub(path, "metadata"), "expected an object");
        msg.metadata_ = *it;
    }
    msg.timestamp_ = require_string(j, path, "timestamp");
    return msg;
}

std::string msg_to_json(const Msg& msg)
{
    return msg_to_json_value(msg).dump();
}

Msg json_to_msg(std::string_view text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("", fmt::format("malformed JSON: {}", e.what()));
    }
    return msg_from_json_value(j);
}

std::optional<std::string> get_text_content(const Msg& msg)
{
    return msg.get_text_content();
}

Blocks blocks_of_type(const Msg& msg, BlockKind kind)
{
    return msg.blocks_of_type(kind);
}

std::string text_of(const Blocks& blocks)
{
    std::string out;
    for (auto const& b : blocks)
        if (auto const* t = b.get_if<TextBlock>())
            out += t->text;
    return out;
}

} // namespace agentloom
