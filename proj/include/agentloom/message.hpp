// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace agentloom {

using json = nlohmann::json;

enum class Role { user, assistant, system };

std::string_view to_string(Role role);
/// Throws ValidationError naming the offending value.
Role parse_role(std::string_view text);

struct UrlSource {
    std::string url;
    bool operator==(const UrlSource&) const = default;
};

struct Base64Source {
    std::string media_type;
    std::string data;
    bool operator==(const Base64Source&) const = default;
};

using MediaSource = std::variant<UrlSource, Base64Source>;

struct TextBlock {
    std::string text;
    bool operator==(const TextBlock&) const = default;
};

struct ThinkingBlock {
    std::string thinking;
    bool operator==(const ThinkingBlock&) const = default;
};

struct ImageBlock {
    MediaSource source;
    bool operator==(const ImageBlock&) const = default;
};

struct AudioBlock {
    MediaSource source;
    bool operator==(const AudioBlock&) const = default;
};

struct VideoBlock {
    MediaSource source;
    bool operator==(const VideoBlock&) const = default;
};

struct ToolUseBlock {
    std::string id;
    std::string name;
    json input = json::object();
    bool operator==(const ToolUseBlock&) const = default;
};

class ContentBlock;

struct ToolResultBlock {
    std::string id;
    std::string name;
    std::vector<ContentBlock> output;
    bool operator==(const ToolResultBlock&) const;
};

enum class BlockKind { text, thinking, image, audio, video, tool_use, tool_result };

std::string_view to_string(BlockKind kind);

/// Tagged union over the seven content block variants.
class ContentBlock {
public:
    using Variant = std::variant<TextBlock, ThinkingBlock, ImageBlock, AudioBlock, VideoBlock,
                                 ToolUseBlock, ToolResultBlock>;

    template <class T>
        requires(!std::is_same_v<std::remove_cvref_t<T>, ContentBlock> &&
                 std::is_constructible_v<Variant, T &&>)
    ContentBlock(T&& block) : value_(std::forward<T>(block)) {}

    BlockKind kind() const noexcept { return static_cast<BlockKind>(value_.index()); }
    const Variant& value() const noexcept { return value_; }

    template <class T>
    const T* get_if() const noexcept { return std::get_if<T>(&value_); }

    template <class T>
    bool is() const noexcept { return std::holds_alternative<T>(value_); }

    bool operator==(const ContentBlock&) const = default;

private:
    Variant value_;
};

inline bool ToolResultBlock::operator==(const ToolResultBlock& o) const
{
    return id == o.id && name == o.name && output == o.output;
}

using Blocks = std::vector<ContentBlock>;

json block_to_json(const ContentBlock& block);
/// `path` prefixes error locations, e.g. `content[2]`.
ContentBlock block_from_json(const json& j, const std::string& path = "");

/// The basic unit of communication. Immutable after creation: `with_*` returns a copy that
/// keeps the id and timestamp.
class Msg {
public:
    Msg(std::string name, std::string content, Role role,
        std::optional<json> metadata = std::nullopt);
    Msg(std::string name, Blocks content, Role role, std::optional<json> metadata = std::nullopt);

    const std::string& id() const noexcept { return id_; }
    const std::string& name() const noexcept { return name_; }
    Role role() const noexcept { return role_; }
    const std::string& timestamp() const noexcept { return timestamp_; }
    const std::optional<json>& metadata() const noexcept { return metadata_; }

    /// Canonical block view; string content appears as a single Text block.
    const Blocks& blocks() const noexcept { return blocks_; }
    bool has_string_content() const noexcept { return string_content_; }

    /// Concatenated Text blocks, or the plain string content; nullopt if there is no text.
    std::optional<std::string> get_text_content() const;

    Blocks blocks_of_type(BlockKind kind) const;
    bool has_block(BlockKind kind) const;

    Msg with_content(Blocks content) const;
    Msg with_content(std::string content) const;
    Msg with_metadata(std::optional<json> metadata) const;

    bool operator==(const Msg&) const = default;

    friend json msg_to_json_value(const Msg& msg);
    friend Msg msg_from_json_value(const json& j, const std::string& path);

private:
    Msg() = default;

    std::string id_;
    std::string name_;
    Role role_ = Role::user;
    Blocks blocks_;
    bool string_content_ = false;
    std::optional<json> metadata_;
    std::string timestamp_;
};

/// Role given as text, validated.
Msg create_msg(std::string name, std::string content, std::string_view role,
               std::optional<json> metadata = std::nullopt);
Msg create_msg(std::string name, Blocks content, std::string_view role,
               std::optional<json> metadata = std::nullopt);

json msg_to_json_value(const Msg& msg);
Msg msg_from_json_value(const json& j, const std::string& path = "");

std::string msg_to_json(const Msg& msg);
/// Throws ParseError carrying the path to the offending field.
Msg json_to_msg(std::string_view text);

std::optional<std::string> get_text_content(const Msg& msg);
Blocks blocks_of_type(const Msg& msg, BlockKind kind);

/// Text of the Text blocks in `blocks`, concatenated; empty when none.
std::string text_of(const Blocks& blocks);

} // namespace agentloom

namespace nlohmann {

template <>
struct adl_serializer<agentloom::Msg> {
    static agentloom::Msg from_json(const json& j) { return agentloom::msg_from_json_value(j); }
    static void to_json(json& j, const agentloom::Msg& m) { j = agentloom::msg_to_json_value(m); }
};

template <>
struct adl_serializer<agentloom::ContentBlock> {
    static agentloom::ContentBlock from_json(const json& j) { return agentloom::block_from_json(j); }
    static void to_json(json& j, const agentloom::ContentBlock& b) { j = agentloom::block_to_json(b); }
};

} // namespace nlohmann
