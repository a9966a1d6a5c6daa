// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentloom {

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;

/// 32 lowercase hex characters from a per-thread random engine.
std::string random_hex_id();

/// RFC 3339, UTC, millisecond precision: `2025-01-02T03:04:05.678Z`.
std::string format_rfc3339(TimePoint tp);
std::string now_rfc3339();
TimePoint parse_rfc3339(std::string_view text);

std::string base64_encode(std::string_view bytes);
/// Throws ValidationError on malformed input.
std::string base64_decode(std::string_view text);
bool is_valid_base64(std::string_view text);

/// `type/subtype` grammar check (RFC 6838 token characters).
bool is_valid_mime(std::string_view mime);

/// Guess a MIME type from a file extension; empty when unknown.
std::string mime_from_extension(std::string_view path);

std::string to_lower(std::string_view s);

} // namespace agentloom
