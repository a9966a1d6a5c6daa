// SPDX-License-Identifier: Apache-2.0
#include "agentloom/util.hpp"

#include "agentloom/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <random>

#include <fmt/format.h>

namespace agentloom {

std::string random_hex_id()
{
    thread_local std::mt19937_64 engine{std::random_device{}() ^
                                        static_cast<std::uint64_t>(
                                            Clock::now().time_since_epoch().count())};
    return fmt::format("{:016x}{:016x}", engine(), engine());
}

std::string format_rfc3339(TimePoint tp)
{
    using namespace std::chrono;
    auto const ms = duration_cast<milliseconds>(tp.time_since_epoch());
    auto secs = duration_cast<seconds>(ms);
    auto frac = ms - secs;
    if (frac.count() < 0) {
        secs -= seconds{1};
        frac += seconds{1};
    }
    std::time_t t = secs.count();
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900,
                       tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                       frac.count());
}

std::string now_rfc3339()
{
    return format_rfc3339(Clock::now());
}

TimePoint parse_rfc3339(std::string_view text)
{
    std::string s(text);
    std::tm tm{};
    int millis = 0;
    char tail[8] = {};
    int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3d%7s", &tm.tm_year, &tm.tm_mon,
                        &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &millis, tail);
    if (n < 6)
        throw ValidationError(fmt::format("invalid RFC 3339 timestamp '{}'", s));
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    auto const secs = timegm(&tm);
    return TimePoint{std::chrono::seconds{secs}} + std::chrono::milliseconds{millis};
}

bool is_valid_base64(std::string_view text)
{
    if (text.size() % 4 != 0)
        return false;
    std::size_t pad = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto const c = static_cast<unsigned char>(text[i]);
        if (c == '=') {
            ++pad;
            continue;
        }
        if (pad > 0)
            return false;
        if (!(std::isalnum(c) || c == '+' || c == '/'))
            return false;
    }
    return pad <= 2;
}

std::string base64_encode(std::string_view bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    auto const n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                   reinterpret_cast<const unsigned char*>(bytes.data()),
                                   static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text)
{
    if (!is_valid_base64(text))
        throw ValidationError("invalid base64 data");
    if (text.empty())
        return {};
    std::string out(3 * text.size() / 4, '\0');
    auto const n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                   reinterpret_cast<const unsigned char*>(text.data()),
                                   static_cast<int>(text.size()));
    if (n < 0)
        throw ValidationError("invalid base64 data");
    auto const pad = static_cast<std::size_t>(std::count(text.end() - 2, text.end(), '='));
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

namespace {

bool is_mime_token_char(char c)
{
    auto const u = static_cast<unsigned char>(c);
    if (std::isalnum(u))
        return true;
    switch (c) {
    case '!': case '#': case '$': case '&': case '-': case '^': case '_': case '.': case '+':
        return true;
    default:
        return false;
    }
}

} // namespace

bool is_valid_mime(std::string_view mime)
{
    auto const slash = mime.find('/');
    if (slash == std::string_view::npos || slash == 0 || slash + 1 == mime.size())
        return false;
    auto const type = mime.substr(0, slash);
    auto const sub = mime.substr(slash + 1);
    return std::all_of(type.begin(), type.end(), is_mime_token_char) &&
           std::all_of(sub.begin(), sub.end(), is_mime_token_char);
}

std::string mime_from_extension(std::string_view path)
{
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 14> table{{
        {".png", "image/png"},   {".jpg", "image/jpeg"},  {".jpeg", "image/jpeg"},
        {".gif", "image/gif"},   {".webp", "image/webp"}, {".bmp", "image/bmp"},
        {".wav", "audio/wav"},   {".mp3", "audio/mpeg"},  {".ogg", "audio/ogg"},
        {".flac", "audio/flac"}, {".mp4", "video/mp4"},   {".webm", "video/webm"},
        {".mov", "video/quicktime"}, {".avi", "video/x-msvideo"},
    }};
    auto const dot = path.rfind('.');
    if (dot == std::string_view::npos)
        return {};
    auto const ext = to_lower(path.substr(dot));
    for (auto const& [e, m] : table)
        if (e == ext)
            return std::string(m);
    return {};
}

std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace agentloom
