// SPDX-License-Identifier: Apache-2.0
#include "agentloom/config.hpp"
#include "agentloom/errors.hpp"

#include <fmt/format.h>

#include <cctype>
#include <fstream>
#include <sstream>

namespace agentloom {

namespace {

class LineParser {
public:
    LineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ParseError(fmt::format("line {}", line_), what);
    }

    void skip_ws()
    {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t'))
            ++pos_;
    }

    bool at_end_or_comment()
    {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }

    bool eat(char c)
    {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string bare_key()
    {
        skip_ws();
        if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\''))
            return string_value();
        auto const start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
            ++pos_;
        if (start == pos_)
            fail("expected a key");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::vector<std::string> dotted_key()
    {
        std::vector<std::string> parts{bare_key()};
        while (eat('.'))
            parts.push_back(bare_key());
        return parts;
    }

    std::string string_value()
    {
        auto const quote = s_[pos_++];
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != quote) {
            char c = s_[pos_++];
            if (quote == '"' && c == '\\') {
                if (pos_ >= s_.size())
                    fail("unterminated escape");
                char e = s_[pos_++];
                switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: fail(fmt::format("unsupported escape '\\{}'", e));
                }
                continue;
            }
            out.push_back(c);
        }
        if (pos_ >= s_.size())
            fail("unterminated string");
        ++pos_;
        return out;
    }

    json value()
    {
        skip_ws();
        if (pos_ >= s_.size())
            fail("expected a value");
        char c = s_[pos_];
        if (c == '"' || c == '\'')
            return string_value();
        if (c == '[') {
            ++pos_;
            json arr = json::array();
            if (eat(']'))
                return arr;
            for (;;) {
                arr.push_back(value());
                if (eat(']'))
                    return arr;
                if (!eat(','))
                    fail("expected ',' or ']' in array");
                if (eat(']'))
                    return arr;
            }
        }
        auto const start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
               s_[pos_] != '\t')
            ++pos_;
        auto const tok = std::string(s_.substr(start, pos_ - start));
        if (tok == "true")
            return true;
        if (tok == "false")
            return false;
        std::string digits;
        for (char d : tok)
            if (d != '_')
                digits.push_back(d);
        try {
            std::size_t used = 0;
            if (digits.find_first_of(".eE") == std::string::npos) {
                auto v = std::stoll(digits, &used);
                if (used == digits.size())
                    return v;
            } else {
                auto v = std::stod(digits, &used);
                if (used == digits.size())
                    return v;
            }
        } catch (const std::exception&) {
        }
        fail(fmt::format("cannot read value '{}'", tok));
    }

private:
    std::string_view s_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

json& descend(json& root, const std::vector<std::string>& path, std::size_t line)
{
    json* cur = &root;
    for (auto const& p : path) {
        if (!cur->contains(p))
            (*cur)[p] = json::object();
        cur = &(*cur)[p];
        if (!cur->is_object())
            throw ParseError(fmt::format("line {}", line), fmt::format("'{}' is not a table", p));
    }
    return *cur;
}

std::string str_or(const json& t, const char* key, const std::string& fallback)
{
    if (!t.contains(key))
        return fallback;
    if (!t.at(key).is_string())
        throw ParseError(key, "expected a string");
    return t.at(key).get<std::string>();
}

} // namespace

json parse_toml_subset(std::string_view text)
{
    json root = json::object();
    json* table = &root;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        LineParser p(line, line_no);
        if (p.at_end_or_comment())
            continue;
        if (p.eat('[')) {
            auto path = p.dotted_key();
            if (!p.eat(']'))
                p.fail("expected ']'");
            if (!p.at_end_or_comment())
                p.fail("unexpected text after table header");
            table = &descend(root, path, line_no);
            continue;
        }
        auto key = p.dotted_key();
        if (!p.eat('='))
            p.fail("expected '='");
        auto v = p.value();
        if (!p.at_end_or_comment())
            p.fail("unexpected text after value");
        auto last = key.back();
        key.pop_back();
        auto& target = descend(*table, key, line_no);
        if (target.contains(last))
            p.fail(fmt::format("duplicate key '{}'", last));
        target[last] = std::move(v);
    }
    return root;
}

json load_toml_subset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError(path.string(), "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_toml_subset(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string(), e.what());
    }
}

CliConfig config_from_json(const json& j)
{
    CliConfig c;
    if (auto it = j.find("model"); it != j.end()) {
        auto const& m = *it;
        c.model.kind = str_or(m, "backend", c.model.kind);
        if (c.model.kind != "openai" && c.model.kind != "mock")
            throw ParseError("model.backend", fmt::format("unknown backend '{}'", c.model.kind));
        c.model.base_url = str_or(m, "base_url", c.model.base_url);
        c.model.api_key_env = str_or(m, "api_key_env", c.model.api_key_env);
        c.model.model_name = str_or(m, "model_name", c.model.model_name);
        if (m.contains("mock_script"))
            c.model.mock_script = str_or(m, "mock_script", "");
        if (m.contains("api_key"))
            throw ParseError("model.api_key", "API keys are read from the environment; set model.api_key_env");
    }
    if (auto it = j.find("studio"); it != j.end() && it->contains("url"))
        c.studio_url = str_or(*it, "url", "");
    if (auto it = j.find("eval"); it != j.end())
        c.storage_root = str_or(*it, "storage", c.storage_root.string());
    if (auto it = j.find("log"); it != j.end())
        c.log_level = str_or(*it, "level", c.log_level);
    return c;
}

CliConfig load_cli_config(const std::filesystem::path& path)
{
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        return {};
    try {
        return config_from_json(load_toml_subset(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string(), e.what());
    }
}

} // namespace agentloom
