#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"

namespace abclstm {

/// Flat `key=value` file. Blank lines and lines starting with '#' are
/// ignored; later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::string_view text, std::string_view source = "config") {
    KeyValues kv;
    const std::string norm = normalize_newlines(text);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < norm.size()) {
        std::size_t end = norm.find('\n', pos);
        if (end == std::string::npos) end = norm.size();
        ++line_no;
        const std::string_view line = detail::trim(std::string_view(norm).substr(pos, end - pos));
        pos = end + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key(detail::trim(line.substr(0, eq)));
        if (key.empty()) throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
        kv[key] = std::string(detail::trim(line.substr(eq + 1)));
    }
    return kv;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
    return parse_key_values(read_text_file(path), path.string());
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty())
        throw ValueError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
    return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ValueError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(text) + "'");
}

/// Comma separated list, empty entries dropped.
inline std::vector<std::string> parse_list(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto item = detail::trim(text.substr(pos, end - pos));
        if (!item.empty()) out.emplace_back(item);
        pos = end + 1;
    }
    return out;
}

} // namespace abclstm
