#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace paq {

using ordered_json = nlohmann::ordered_json;

// Calls fn(line_number, parsed) for every non-blank line; line numbers are
// 1-based. Parse failures raise a malformed-line error naming the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(size_t, const nlohmann::json&)>& fn);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes the whole buffer, replacing the file.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Compact single-line serialization with UTF-8 passed through unescaped.
std::string dump_line(const ordered_json& j);

}  // namespace paq
