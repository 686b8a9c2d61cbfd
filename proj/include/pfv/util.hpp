#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfv {

// Number of UTF-8 code points; malformed bytes count as one character each.
std::size_t char_count(std::string_view text) noexcept;

std::string_view trim(std::string_view text) noexcept;
std::string to_lower(std::string_view text);
bool starts_with_icase(std::string_view text, std::string_view prefix) noexcept;
std::vector<std::string> split(std::string_view text, char sep);
std::vector<std::string_view> split_lines(std::string_view text);
/// One-word model answer, lower-cased, with surrounding quotes and
/// punctuation removed; nullopt when the reply is not a single word.
std::optional<std::string> single_word_answer(std::string_view reply);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
std::string base64_decode(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace pfv
