#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace anonpsy::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
/// Collapses runs of whitespace to one space and trims.
std::string normalize_ws(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);
/// Case-insensitive whole-word (or whole-phrase) search.
bool contains_word_ci(std::string_view haystack, std::string_view phrase);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Sentence segmentation on . ! ? followed by whitespace, aware of common abbreviations.
std::vector<std::string> split_sentences(std::string_view s);

/// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view s);

/// "two", "twelve", "13".
std::string spell_number(std::int64_t n);
std::string capitalize_first(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace anonpsy::text
