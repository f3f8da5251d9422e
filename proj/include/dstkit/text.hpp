#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small ASCII string helpers shared across modules. Utterances and values are
// never rewritten by the pipeline; these are only used for comparisons.
namespace dstkit::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool is_blank(std::string_view s);
bool contains_whitespace(std::string_view s);

// Splits on runs of whitespace; empty tokens are dropped.
std::vector<std::string_view> split_whitespace(std::string_view s);

// Splits on a single delimiter, keeping empty fields.
std::vector<std::string> split(std::string_view s, char delimiter);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

bool is_word_char(char c);

}  // namespace dstkit::text
