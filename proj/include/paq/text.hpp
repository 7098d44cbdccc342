#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace paq {

// Answer normalization: lowercase, drop Unicode punctuation (general
// category P*), drop the whole-token articles "a", "an", "the", collapse
// whitespace. Idempotent. Punctuation is deleted rather than replaced, so
// "well-known" becomes "wellknown".
std::string normalize_answer(std::string_view text);

// Same as normalize_answer but articles are kept.
std::string normalize_keep_articles(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

// Lowercases and splits on every non-alphanumeric code point.
std::vector<std::string> alnum_tokens(std::string_view text);

std::string to_lower(std::string_view text);

// Code points of a UTF-8 string, re-encoded one per element.
std::vector<std::string> utf8_chars(std::string_view text);

std::string trim(std::string_view text);

bool is_article(std::string_view token);

}  // namespace paq
