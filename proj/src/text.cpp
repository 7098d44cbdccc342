#include "paq/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <cstdint>

namespace paq {

namespace {

void append_utf8(std::string& out, UChar32 c) {
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool error = false;
    U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, c, error);
    if (!error) {
        out.append(buf, static_cast<size_t>(len));
    }
}

// Visits each code point; invalid bytes are reported as U+FFFD.
template <typename Fn>
void for_each_code_point(std::string_view text, Fn&& fn) {
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto n = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < n) {
        UChar32 c = 0;
        U8_NEXT(s, i, n, c);
        fn(c < 0 ? UChar32{0xFFFD} : c);
    }
}

bool is_space(UChar32 c) {
    return u_isUWhiteSpace(c) || c == '\t' || c == '\n' || c == '\r';
}

bool is_punct(UChar32 c) {
    return (U_GET_GC_MASK(c) & U_GC_P_MASK) != 0;
}

std::string normalize_impl(std::string_view text, bool drop_articles) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for_each_code_point(text, [&](UChar32 c) {
        if (is_punct(c)) {
            return;
        }
        if (is_space(c)) {
            cleaned.push_back(' ');
            return;
        }
        append_utf8(cleaned, u_tolower(c));
    });

    std::string out;
    out.reserve(cleaned.size());
    for (const auto& tok : split_whitespace(cleaned)) {
        if (drop_articles && is_article(tok)) {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += tok;
    }
    return out;
}

}  // namespace

bool is_article(std::string_view token) {
    return token == "a" || token == "an" || token == "the";
}

std::string normalize_answer(std::string_view text) {
    return normalize_impl(text, true);
}

std::string normalize_keep_articles(std::string_view text) {
    return normalize_impl(text, false);
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for_each_code_point(text, [&](UChar32 c) {
        if (is_space(c)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            append_utf8(cur, c);
        }
    });
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for_each_code_point(text, [&](UChar32 c) {
        if (u_isalnum(c)) {
            append_utf8(cur, u_tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    });
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::string to_lower(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for_each_code_point(text, [&](UChar32 c) { append_utf8(out, u_tolower(c)); });
    return out;
}

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    for_each_code_point(text, [&](UChar32 c) {
        std::string s;
        append_utf8(s, c);
        out.push_back(std::move(s));
    });
    return out;
}

std::string trim(std::string_view text) {
    const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    size_t b = 0;
    size_t e = text.size();
    while (b < e && is_ws(text[b])) {
        ++b;
    }
    while (e > b && is_ws(text[e - 1])) {
        --e;
    }
    return std::string(text.substr(b, e - b));
}

}  // namespace paq
