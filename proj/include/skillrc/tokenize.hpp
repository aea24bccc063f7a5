#pragma once

#include <cctype>
#include <string>
#include <vector>

namespace skillrc {

/// Token text plus [begin, end) byte offsets into the source string;
/// text always equals source.substr(begin, end - begin).
struct Token {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

namespace detail {

inline bool is_space_byte(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_punct_byte(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace detail

/// Whitespace split, then leading/trailing punctuation peeled off as
/// single-character tokens. A trailing period stays attached when the
/// token has another internal period ("U.S." stays whole, "eating."
/// splits).
inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_space_byte(text[i])) ++i;
        if (i >= text.size()) break;
        std::size_t chunk_begin = i;
        while (i < text.size() && !detail::is_space_byte(text[i])) ++i;
        std::size_t chunk_end = i;

        std::size_t core_begin = chunk_begin;
        while (chunk_end - core_begin > 1 && detail::is_punct_byte(text[core_begin])) {
            ++core_begin;
        }
        std::size_t core_end = chunk_end;
        while (core_end - core_begin > 1 && detail::is_punct_byte(text[core_end - 1])) {
            if (text[core_end - 1] == '.' &&
                text.find('.', core_begin) < core_end - 1) {
                break;  // internal period: abbreviation-like, keep attached
            }
            --core_end;
        }

        for (std::size_t p = chunk_begin; p < core_begin; ++p) {
            tokens.push_back({text.substr(p, 1), p, p + 1});
        }
        tokens.push_back({text.substr(core_begin, core_end - core_begin), core_begin, core_end});
        for (std::size_t p = core_end; p < chunk_end; ++p) {
            tokens.push_back({text.substr(p, 1), p, p + 1});
        }
    }
    return tokens;
}

inline std::vector<std::string> token_texts(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

inline std::vector<std::string> tokenize_texts(const std::string& text) {
    return token_texts(tokenize(text));
}

}  // namespace skillrc
