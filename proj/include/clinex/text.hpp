#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clinex {

/// Newline-free single-paragraph form of a report. Every '\n' or '\r' becomes
/// a space (after a period this keeps the sentence break as ". "), runs of
/// spaces collapse to one, and surrounding whitespace is trimmed. Idempotent.
std::string normalize_text(std::string_view raw);

/// Number of whitespace-delimited tokens.
std::size_t word_count(std::string_view text) noexcept;

/// Lexical tokenizer shared by BM25 and the mock embedder. ASCII case-folds and
/// splits on anything that is not alphanumeric or '/'. Bytes >= 0x80 count as
/// word characters. A slash compound such as "IDH1/IDH2" yields its parts
/// followed by the compound itself: "idh1", "idh2", "idh1/idh2".
std::vector<std::string> tokenize(std::string_view text);

std::string ascii_lower(std::string_view s);
std::string ascii_upper(std::string_view s);
std::string_view trim(std::string_view s) noexcept;

bool is_space(char c) noexcept;

}  // namespace clinex
