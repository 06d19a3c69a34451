#include "clinex/text.hpp"

namespace clinex {

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::string ascii_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  return out;
}

std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(c);
  }
  return std::string(trim(out));
}

std::size_t word_count(std::string_view text) noexcept {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

namespace {

bool is_word_byte(char c) noexcept {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z');
}

void emit_raw_token(std::string_view raw, std::vector<std::string>& out) {
  while (!raw.empty() && raw.front() == '/') raw.remove_prefix(1);
  while (!raw.empty() && raw.back() == '/') raw.remove_suffix(1);
  if (raw.empty()) return;
  if (raw.find('/') == std::string_view::npos) {
    out.push_back(ascii_lower(raw));
    return;
  }
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t slash = raw.find('/', start);
    if (slash == std::string_view::npos) slash = raw.size();
    if (slash > start) out.push_back(ascii_lower(raw.substr(start, slash - start)));
    start = slash + 1;
  }
  // Collapse "a//b" to "a/b" so the compound is stable under repeated slashes.
  std::string compound;
  for (char c : raw)
    if (c != '/' || compound.back() != '/') compound.push_back(c);
  out.push_back(ascii_lower(compound));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(text[i]) && text[i] != '/') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && (is_word_byte(text[j]) || text[j] == '/')) ++j;
    emit_raw_token(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

}  // namespace clinex
