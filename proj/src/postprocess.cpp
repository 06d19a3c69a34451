#include "clinex/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "clinex/data.hpp"
#include "clinex/text.hpp"

namespace clinex {

using nlohmann::json;

std::string_view to_string(InvalidReason reason) noexcept {
  switch (reason) {
    case InvalidReason::NoJson: return "no_json";
    case InvalidReason::WrongKey: return "wrong_key";
    case InvalidReason::NullValue: return "null_value";
    case InvalidReason::NotInSchema: return "not_in_schema";
    case InvalidReason::Empty: return "empty";
  }
  return "empty";
}

InvalidReason invalid_reason_from_string(std::string_view name) {
  for (auto r : {InvalidReason::NoJson, InvalidReason::WrongKey, InvalidReason::NullValue,
                 InvalidReason::NotInSchema, InvalidReason::Empty})
    if (to_string(r) == name) return r;
  throw DataError("unknown invalid reason '" + std::string(name) + "'");
}

ParsedLabel ParsedLabel::valid(std::string label, bool key_fallback) {
  ParsedLabel p;
  p.label_ = std::move(label);
  p.key_fallback_ = key_fallback;
  return p;
}

ParsedLabel ParsedLabel::invalid(InvalidReason reason) {
  ParsedLabel p;
  p.reason_ = reason;
  return p;
}

std::string ParsedLabel::display() const {
  return is_valid() ? *label_ : std::string(kInvalidLabel);
}

json to_json(const ParsedLabel& p) {
  if (p.is_valid()) {
    json j = {{"valid", true}, {"label", p.label()}};
    if (p.key_fallback()) j["key_fallback"] = true;
    return j;
  }
  return json{{"valid", false}, {"reason", to_string(p.reason())}};
}

ParsedLabel parsed_label_from_json(const json& j) {
  try {
    if (j.at("valid").get<bool>())
      return ParsedLabel::valid(j.at("label").get<std::string>(), j.value("key_fallback", false));
    return ParsedLabel::invalid(invalid_reason_from_string(j.at("reason").get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed parsed label: ") + e.what());
  }
}

// ------------------------------------------------------------------ cleaning

namespace {

std::string replace_typographic_quotes(std::string_view in) {
  static const std::pair<std::string_view, char> table[] = {
      {"\xE2\x80\x9C", '"'},  {"\xE2\x80\x9D", '"'},  {"\xE2\x80\x9E", '"'},
      {"\xE2\x80\xB3", '"'},  {"\xE2\x80\x98", '\''}, {"\xE2\x80\x99", '\''},
      {"\xE2\x80\x9A", '\''}, {"\xE2\x80\xB2", '\''},
  };
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size();) {
    bool replaced = false;
    if (static_cast<unsigned char>(in[i]) == 0xE2) {
      for (const auto& [seq, ch] : table) {
        if (in.substr(i, seq.size()) == seq) {
          out.push_back(ch);
          i += seq.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(in[i++]);
  }
  return out;
}

bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Removes ``` markers and a language tag glued to them, until none remain.
std::string strip_code_fences(std::string s) {
  for (auto pos = s.find("```"); pos != std::string::npos; pos = s.find("```")) {
    std::size_t end = pos + 3;
    while (end < s.size() && (is_alnum(s[end]) || s[end] == '_' || s[end] == '-')) ++end;
    s.erase(pos, end - pos);
  }
  return s;
}

std::string collapse_whitespace(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (char c : in) {
    if (is_space(c)) c = ' ';
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string normalize_single_quotes(std::string s) {
  auto prev_nonspace = [&](std::size_t i) -> char {
    while (i > 0) {
      if (s[--i] != ' ') return s[i];
    }
    return '\0';
  };
  auto next_nonspace = [&](std::size_t i) -> char {
    for (++i; i < s.size(); ++i)
      if (s[i] != ' ') return s[i];
    return '\0';
  };
  std::vector<std::size_t> structural;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\'') continue;
    const char p = prev_nonspace(i);
    const char n = next_nonspace(i);
    if (p == '{' || p == ',' || p == ':' || p == '[' || n == ':' || n == ',' || n == '}' || n == ']')
      structural.push_back(i);
  }
  for (auto i : structural) s[i] = '"';
  return s;
}

}  // namespace

std::string clean_artifacts(std::string_view raw) {
  std::string s = replace_typographic_quotes(raw);
  s = strip_code_fences(std::move(s));
  s = collapse_whitespace(s);
  return normalize_single_quotes(std::move(s));
}

std::optional<std::string> extract_json_payload(std::string_view cleaned) {
  for (std::size_t start = cleaned.find('{'); start != std::string_view::npos;
       start = cleaned.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = start; i < cleaned.size(); ++i) {
      const char c = cleaned[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        end = i;
        break;
      }
    }
    if (end == std::string_view::npos) continue;
    std::string_view candidate = cleaned.substr(start, end - start + 1);
    json parsed = json::parse(candidate, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return std::string(candidate);
  }
  return std::nullopt;
}

// ------------------------------------------------------------------ labels

CanonicalizationTable CanonicalizationTable::from_json(const json& j) {
  CanonicalizationTable t;
  t.strip_prefixes = j.at("strip_prefixes").get<std::vector<std::string>>();
  for (auto& p : t.strip_prefixes) p = ascii_lower(p);
  for (const auto& [task, table] : j.at("aliases").items()) {
    auto& out = t.aliases[task_from_string(task)];
    for (const auto& [from, to] : table.items()) out[ascii_lower(from)] = to.get<std::string>();
  }
  return t;
}

const CanonicalizationTable& CanonicalizationTable::builtin() {
  static const CanonicalizationTable t =
      from_json(json::parse(data::file("postprocess/canonicalization.json")));
  return t;
}

namespace {

bool is_edge_punct(char c) {
  return is_space(c) || std::string_view(".,;:!?\"'`()[]{}<>*").find(c) != std::string_view::npos;
}

std::string strip_edges(std::string_view s) {
  while (!s.empty() && is_edge_punct(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_edge_punct(s.back())) s.remove_suffix(1);
  return collapse_whitespace(s);
}

}  // namespace

std::optional<std::string> canonicalize_label(std::string_view value, const LabelSchema& schema,
                                              const CanonicalizationTable& table) {
  std::string s = strip_edges(ascii_lower(value));
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& prefix : table.strip_prefixes) {
      if (prefix.empty() || !s.starts_with(prefix) || s.size() == prefix.size()) continue;
      const char next = s[prefix.size()];
      if (next != ' ' && next != ':' && next != '-' && next != '=' && next != '#') continue;
      s = strip_edges(std::string_view(s).substr(prefix.size()));
      while (!s.empty() && (s.front() == '-' || s.front() == '=' || s.front() == '#'))
        s = strip_edges(std::string_view(s).substr(1));
      changed = true;
      break;
    }
  }
  if (s.empty()) return std::nullopt;
  for (const auto& label : schema.valid_labels)
    if (ascii_lower(trim(label)) == s) return label;
  if (auto task = table.aliases.find(schema.task); task != table.aliases.end()) {
    if (auto hit = task->second.find(s); hit != task->second.end() && schema.contains(hit->second))
      return hit->second;
  }
  return std::nullopt;
}

namespace {

std::optional<std::string> scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 1e15)
      return std::to_string(static_cast<long long>(d));
    return v.dump();
  }
  return std::nullopt;
}

ParsedLabel parse_label_impl(std::string_view raw, const LabelSchema& schema,
                             const CanonicalizationTable& table) {
  const std::string cleaned = clean_artifacts(raw);
  if (cleaned.empty()) return ParsedLabel::invalid(InvalidReason::Empty);
  const auto payload = extract_json_payload(cleaned);
  if (!payload) return ParsedLabel::invalid(InvalidReason::NoJson);
  const json obj = json::parse(*payload, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return ParsedLabel::invalid(InvalidReason::NoJson);

  const json* value = nullptr;
  if (auto it = obj.find(schema.answer_key); it != obj.end()) {
    value = &*it;
  } else {
    const std::string wanted = ascii_lower(trim(schema.answer_key));
    for (auto it2 = obj.begin(); it2 != obj.end(); ++it2)
      if (ascii_lower(trim(it2.key())) == wanted) {
        value = &*it2;
        break;
      }
  }

  if (!value) {
    const json* only = nullptr;
    std::size_t strings = 0;
    for (const auto& v : obj)
      if (v.is_string()) {
        ++strings;
        only = &v;
      }
    if (strings == 1) {
      if (auto label = canonicalize_label(only->get<std::string>(), schema, table))
        return ParsedLabel::valid(*label, true);
    }
    return ParsedLabel::invalid(InvalidReason::WrongKey);
  }

  if (value->is_null()) return ParsedLabel::invalid(InvalidReason::NullValue);
  const auto text = scalar_text(*value);
  if (!text) return ParsedLabel::invalid(InvalidReason::NotInSchema);
  if (strip_edges(*text).empty()) return ParsedLabel::invalid(InvalidReason::Empty);
  if (auto label = canonicalize_label(*text, schema, table)) return ParsedLabel::valid(*label);
  return ParsedLabel::invalid(InvalidReason::NotInSchema);
}

}  // namespace

ParsedLabel parse_label(std::string_view raw, const LabelSchema& schema,
                        const CanonicalizationTable& table) {
  try {
    return parse_label_impl(raw, schema, table);
  } catch (...) {
    // Unreachable for well-formed tables; kept so the function stays total.
    return ParsedLabel::invalid(InvalidReason::NoJson);
  }
}

// ------------------------------------------------------------------ wrappers

const std::vector<NoiseWrapper>& noise_wrappers() {
  static const std::vector<NoiseWrapper> wrappers = [] {
    std::vector<NoiseWrapper> out;
    const auto j = json::parse(data::file("postprocess/noise_wrappers.json"));
    for (const auto& w : j.at("wrappers"))
      out.push_back({w.at("name").get<std::string>(), w.at("template").get<std::string>()});
    return out;
  }();
  return wrappers;
}

std::string apply_wrapper(const NoiseWrapper& wrapper, std::string_view key, std::string_view label) {
  std::string out;
  const std::string& t = wrapper.tmpl;
  for (std::size_t i = 0; i < t.size();) {
    if (t.compare(i, 5, "{key}") == 0) {
      out += key;
      i += 5;
    } else if (t.compare(i, 13, "{label_upper}") == 0) {
      out += ascii_upper(label);
      i += 13;
    } else if (t.compare(i, 7, "{label}") == 0) {
      out += label;
      i += 7;
    } else {
      out.push_back(t[i++]);
    }
  }
  return out;
}

}  // namespace clinex
