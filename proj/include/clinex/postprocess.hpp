#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "clinex/corpus.hpp"

namespace clinex {

enum class InvalidReason { NoJson, WrongKey, NullValue, NotInSchema, Empty };

std::string_view to_string(InvalidReason reason) noexcept;
InvalidReason invalid_reason_from_string(std::string_view name);

/// Display form of every invalid prediction.
inline constexpr std::string_view kInvalidLabel = "INVALID";

/// Outcome of validating one model completion: a label from the schema, or
/// an invalid marker with the reason.
class ParsedLabel {
 public:
  static ParsedLabel valid(std::string label, bool key_fallback = false);
  static ParsedLabel invalid(InvalidReason reason);

  bool is_valid() const noexcept { return label_.has_value(); }
  /// Requires is_valid().
  const std::string& label() const { return *label_; }
  /// Requires !is_valid().
  InvalidReason reason() const noexcept { return reason_; }
  /// The label came from the single string field of an object that lacked
  /// the answer key.
  bool key_fallback() const noexcept { return key_fallback_; }
  /// The label, or "INVALID".
  std::string display() const;

  friend bool operator==(const ParsedLabel&, const ParsedLabel&) = default;

 private:
  std::optional<std::string> label_;
  InvalidReason reason_ = InvalidReason::Empty;
  bool key_fallback_ = false;
};

nlohmann::json to_json(const ParsedLabel& parsed);
ParsedLabel parsed_label_from_json(const nlohmann::json& j);

/// Normalizes formatting noise: strips code fences, turns newlines into
/// spaces, collapses whitespace, and rewrites typographic and single quotes
/// that delimit JSON keys or values as double quotes. Idempotent.
std::string clean_artifacts(std::string_view raw);

/// First balanced {...} substring that parses as a JSON object.
std::optional<std::string> extract_json_payload(std::string_view cleaned);

/// Label spelling variants per task, loaded from data/postprocess.
struct CanonicalizationTable {
  std::vector<std::string> strip_prefixes;
  std::map<Task, std::map<std::string, std::string>> aliases;

  static const CanonicalizationTable& builtin();
  static CanonicalizationTable from_json(const nlohmann::json& j);
};

/// Maps a raw answer onto the schema's spelling of a valid label, if any.
std::optional<std::string> canonicalize_label(
    std::string_view value, const LabelSchema& schema,
    const CanonicalizationTable& table = CanonicalizationTable::builtin());

/// Total: never throws, whatever the input bytes.
ParsedLabel parse_label(std::string_view raw, const LabelSchema& schema,
                        const CanonicalizationTable& table = CanonicalizationTable::builtin());

struct NoiseWrapper {
  std::string name;
  /// Uses {key}, {label} and {label_upper}.
  std::string tmpl;
};

/// Completion wrappers every valid label must be recoverable from.
const std::vector<NoiseWrapper>& noise_wrappers();
std::string apply_wrapper(const NoiseWrapper& wrapper, std::string_view key, std::string_view label);

}  // namespace clinex
