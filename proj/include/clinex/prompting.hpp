#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "clinex/corpus.hpp"
#include "clinex/retrieval.hpp"

namespace clinex {

enum class PromptStyle { Simple, Complex };
enum class FewShot { None, Positive, PositiveAndNegative };

std::string_view to_string(PromptStyle style) noexcept;
PromptStyle prompt_style_from_string(std::string_view name);
std::string_view to_string(FewShot mode) noexcept;
FewShot few_shot_from_string(std::string_view name);

struct PromptStrategy {
  PromptStyle style = PromptStyle::Complex;
  FewShot few_shot = FewShot::None;
  bool json_instruction = true;

  friend bool operator==(const PromptStrategy&, const PromptStrategy&) = default;
};

struct FewShotExemplar {
  std::string snippet;
  std::string answer;

  friend bool operator==(const FewShotExemplar&, const FewShotExemplar&) = default;
};

/// Prompt template texts. Placeholders are written {name}; rendering any
/// placeholder that has no value is an error.
struct PromptTemplates {
  std::string simple;
  std::string complex;
  std::string json_instruction;
  std::string exemplar;

  /// The templates shipped with the library.
  static const PromptTemplates& builtin();
  /// Reads simple.txt, complex.txt, json_instruction.txt and exemplar.txt from
  /// `dir`; missing files fall back to the built-in text.
  static PromptTemplates load(const std::filesystem::path& dir);

  /// Content hash identifying this template set, as 16 hex digits.
  std::string hash() const;
};

/// Substitutes {name} placeholders in a single left-to-right pass, so values
/// are never rescanned. Throws ConfigError on a placeholder without a value.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Answer object as the model is asked to emit it, e.g. {"score": "2a"}.
std::string render_answer_json(std::string_view answer_key, std::string_view label);

/// Built-in synthetic exemplars: two positives with distinct labels, then one
/// negative carrying the not-reported label.
std::vector<FewShotExemplar> default_exemplars(const LabelSchema& schema);

std::string build_prompt(const RetrievedContext& context, const LabelSchema& schema,
                         const PromptStrategy& strategy,
                         const std::vector<FewShotExemplar>& exemplars,
                         const PromptTemplates& templates = PromptTemplates::builtin());

}  // namespace clinex
