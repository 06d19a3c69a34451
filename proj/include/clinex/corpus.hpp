#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clinex/common.hpp"

namespace clinex {

enum class Task { Radiology, Pathology };

std::string_view to_string(Task task) noexcept;
Task task_from_string(std::string_view name);

/// Closed label set for one extraction task.
struct LabelSchema {
  Task task = Task::Radiology;
  std::vector<std::string> valid_labels;
  std::string nr_label;
  std::string answer_key;
  std::string retrieval_keywords;
  /// Human-readable name of the datapoint used in prompts.
  std::string target_description;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  bool contains(std::string_view label) const;
  std::size_t index_of(std::string_view label) const;

  friend bool operator==(const LabelSchema&, const LabelSchema&) = default;
};

LabelSchema builtin_schema(Task task);
LabelSchema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabelSchema& schema);
LabelSchema load_schema(const std::filesystem::path& path);

struct Report {
  std::string id;
  Task task = Task::Radiology;
  std::string text;
  std::size_t word_count = 0;

  friend bool operator==(const Report&, const Report&) = default;
};

/// Builds a report from raw text, normalizing it and counting words.
Report make_report(std::string id, Task task, std::string_view raw_text);

struct GoldAnnotation {
  std::string report_id;
  std::string label;

  friend bool operator==(const GoldAnnotation&, const GoldAnnotation&) = default;
};

/// Reports plus the subset of them that carry gold labels.
struct Corpus {
  std::vector<Report> reports;
  std::vector<GoldAnnotation> annotations;

  std::map<std::string, std::string> gold_map() const;
  /// Throws DataError if any annotation label is outside the schema or refers
  /// to an unknown report.
  void validate_against(const LabelSchema& schema) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// One JSON object per line: {"id", "task", "text", "label"?}.
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view jsonl);

struct CorpusSpec {
  Task task = Task::Radiology;
  std::size_t n_reports = 1;
  /// Ordered label -> probability; labels must belong to the task schema.
  std::vector<std::pair<std::string, double>> class_distribution;
  double length_mean_words = 265.0;
  double length_sd_words = 66.0;
  double distractor_rate = 0.1;
  std::uint64_t seed = 0;

  void validate(const LabelSchema& schema) const;
};

/// Default spec for a task, parameterized from the reference cohort (class
/// frequencies, word-count mean and SD, distractor rate).
CorpusSpec default_corpus_spec(Task task, std::size_t n_reports, std::uint64_t seed);

/// Accepts either "class_distribution" (probabilities summing to 1 within
/// 1e-9) or "class_counts" (normalized here). Missing numeric fields take the
/// task defaults.
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

Corpus generate_synthetic_corpus(const CorpusSpec& spec, const LabelSchema& schema);
Corpus generate_synthetic_corpus(const CorpusSpec& spec);

}  // namespace clinex
