#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clinex/config.hpp"
#include "clinex/metrics.hpp"
#include "clinex/store.hpp"

namespace clinex {

/// Raised when the store lacks records needed for the requested report.
class MissingRecordsError : public Error {
 public:
  explicit MissingRecordsError(std::vector<RecordKey> missing);
  const std::vector<RecordKey>& missing() const noexcept { return missing_; }

 private:
  std::vector<RecordKey> missing_;
};

struct ConfigResult {
  PipelineConfig config;
  std::string hash;
  MetricsReport metrics;
  std::size_t backend_errors = 0;
  std::size_t rag_used = 0;
};

struct PairedDelta {
  /// Shared settings apart from the compared axis, e.g. "llama3 8B Q4".
  std::string group;
  std::string group_hash;
  double metric_a = 0.0;
  double metric_b = 0.0;
  /// metric_b - metric_a.
  double delta = 0.0;
};

/// Accuracy change along one two-valued axis, paired over every other
/// setting. Outcome is "tested", "no_difference" (all deltas zero) or
/// "insufficient_pairs" (fewer than two groups).
struct AxisComparison {
  std::string axis;
  nlohmann::json value_a;
  nlohmann::json value_b;
  std::vector<PairedDelta> deltas;
  double mean_delta = 0.0;
  std::optional<double> sd_delta;
  std::optional<StatTestResult> paired;
  std::string outcome;
};

struct Correlation {
  std::string metric;
  std::string predictor;
  std::optional<StatTestResult> result;
  /// Why the coefficient is undefined, when it is.
  std::optional<std::string> undefined;
};

/// Accuracy of configurations at or below the size cutoff against larger ones.
struct SizeGroupComparison {
  double cutoff_b = 8.0;
  std::size_t n_small = 0;
  std::size_t n_large = 0;
  std::optional<StatTestResult> student;
  std::optional<StatTestResult> welch;
  std::optional<double> cohens_d;
  std::optional<std::string> undefined;
};

struct AggregateReport {
  std::vector<ConfigResult> configs;
  std::vector<AxisComparison> comparisons;
  std::vector<Correlation> correlations;
  SizeGroupComparison size_groups;
};

struct AggregateOptions {
  /// Dotted config paths with exactly two values among the configurations.
  std::vector<std::string> compare_axes;
  double size_cutoff_b = 8.0;
};

/// Every report that appears in the records must have a gold label and a
/// record under every configuration; otherwise MissingRecordsError.
AggregateReport aggregate(std::span<const ExtractionRecord> records, std::span<const PipelineConfig> configs,
                          const std::map<std::string, std::string>& gold, const LabelSchema& schema,
                          const AggregateOptions& options = {});

AxisComparison compare_axis(std::span<const ConfigResult> results, const std::string& axis);

/// Rows sorted by accuracy, then macro F1, both descending.
std::vector<ConfigResult> ranked(std::vector<ConfigResult> results);

/// model, parameters, quantization, the seven summary metrics, then the
/// remaining configuration columns.
std::string to_csv(std::span<const ConfigResult> results);
nlohmann::json comparisons_json(const AggregateReport& report);
std::string top_table(std::span<const ConfigResult> results, std::size_t k);

}  // namespace clinex
