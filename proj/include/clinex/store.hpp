#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clinex/config.hpp"
#include "clinex/postprocess.hpp"

namespace clinex {

/// Outcome of one (report, configuration) pair.
struct ExtractionRecord {
  std::string report_id;
  std::string config_hash;
  std::string raw_output;
  ParsedLabel parsed = ParsedLabel::invalid(InvalidReason::Empty);
  bool rag_used = false;
  std::optional<double> rerank_score;
  double latency_ms = 0.0;
  /// ISO-8601 UTC; absent when timestamps are disabled.
  std::optional<std::string> timestamp;
  /// Set when the backend failed and the record stands in for a completion.
  std::optional<std::string> error;

  friend bool operator==(const ExtractionRecord&, const ExtractionRecord&) = default;
};

nlohmann::json to_json(const ExtractionRecord& record);
ExtractionRecord extraction_record_from_json(const nlohmann::json& j);

/// Equality ignoring the wall-clock fields, latency_ms and timestamp.
bool same_outcome(const ExtractionRecord& a, const ExtractionRecord& b);

using RecordKey = std::pair<std::string, std::string>;

/// Append-only JSON Lines result store. Opening it indexes the completed
/// pairs; a torn final line left by a crash is cut off, while any other
/// unreadable line or duplicate pair aborts with DataError.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path path);
  ~ResultStore();
  ResultStore(const ResultStore&) = delete;
  ResultStore& operator=(const ResultStore&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  const std::vector<ExtractionRecord>& records() const noexcept { return records_; }
  bool contains(const std::string& report_id, const std::string& config_hash) const;
  std::size_t size() const noexcept { return records_.size(); }
  /// Bytes of torn tail removed while opening.
  std::size_t repaired_bytes() const noexcept { return repaired_bytes_; }

  /// Writes one line and fsyncs. Throws DataError on a duplicate pair.
  void append(const ExtractionRecord& record);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<ExtractionRecord> records_;
  std::set<RecordKey> keys_;
  std::size_t repaired_bytes_ = 0;
};

/// Read-only load with the same rules as ResultStore, except that a torn
/// final line is skipped rather than removed.
std::vector<ExtractionRecord> load_records(const std::filesystem::path& path);

/// Configurations that produced the records in a store, kept next to it.
std::filesystem::path config_registry_path(const std::filesystem::path& store);
/// Merges `configs` into the registry, replacing the file atomically.
void register_configs(const std::filesystem::path& store, const std::vector<PipelineConfig>& configs);
std::vector<PipelineConfig> load_config_registry(const std::filesystem::path& store);

}  // namespace clinex
