#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clinex/prompting.hpp"
#include "clinex/retrieval.hpp"

namespace clinex {

/// Everything that determines one extraction run.
struct PipelineConfig {
  std::string model_name = "llama3";
  double param_count_b = 8.0;
  int quant_bits = 4;
  PromptStrategy prompt;
  double temperature = 0.0;
  std::int64_t top_k = 40;
  double top_p = 0.9;
  bool json_mode = false;
  RetrievalSettings retrieval;
  std::int64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

nlohmann::json to_json(const PipelineConfig& config);
nlohmann::json to_json(const RetrievalSettings& settings);
/// Missing fields take their defaults; unknown fields are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
RetrievalSettings retrieval_settings_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// 16 hex digits over the canonical JSON of every field.
std::string config_hash(const PipelineConfig& config);

/// Short human-readable label: model, size and quantization.
std::string model_label(const PipelineConfig& config);

/// Reads the value at a dotted path such as "retrieval.mode".
const nlohmann::json* json_at_path(const nlohmann::json& j, std::string_view dotted);

/// A base configuration plus axes to vary. Axis names are dotted field paths;
/// the special axis "variant" takes objects merged into the base, for fields
/// that must vary together.
struct SweepGrid {
  nlohmann::json base = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

  void validate() const;
  std::size_t size() const;
};

/// Cartesian product of the axes applied to the base, axes sorted by name
/// with the first axis varying slowest and values in their given order.
std::vector<PipelineConfig> enumerate_configs(const SweepGrid& grid);

struct SampleSpec {
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

/// {"base": PipelineConfig, "axes": {...}, "sample": {"n", "seed"}}.
struct SweepDefinition {
  SweepGrid grid;
  std::optional<SampleSpec> sample;
};

SweepDefinition sweep_definition_from_json(const nlohmann::json& j);
SweepDefinition load_sweep_definition(const std::filesystem::path& path);

}  // namespace clinex
