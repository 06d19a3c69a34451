#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clinex/config.hpp"
#include "clinex/corpus.hpp"
#include "clinex/lm_client.hpp"
#include "clinex/prompting.hpp"
#include "clinex/store.hpp"

namespace clinex {

/// Uniform sample without replacement, in a seed-determined order.
std::vector<Report> sample_reports(std::span<const Report> corpus, std::size_t n, std::uint64_t seed);

/// Generation seed for one report under one configuration.
std::int64_t generation_seed(std::int64_t config_seed, std::string_view report_id);

/// Model server plus the per-model embedders and rerankers built on it.
/// Safe to share between threads.
class Backend {
 public:
  explicit Backend(ClientOptions options);

  const LmClient& client() const noexcept { return client_; }
  Embedder& embedder(const std::string& model);
  RerankScorer& reranker(const std::string& model);

 private:
  LmClient client_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<RemoteEmbedder>> remote_;
  std::map<std::string, std::unique_ptr<CachingEmbedder>> cached_;
  std::map<std::string, std::unique_ptr<RemoteReranker>> rerankers_;
};

struct ExtractionInputs {
  const LabelSchema& schema;
  std::vector<FewShotExemplar> exemplars;
  PromptTemplates templates = PromptTemplates::builtin();
};

/// select_context -> build_prompt -> generate -> parse_label. Backend
/// failures after retries yield an Invalid(Empty) record carrying the error;
/// other errors propagate. The timestamp is left unset.
ExtractionRecord extract_one(const Report& report, const PipelineConfig& config,
                             const ExtractionInputs& inputs, Backend& backend);

std::string utc_timestamp();

struct SweepProgress {
  std::size_t appended = 0;
  std::size_t pending = 0;
  std::size_t errors = 0;
};

struct SweepOptions {
  std::size_t parallelism = 4;
  bool timestamps = true;
  /// Stop after this many new records (used to simulate interruption).
  std::optional<std::size_t> max_new_records;
  std::function<void(const SweepProgress&)> on_progress;
};

struct SweepSummary {
  std::size_t total_pairs = 0;
  std::size_t already_done = 0;
  std::size_t appended = 0;
  std::size_t errors = 0;
};

/// Runs every (report, config) pair missing from the store. Workers compute
/// records; only the calling thread appends to the store.
SweepSummary run_sweep(std::span<const Report> reports, std::span<const PipelineConfig> configs,
                       const ExtractionInputs& inputs, Backend& backend,
                       const std::filesystem::path& store_path, const SweepOptions& options = {});

}  // namespace clinex
