#include "clinex/sweep.hpp"

#include <atomic>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <numeric>
#include <thread>

namespace clinex {

namespace {

std::uint64_t bounded(std::uint64_t& state, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    const std::uint64_t x = splitmix64(state);
    if (x < limit) return x % bound;
  }
}

}  // namespace

std::vector<Report> sample_reports(std::span<const Report> corpus, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size())
    throw ConfigError("cannot sample " + std::to_string(n) + " reports from a corpus of " +
                      std::to_string(corpus.size()));
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded(state, corpus.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Report> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(corpus[idx[i]]);
  return out;
}

std::int64_t generation_seed(std::int64_t config_seed, std::string_view report_id) {
  const auto h = hash_combine(static_cast<std::uint64_t>(config_seed), fnv1a64(report_id));
  return static_cast<std::int64_t>(h & 0x7fffffffULL);
}

Backend::Backend(ClientOptions options) : client_(std::move(options)) {}

Embedder& Backend::embedder(const std::string& model) {
  std::lock_guard lock(mutex_);
  auto& cached = cached_[model];
  if (!cached) {
    remote_[model] = std::make_unique<RemoteEmbedder>(client_, model);
    cached = std::make_unique<CachingEmbedder>(*remote_[model]);
  }
  return *cached;
}

RerankScorer& Backend::reranker(const std::string& model) {
  std::lock_guard lock(mutex_);
  auto& r = rerankers_[model];
  if (!r) r = std::make_unique<RemoteReranker>(client_, model);
  return *r;
}

ExtractionRecord extract_one(const Report& report, const PipelineConfig& config,
                             const ExtractionInputs& inputs, Backend& backend) {
  ExtractionRecord rec;
  rec.report_id = report.id;
  rec.config_hash = config_hash(config);
  try {
    RetrievedContext context =
        config.retrieval.mode == RetrievalMode::Off
            ? full_report_context(report)
            : select_context(report, inputs.schema, config.retrieval,
                             backend.embedder(config.retrieval.embedding_model),
                             backend.reranker(config.retrieval.reranker_model));
    rec.rag_used = context.rag_used;
    rec.rerank_score = context.rerank_score;

    GenerationRequest request;
    request.model = config.model_name;
    request.prompt = build_prompt(context, inputs.schema, config.prompt, inputs.exemplars, inputs.templates);
    request.json_mode = config.json_mode;
    request.temperature = config.temperature;
    request.top_k = config.top_k;
    request.top_p = config.top_p;
    request.seed = generation_seed(config.seed, report.id);

    const GenerationResponse response = backend.client().generate(request);
    rec.raw_output = response.raw_text;
    rec.latency_ms = response.latency_ms;
    rec.parsed = parse_label(response.raw_text, inputs.schema);
  } catch (const LmError& e) {
    rec.parsed = ParsedLabel::invalid(InvalidReason::Empty);
    rec.error = e.what();
  } catch (const RerankError& e) {
    rec.parsed = ParsedLabel::invalid(InvalidReason::Empty);
    rec.error = e.what();
  }
  return rec;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

SweepSummary run_sweep(std::span<const Report> reports, std::span<const PipelineConfig> configs,
                       const ExtractionInputs& inputs, Backend& backend,
                       const std::filesystem::path& store_path, const SweepOptions& options) {
  if (options.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  for (const auto& c : configs) c.validate();
  register_configs(store_path, std::vector<PipelineConfig>(configs.begin(), configs.end()));

  ResultStore store(store_path);
  std::vector<std::string> hashes;
  for (const auto& c : configs) hashes.push_back(config_hash(c));

  SweepSummary summary;
  summary.total_pairs = reports.size() * configs.size();
  std::vector<std::pair<std::size_t, std::size_t>> pending;
  for (std::size_t c = 0; c < configs.size(); ++c)
    for (std::size_t r = 0; r < reports.size(); ++r) {
      if (store.contains(reports[r].id, hashes[c])) ++summary.already_done;
      else pending.emplace_back(c, r);
    }
  if (options.max_new_records && pending.size() > *options.max_new_records)
    pending.resize(*options.max_new_records);
  if (pending.empty()) return summary;

  std::mutex mutex;
  std::condition_variable ready;
  std::deque<ExtractionRecord> queue;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::size_t running = std::min(options.parallelism, pending.size());
  std::exception_ptr failure;

  auto worker = [&] {
    try {
      while (!stop.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) break;
        const auto [c, r] = pending[i];
        ExtractionRecord rec = extract_one(reports[r], configs[c], inputs, backend);
        if (options.timestamps) rec.timestamp = utc_timestamp();
        std::lock_guard lock(mutex);
        queue.push_back(std::move(rec));
        ready.notify_one();
      }
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!failure) failure = std::current_exception();
      stop = true;
    }
    std::lock_guard lock(mutex);
    --running;
    ready.notify_one();
  };

  std::vector<std::thread> threads;
  const std::size_t n_threads = running;
  for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);

  SweepProgress progress;
  progress.pending = pending.size();
  try {
    for (;;) {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return !queue.empty() || running == 0; });
      if (queue.empty()) break;
      ExtractionRecord rec = std::move(queue.front());
      queue.pop_front();
      lock.unlock();
      store.append(rec);
      ++summary.appended;
      if (rec.error) ++summary.errors;
      progress.appended = summary.appended;
      progress.errors = summary.errors;
      if (options.on_progress) options.on_progress(progress);
    }
  } catch (...) {
    stop = true;
    for (auto& t : threads) t.join();
    throw;
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return summary;
}

}  // namespace clinex
