#include <cmath>
#include <set>

#include "clinex/retrieval.hpp"
#include "clinex/text.hpp"

namespace clinex {

// ------------------------------------------------------------------ fusion

std::vector<ScoredChunk> hybrid_search(std::span<const std::size_t> bm25_ranking,
                                       std::span<const std::size_t> dense_ranking, std::size_t n) {
  std::map<std::size_t, double> fused;
  for (auto ranking : {bm25_ranking, dense_ranking}) {
    for (std::size_t r = 0; r < ranking.size(); ++r)
      fused[ranking[r]] += 1.0 / (kRrfConstant + static_cast<double>(r + 1));
  }
  std::vector<ScoredChunk> out;
  out.reserve(fused.size());
  for (const auto& [chunk, score] : fused) out.push_back({chunk, score});
  sort_by_score(out);
  if (out.size() > n) out.resize(n);
  return out;
}

std::vector<ScoredChunk> hybrid_search(std::span<const ScoredChunk> bm25_ranking,
                                       std::span<const ScoredChunk> dense_ranking, std::size_t n) {
  auto ids = [](std::span<const ScoredChunk> hits) {
    std::vector<std::size_t> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(h.chunk);
    return out;
  };
  const auto a = ids(bm25_ranking);
  const auto b = ids(dense_ranking);
  return hybrid_search(std::span<const std::size_t>(a), std::span<const std::size_t>(b), n);
}

// ------------------------------------------------------------------ mocks

Eigen::VectorXd MockEmbedder::raw(std::string_view text) const {
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back("<empty>");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension_);
  for (const auto& t : tokens) {
    std::uint64_t state = hash_combine(fnv1a64(t), seed_);
    for (Eigen::Index d = 0; d < dimension_; ++d) {
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      v(d) += 2.0 * u - 1.0;
    }
  }
  return v;
}

Eigen::MatrixXd MockEmbedder::embed(std::span<const std::string> texts) {
  Eigen::MatrixXd out(dimension_, static_cast<Eigen::Index>(texts.size()));
  for (std::size_t i = 0; i < texts.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = raw(texts[i]).normalized();
  return out;
}

double TokenOverlapScorer::score(std::string_view query, std::string_view passage) {
  const auto q = tokenize(query);
  const std::set<std::string> query_set(q.begin(), q.end());
  if (query_set.empty()) return 0.0;
  const auto p = tokenize(passage);
  const std::set<std::string> passage_set(p.begin(), p.end());
  std::size_t hit = 0;
  for (const auto& t : query_set) hit += passage_set.contains(t) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(query_set.size());
}

// ------------------------------------------------------------------ rerank

std::vector<RerankedChunk> rerank(std::string_view query, std::span<const Chunk> candidates,
                                  RerankScorer& scorer) {
  std::vector<RerankedChunk> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double s = 0.0;
    try {
      s = scorer.score(query, candidates[i].text);
    } catch (const std::exception& e) {
      throw RerankError(i, e.what());
    }
    if (std::isnan(s)) throw RerankError(i, "score is NaN");
    out.push_back({candidates[i], std::clamp(s, 0.0, 1.0), i});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RerankedChunk& a, const RerankedChunk& b) { return a.score > b.score; });
  return out;
}

// ------------------------------------------------------------------ enums

std::string_view to_string(RetrievalMode mode) noexcept {
  switch (mode) {
    case RetrievalMode::Off: return "off";
    case RetrievalMode::Dense: return "dense";
    case RetrievalMode::Hybrid: return "hybrid";
    case RetrievalMode::Sequential: return "sequential";
  }
  return "off";
}

RetrievalMode retrieval_mode_from_string(std::string_view name) {
  for (auto m : {RetrievalMode::Off, RetrievalMode::Dense, RetrievalMode::Hybrid,
                 RetrievalMode::Sequential})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown retrieval mode '" + std::string(name) + "'");
}

std::string_view to_string(ChunkUnit unit) noexcept {
  return unit == ChunkUnit::Chars ? "chars" : "tokens";
}

ChunkUnit chunk_unit_from_string(std::string_view name) {
  if (name == "chars") return ChunkUnit::Chars;
  if (name == "tokens") return ChunkUnit::Tokens;
  throw ConfigError("unknown chunk unit '" + std::string(name) + "'");
}

std::string_view to_string(SequentialOrder order) noexcept {
  return order == SequentialOrder::DenseThenBm25 ? "dense_then_bm25" : "bm25_then_dense";
}

SequentialOrder sequential_order_from_string(std::string_view name) {
  if (name == "dense_then_bm25") return SequentialOrder::DenseThenBm25;
  if (name == "bm25_then_dense") return SequentialOrder::Bm25ThenDense;
  throw ConfigError("unknown sequential order '" + std::string(name) + "'");
}

void RetrievalSettings::validate() const {
  if (chunk_size == 0 || chunk_size <= overlap) throw ConfigError("chunk_size must exceed overlap");
  if (candidates == 0) throw ConfigError("retrieval candidates must be positive");
  if (shortlist < candidates) throw ConfigError("sequential shortlist must be >= candidates");
  if (std::isnan(threshold)) throw ConfigError("rerank threshold is NaN");
  if (!(bm25.k1 > 0.0)) throw ConfigError("BM25 k1 must be positive");
  if (!(bm25.b >= 0.0 && bm25.b <= 1.0)) throw ConfigError("BM25 b must lie in [0,1]");
}

// ------------------------------------------------------------------ context

RetrievedContext full_report_context(const Report& report) {
  RetrievedContext ctx;
  ctx.report_id = report.id;
  ctx.selected_text = report.text;
  return ctx;
}

RetrievedContext select_context(const Report& report, const LabelSchema& schema,
                                const RetrievalSettings& settings, Embedder& embedder,
                                RerankScorer& scorer) {
  RetrievedContext ctx = full_report_context(report);
  if (settings.mode == RetrievalMode::Off) return ctx;

  SplitOptions split;
  split.chunk_size = settings.chunk_size;
  split.overlap = settings.overlap;
  split.unit = settings.chunk_unit;
  const std::vector<Chunk> chunks = split_recursive(report.id, report.text, split);
  if (chunks.empty()) return ctx;

  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  const Eigen::MatrixXd embeddings = embedder.embed(texts);
  if (embeddings.cols() != static_cast<Eigen::Index>(chunks.size()))
    throw Error("embedder returned " + std::to_string(embeddings.cols()) + " vectors for " +
                std::to_string(chunks.size()) + " chunks");
  const auto index = VectorIndexd::from_columns(embeddings);
  const std::string query_text = schema.retrieval_keywords;
  const std::vector<std::string> query_only{query_text};
  const Eigen::VectorXd query_vector = embedder.embed(query_only).col(0);
  const std::vector<std::string> query_terms = tokenize(query_text);
  const Bm25Index bm25(chunks, settings.bm25);

  std::vector<ScoredChunk> hits;
  switch (settings.mode) {
    case RetrievalMode::Dense:
      hits = dense_search(index, query_vector, settings.candidates);
      break;
    case RetrievalMode::Hybrid: {
      const auto lexical = bm25.rank(query_terms, settings.candidates);
      const auto dense = dense_search(index, query_vector, settings.candidates);
      hits = hybrid_search(std::span<const ScoredChunk>(lexical), std::span<const ScoredChunk>(dense),
                           settings.candidates);
      break;
    }
    case RetrievalMode::Sequential:
      hits = sequential_search(bm25, index, query_terms, query_vector,
                               std::max(settings.shortlist, settings.candidates),
                               settings.candidates, settings.sequential_order);
      break;
    case RetrievalMode::Off:
      break;
  }
  if (hits.empty()) return ctx;

  std::vector<Chunk> candidate_chunks;
  std::map<std::size_t, double> retrieval_scores;
  for (const auto& h : hits) {
    candidate_chunks.push_back(chunks.at(h.chunk));
    retrieval_scores[h.chunk] = h.score;
  }
  const auto ranked = rerank(query_text, candidate_chunks, scorer);
  for (const auto& r : ranked)
    ctx.candidates.push_back({r.chunk, retrieval_scores[r.chunk.index], r.score});

  const auto& best = ranked.front();
  ctx.rerank_score = best.score;
  if (best.score >= settings.threshold) {
    ctx.selected_text = best.chunk.text;
    ctx.rag_used = true;
  }
  return ctx;
}

}  // namespace clinex
