#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "clinex/common.hpp"
#include "clinex/corpus.hpp"

namespace clinex {

// ------------------------------------------------------------------ chunks

struct Chunk {
  std::string report_id;
  std::size_t index = 0;
  std::string text;
  /// Byte offsets [start, end) into the normalized report text.
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

enum class ChunkUnit { Chars, Tokens };

struct SplitOptions {
  std::size_t chunk_size = 70;
  std::size_t overlap = 20;
  ChunkUnit unit = ChunkUnit::Chars;
  /// Tried in order. The first is the sentence separator: splitting there never
  /// overlaps. Any later separator or a hard cut is a mid-sentence split and
  /// the next chunk starts `overlap` units before it.
  std::vector<std::string> separators = {". ", "; ", " "};
};

/// Splits text into chunks of at most chunk_size units. Chars are UTF-8 code
/// points; tokens are whitespace-delimited words including their trailing
/// spaces. Chunks cover every byte of the input.
std::vector<Chunk> split_recursive(std::string_view report_id, std::string_view text,
                                   const SplitOptions& options = {});

// ------------------------------------------------------------------ scored

struct ScoredChunk {
  std::size_t chunk = 0;
  double score = 0.0;

  friend bool operator==(const ScoredChunk&, const ScoredChunk&) = default;
};

/// Descending score, ascending chunk index on ties.
inline void sort_by_score(std::vector<ScoredChunk>& hits) {
  std::sort(hits.begin(), hits.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk < b.chunk;
  });
}

/// Descending score, except that neighbours whose scores differ by at most
/// `tolerance` form one tie group ordered by chunk index.
inline void sort_by_score(std::vector<ScoredChunk>& hits, double tolerance) {
  sort_by_score(hits);
  for (std::size_t i = 0; i < hits.size();) {
    std::size_t j = i + 1;
    while (j < hits.size() && hits[j - 1].score - hits[j].score <= tolerance) ++j;
    if (j - i > 1)
      std::sort(hits.begin() + static_cast<std::ptrdiff_t>(i), hits.begin() + static_cast<std::ptrdiff_t>(j),
                [](const ScoredChunk& a, const ScoredChunk& b) { return a.chunk < b.chunk; });
    i = j;
  }
}

// ------------------------------------------------------------------ bm25

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 statistics over one report's chunks.
class Bm25Index {
 public:
  Bm25Index(std::span<const Chunk> chunks, Bm25Params params = {});
  /// Pre-tokenized documents; document i is chunk index i.
  Bm25Index(std::vector<std::vector<std::string>> documents, Bm25Params params = {});

  std::size_t size() const noexcept { return lengths_.size(); }
  double average_length() const noexcept { return avgdl_; }
  std::size_t document_frequency(const std::string& term) const;
  double idf(const std::string& term) const;
  const Bm25Params& params() const noexcept { return params_; }

  double score(std::span<const std::string> query_terms, std::size_t document) const;
  Eigen::VectorXd score_all(std::span<const std::string> query_terms) const;
  /// Top-n chunks with a positive score.
  std::vector<ScoredChunk> rank(std::span<const std::string> query_terms, std::size_t n) const;

 private:
  void build(std::vector<std::vector<std::string>> documents);

  Bm25Params params_;
  std::vector<std::unordered_map<std::string, std::size_t>> term_counts_;
  std::vector<double> lengths_;
  std::unordered_map<std::string, std::size_t> df_;
  double avgdl_ = 0.0;
};

double bm25_score(std::span<const std::string> query_terms, std::size_t chunk,
                  const Bm25Index& stats);

// ------------------------------------------------------------------ dense

/// Flat exact index of unit-normalized embeddings, one column per entry.
template <typename Scalar>
class VectorIndex {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit VectorIndex(Eigen::Index dimension) : vectors_(dimension, 0) {
    if (dimension <= 0) throw ConfigError("vector index dimension must be positive");
  }

  /// Adds every column of `embeddings`; column j refers to chunk j.
  template <typename Derived>
  static VectorIndex from_columns(const Eigen::MatrixBase<Derived>& embeddings) {
    VectorIndex index(embeddings.rows());
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j)
      index.add(static_cast<std::size_t>(j), embeddings.col(j));
    return index;
  }

  Eigen::Index dimension() const noexcept { return vectors_.rows(); }
  std::size_t size() const noexcept { return chunks_.size(); }
  std::size_t chunk_at(std::size_t entry) const { return chunks_.at(entry); }
  auto vector_at(std::size_t entry) const { return vectors_.col(static_cast<Eigen::Index>(entry)); }

  /// Stores the normalized vector; a zero vector has no direction and is rejected.
  template <typename Derived>
  void add(std::size_t chunk, const Eigen::MatrixBase<Derived>& v) {
    if (v.size() != dimension())
      throw ConfigError("embedding has dimension " + std::to_string(v.size()) + ", index expects " +
                        std::to_string(dimension()));
    const Scalar norm = v.norm();
    if (!(norm > Scalar(0))) throw ConfigError("cannot index a zero embedding");
    vectors_.conservativeResize(Eigen::NoChange, vectors_.cols() + 1);
    vectors_.col(vectors_.cols() - 1) = v.template cast<Scalar>() / norm;
    chunks_.push_back(chunk);
  }

  /// Similarities closer than this are ties: rounding in normalization and
  /// the dot product can separate vectors that point the same way.
  double tie_tolerance() const noexcept {
    return std::max(1e-12, 16.0 * static_cast<double>(dimension()) *
                               static_cast<double>(std::numeric_limits<Scalar>::epsilon()));
  }

  /// Exhaustive cosine search: top-n by similarity, ties (within
  /// tie_tolerance) by chunk index.
  template <typename Derived>
  std::vector<ScoredChunk> search(const Eigen::MatrixBase<Derived>& query, std::size_t n) const {
    if (query.size() != dimension())
      throw ConfigError("query has dimension " + std::to_string(query.size()) + ", index expects " +
                        std::to_string(dimension()));
    const Vector q = query.template cast<Scalar>();
    const Scalar qn = q.norm();
    std::vector<ScoredChunk> hits;
    hits.reserve(size());
    if (qn > Scalar(0)) {
      const Vector sims = vectors_.transpose() * (q / qn);
      for (std::size_t e = 0; e < size(); ++e)
        hits.push_back({chunks_[e], static_cast<double>(sims(static_cast<Eigen::Index>(e)))});
    } else {
      for (std::size_t e = 0; e < size(); ++e) hits.push_back({chunks_[e], 0.0});
    }
    sort_by_score(hits, tie_tolerance());
    if (hits.size() > n) hits.resize(n);
    return hits;
  }

 private:
  Matrix vectors_;
  std::vector<std::size_t> chunks_;
};

using VectorIndexd = VectorIndex<double>;
using VectorIndexf = VectorIndex<float>;

template <typename Scalar, typename Derived>
std::vector<ScoredChunk> dense_search(const VectorIndex<Scalar>& index,
                                      const Eigen::MatrixBase<Derived>& query, std::size_t n) {
  return index.search(query, n);
}

// ------------------------------------------------------------------ fusion

inline constexpr double kRrfConstant = 60.0;

/// Reciprocal-rank fusion of two rankings (chunk indices, best first):
/// sum of 1 / (60 + rank) with 1-based ranks. Top-n, ties by chunk index.
std::vector<ScoredChunk> hybrid_search(std::span<const std::size_t> bm25_ranking,
                                       std::span<const std::size_t> dense_ranking, std::size_t n);
std::vector<ScoredChunk> hybrid_search(std::span<const ScoredChunk> bm25_ranking,
                                       std::span<const ScoredChunk> dense_ranking, std::size_t n);

enum class SequentialOrder { DenseThenBm25, Bm25ThenDense };

/// Two-stage retrieval. DenseThenBm25: dense top-m shortlist re-scored by
/// BM25, ties broken by dense rank. Bm25ThenDense swaps the stages.
template <typename Scalar, typename Derived>
std::vector<ScoredChunk> sequential_search(const Bm25Index& bm25, const VectorIndex<Scalar>& dense,
                                           std::span<const std::string> query_terms,
                                           const Eigen::MatrixBase<Derived>& query_vector,
                                           std::size_t shortlist_m, std::size_t n,
                                           SequentialOrder order = SequentialOrder::DenseThenBm25);

// ------------------------------------------------------------------ backends

/// Text embedding backend. Returns one unit-norm column per input text.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::MatrixXd embed(std::span<const std::string> texts) = 0;
};

/// Scores a (query, passage) pair; larger is more relevant.
class RerankScorer {
 public:
  virtual ~RerankScorer() = default;
  virtual double score(std::string_view query, std::string_view passage) = 0;
};

/// Deterministic embedder: the sum of per-token pseudo-random vectors seeded
/// by a hash of each token, so equal token multisets give equal vectors.
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(Eigen::Index dimension = 64, std::uint64_t seed = 0)
      : dimension_(dimension), seed_(seed) {}
  /// Unnormalized embedding of one text.
  Eigen::VectorXd raw(std::string_view text) const;
  Eigen::MatrixXd embed(std::span<const std::string> texts) override;
  Eigen::Index dimension() const noexcept { return dimension_; }

 private:
  Eigen::Index dimension_;
  std::uint64_t seed_;
};

/// Fraction of distinct query tokens present in the passage.
class TokenOverlapScorer final : public RerankScorer {
 public:
  double score(std::string_view query, std::string_view passage) override;
};

class RerankError : public Error {
 public:
  RerankError(std::size_t candidate, const std::string& what)
      : Error("reranker failed on candidate " + std::to_string(candidate) + ": " + what),
        candidate_(candidate) {}
  std::size_t candidate_index() const noexcept { return candidate_; }

 private:
  std::size_t candidate_;
};

struct RerankedChunk {
  Chunk chunk;
  double score = 0.0;
  std::size_t input_position = 0;
};

/// Scores every candidate, clamps to [0,1], sorts descending (stable on ties).
std::vector<RerankedChunk> rerank(std::string_view query, std::span<const Chunk> candidates,
                                  RerankScorer& scorer);

// ------------------------------------------------------------------ context

enum class RetrievalMode { Off, Dense, Hybrid, Sequential };

std::string_view to_string(RetrievalMode mode) noexcept;
RetrievalMode retrieval_mode_from_string(std::string_view name);
std::string_view to_string(ChunkUnit unit) noexcept;
ChunkUnit chunk_unit_from_string(std::string_view name);
std::string_view to_string(SequentialOrder order) noexcept;
SequentialOrder sequential_order_from_string(std::string_view name);

struct RetrievalSettings {
  RetrievalMode mode = RetrievalMode::Off;
  std::size_t chunk_size = 70;
  std::size_t overlap = 20;
  ChunkUnit chunk_unit = ChunkUnit::Chars;
  /// Candidates per retrieval method handed to the reranker.
  std::size_t candidates = 4;
  /// Stage-one shortlist size for sequential retrieval.
  std::size_t shortlist = 8;
  /// Below this rerank score the full report is used instead of a chunk.
  double threshold = 0.2;
  SequentialOrder sequential_order = SequentialOrder::DenseThenBm25;
  Bm25Params bm25;
  std::string embedding_model = "gte-large";
  std::string reranker_model = "bge-reranker-v2-m3";

  void validate() const;
  friend bool operator==(const RetrievalSettings& a, const RetrievalSettings& b) {
    return a.mode == b.mode && a.chunk_size == b.chunk_size && a.overlap == b.overlap &&
           a.chunk_unit == b.chunk_unit && a.candidates == b.candidates &&
           a.shortlist == b.shortlist && a.threshold == b.threshold &&
           a.sequential_order == b.sequential_order && a.bm25.k1 == b.bm25.k1 &&
           a.bm25.b == b.bm25.b && a.embedding_model == b.embedding_model &&
           a.reranker_model == b.reranker_model;
  }
};

struct ContextCandidate {
  Chunk chunk;
  double retrieval_score = 0.0;
  double rerank_score = 0.0;
};

struct RetrievedContext {
  std::string report_id;
  std::string selected_text;
  bool rag_used = false;
  /// Best rerank score, recorded even when it fell below the threshold.
  std::optional<double> rerank_score;
  /// Reranked candidates, best first.
  std::vector<ContextCandidate> candidates;
};

/// Context covering the whole report, as used when retrieval is off.
RetrievedContext full_report_context(const Report& report);

RetrievedContext select_context(const Report& report, const LabelSchema& schema,
                                const RetrievalSettings& settings, Embedder& embedder,
                                RerankScorer& scorer);

// ------------------------------------------------------------------ impl

template <typename Scalar, typename Derived>
std::vector<ScoredChunk> sequential_search(const Bm25Index& bm25, const VectorIndex<Scalar>& dense,
                                           std::span<const std::string> query_terms,
                                           const Eigen::MatrixBase<Derived>& query_vector,
                                           std::size_t shortlist_m, std::size_t n,
                                           SequentialOrder order) {
  if (shortlist_m < n) throw ConfigError("sequential shortlist must be at least n");
  std::vector<ScoredChunk> shortlist;
  if (order == SequentialOrder::DenseThenBm25) {
    shortlist = dense.search(query_vector, shortlist_m);
  } else {
    const Eigen::VectorXd all = bm25.score_all(query_terms);
    for (Eigen::Index i = 0; i < all.size(); ++i)
      shortlist.push_back({static_cast<std::size_t>(i), all(i)});
    sort_by_score(shortlist);
    if (shortlist.size() > shortlist_m) shortlist.resize(shortlist_m);
  }

  struct Staged {
    ScoredChunk hit;
    std::size_t first_rank;
  };
  std::vector<Staged> staged;
  staged.reserve(shortlist.size());
  const Eigen::VectorXd all_dense = [&] {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bm25.size()));
    if (order == SequentialOrder::Bm25ThenDense)
      for (const auto& h : dense.search(query_vector, dense.size()))
        s(static_cast<Eigen::Index>(h.chunk)) = h.score;
    return s;
  }();
  for (std::size_t r = 0; r < shortlist.size(); ++r) {
    const std::size_t c = shortlist[r].chunk;
    const double second = order == SequentialOrder::DenseThenBm25
                              ? bm25.score(query_terms, c)
                              : all_dense(static_cast<Eigen::Index>(c));
    staged.push_back({{c, second}, r});
  }
  std::stable_sort(staged.begin(), staged.end(), [](const Staged& a, const Staged& b) {
    if (a.hit.score != b.hit.score) return a.hit.score > b.hit.score;
    return a.first_rank < b.first_rank;
  });
  std::vector<ScoredChunk> out;
  for (std::size_t i = 0; i < staged.size() && i < n; ++i) out.push_back(staged[i].hit);
  return out;
}

}  // namespace clinex
