#include <cmath>

#include "clinex/retrieval.hpp"
#include "clinex/text.hpp"

namespace clinex {

Bm25Index::Bm25Index(std::span<const Chunk> chunks, Bm25Params params) : params_(params) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(chunks.size());
  for (const auto& c : chunks) docs.push_back(tokenize(c.text));
  build(std::move(docs));
}

Bm25Index::Bm25Index(std::vector<std::vector<std::string>> documents, Bm25Params params)
    : params_(params) {
  build(std::move(documents));
}

void Bm25Index::build(std::vector<std::vector<std::string>> documents) {
  if (!(params_.k1 > 0.0)) throw ConfigError("BM25 k1 must be positive");
  if (!(params_.b >= 0.0 && params_.b <= 1.0)) throw ConfigError("BM25 b must lie in [0,1]");
  term_counts_.resize(documents.size());
  lengths_.resize(documents.size());
  double total = 0.0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& t : documents[d]) ++term_counts_[d][t];
    for (const auto& [term, count] : term_counts_[d]) ++df_[term];
    lengths_[d] = static_cast<double>(documents[d].size());
    total += lengths_[d];
  }
  avgdl_ = documents.empty() ? 0.0 : total / static_cast<double>(documents.size());
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(size());
  const double nt = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - nt + 0.5) / (nt + 0.5));
}

double Bm25Index::score(std::span<const std::string> query_terms, std::size_t document) const {
  const auto& counts = term_counts_.at(document);
  // avgdl is zero only when every chunk is token-free, and then no term matches.
  const double norm = avgdl_ > 0.0 ? lengths_[document] / avgdl_ : 0.0;
  const double k = params_.k1 * (1.0 - params_.b + params_.b * norm);
  double total = 0.0;
  for (const auto& term : query_terms) {
    auto it = counts.find(term);
    if (it == counts.end()) continue;
    const double f = static_cast<double>(it->second);
    total += idf(term) * f * (params_.k1 + 1.0) / (f + k);
  }
  return total;
}

Eigen::VectorXd Bm25Index::score_all(std::span<const std::string> query_terms) const {
  Eigen::VectorXd s(static_cast<Eigen::Index>(size()));
  for (std::size_t d = 0; d < size(); ++d) s(static_cast<Eigen::Index>(d)) = score(query_terms, d);
  return s;
}

std::vector<ScoredChunk> Bm25Index::rank(std::span<const std::string> query_terms,
                                         std::size_t n) const {
  const Eigen::VectorXd s = score_all(query_terms);
  std::vector<ScoredChunk> hits;
  for (Eigen::Index d = 0; d < s.size(); ++d)
    if (s(d) > 0.0) hits.push_back({static_cast<std::size_t>(d), s(d)});
  sort_by_score(hits);
  if (hits.size() > n) hits.resize(n);
  return hits;
}

double bm25_score(std::span<const std::string> query_terms, std::size_t chunk,
                  const Bm25Index& stats) {
  return stats.score(query_terms, chunk);
}

}  // namespace clinex
