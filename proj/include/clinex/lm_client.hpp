#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <unordered_map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "clinex/common.hpp"
#include "clinex/corpus.hpp"
#include "clinex/retrieval.hpp"

namespace clinex {

// ------------------------------------------------------------------ wire types

struct GenerationRequest {
  std::string model;
  std::string prompt;
  bool json_mode = false;
  double temperature = 0.0;
  std::int64_t top_k = 40;
  double top_p = 0.9;
  std::optional<std::int64_t> seed;

  void validate() const;
  friend bool operator==(const GenerationRequest&, const GenerationRequest&) = default;
};

struct GenerationResponse {
  /// Completion exactly as the server sent it.
  std::string raw_text;
  double latency_ms = 0.0;
  std::string model_echo;
};

/// Body of POST /api/generate.
nlohmann::json to_wire(const GenerationRequest& request);
GenerationRequest generation_request_from_wire(const nlohmann::json& body);

// ------------------------------------------------------------------ errors

class LmError : public Error {
 public:
  using Error::Error;
};

/// Could not reach the server.
class TransportError : public LmError {
 public:
  using LmError::LmError;
};

/// Server answered with a non-2xx status or an unusable body.
class ProtocolError : public LmError {
 public:
  ProtocolError(int status, std::string body, const std::string& what)
      : LmError(what), status_(status), body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class TimeoutError : public LmError {
 public:
  using LmError::LmError;
};

// ------------------------------------------------------------------ client

inline constexpr const char* kEndpointEnv = "EXTRACTOR_LM_ENDPOINT";
inline constexpr const char* kDefaultEndpoint = "http://127.0.0.1:11434";

/// EXTRACTOR_LM_ENDPOINT when set and non-empty, otherwise `configured`.
std::string resolve_endpoint(std::string configured);

struct ClientOptions {
  std::string endpoint = kDefaultEndpoint;
  std::chrono::milliseconds timeout{120'000};
  /// Retries after the first attempt for connection failures, timeouts, 5xx.
  int max_retries = 3;
  /// Delay before retry i (0-based) is backoff_base * 2^i.
  std::chrono::milliseconds backoff_base{500};
};

/// Client for a local model server speaking the Ollama-style HTTP API.
/// Each call opens its own connection, so one client may be shared by threads.
class LmClient {
 public:
  explicit LmClient(ClientOptions options);

  GenerationResponse generate(const GenerationRequest& request) const;
  /// One GET /api/tags without retries. Throws TransportError when the server
  /// cannot be reached.
  void ping() const;
  /// One L2-normalized column per text.
  Eigen::MatrixXd embed(const std::string& model, std::span<const std::string> texts) const;
  /// Relevance of one passage to the query as reported by POST /api/rerank.
  double rerank(const std::string& model, std::string_view query, std::string_view passage) const;

  const ClientOptions& options() const noexcept { return options_; }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  ClientOptions options_;
};

class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(const LmClient& client, std::string model)
      : client_(client), model_(std::move(model)) {}
  Eigen::MatrixXd embed(std::span<const std::string> texts) override {
    return client_.embed(model_, texts);
  }

 private:
  const LmClient& client_;
  std::string model_;
};

enum class ScoreScale { Probability, Logit };

/// Cross-encoder reranker behind the model server. Logit-scale backends are
/// mapped through the logistic function so scores lie in [0,1].
class RemoteReranker final : public RerankScorer {
 public:
  RemoteReranker(const LmClient& client, std::string model, ScoreScale scale = ScoreScale::Probability)
      : client_(client), model_(std::move(model)), scale_(scale) {}
  double score(std::string_view query, std::string_view passage) override;

 private:
  const LmClient& client_;
  std::string model_;
  ScoreScale scale_;
};

/// Memoizes embeddings by text. Thread-safe; used across sweep workers since
/// the same chunks recur for every configuration.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(Embedder& inner) : inner_(inner) {}
  Eigen::MatrixXd embed(std::span<const std::string> texts) override;

 private:
  Embedder& inner_;
  std::mutex mutex_;
  std::unordered_map<std::string, Eigen::VectorXd> cache_;
};

// ------------------------------------------------------------------ mock

enum class MockMode { Oracle, NoisyOracle, Garbage, Malformed, LengthNoisy };

std::string_view to_string(MockMode mode) noexcept;
MockMode mock_mode_from_string(std::string_view name);

struct MockOptions {
  MockMode mode = MockMode::Oracle;
  /// Wrong-answer probability for NoisyOracle, and the floor for LengthNoisy.
  double epsilon = 0.0;
  /// LengthNoisy: added error probability per 1,000 prompt words.
  double epsilon_per_kword = 0.0;
  double epsilon_cap = 0.95;
  std::uint64_t seed = 0;
  Eigen::Index embedding_dim = 64;
  std::chrono::milliseconds delay{0};
  /// The first `fail_first` generate calls answer HTTP 503.
  int fail_first = 0;
};

/// Marker line build_prompt writes ahead of the context; the mock reads the
/// report id from it.
inline constexpr std::string_view kReportIdMarker = "Report ID: ";

/// Deterministic stand-in for a model server. Answers are keyed by the report
/// id found in the prompt; unknown ids get the garbage completion.
class MockModel {
 public:
  MockModel(LabelSchema schema, std::map<std::string, std::string> gold, MockOptions options);

  std::string respond(const GenerationRequest& request) const;
  Eigen::VectorXd embed(std::string_view text) const;
  double rerank(std::string_view query, std::string_view passage) const;

  /// Error probability applied to a prompt in the current mode.
  double error_rate(std::string_view prompt) const;

  const MockOptions& options() const noexcept { return options_; }
  const LabelSchema& schema() const noexcept { return schema_; }

  static std::string_view garbage_text();
  static std::vector<std::string> malformed_templates();

 private:
  LabelSchema schema_;
  std::map<std::string, std::string> gold_;
  MockOptions options_;
  MockEmbedder embedder_;
};

std::optional<std::string> report_id_from_prompt(std::string_view prompt);

/// Serves a MockModel over HTTP on 127.0.0.1. Stops on destruction.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<const MockModel> model, int port = 0);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  std::string endpoint() const;
  int port() const noexcept { return port_; }
  std::size_t generate_calls() const noexcept { return generate_calls_.load(); }
  std::size_t embedding_calls() const noexcept { return embedding_calls_.load(); }
  /// Blocks the calling thread until stop() is called from elsewhere.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<std::size_t> generate_calls_{0};
  std::atomic<std::size_t> embedding_calls_{0};
};

std::unique_ptr<MockServer> mock_server(MockOptions options, const LabelSchema& schema,
                                        std::map<std::string, std::string> gold);

}  // namespace clinex
