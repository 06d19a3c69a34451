#include "clinex/lm_client.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>
#include <unordered_map>

#include <httplib.h>

namespace clinex {

using nlohmann::json;

// ------------------------------------------------------------------ wire

void GenerationRequest::validate() const {
  if (model.empty()) throw ConfigError("generation request has no model");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0,1]");
}

json to_wire(const GenerationRequest& r) {
  json options = {{"temperature", r.temperature}, {"top_k", r.top_k}, {"top_p", r.top_p}};
  if (r.seed) options["seed"] = *r.seed;
  json body = {{"model", r.model}, {"prompt", r.prompt}, {"stream", false}, {"options", options}};
  if (r.json_mode) body["format"] = "json";
  return body;
}

GenerationRequest generation_request_from_wire(const json& body) {
  GenerationRequest r;
  try {
    r.model = body.at("model").get<std::string>();
    r.prompt = body.at("prompt").get<std::string>();
    if (body.value("stream", false)) throw ConfigError("streaming requests are not supported");
    r.json_mode = body.contains("format") && body.at("format") == "json";
    if (body.contains("options")) {
      const auto& o = body.at("options");
      r.temperature = o.value("temperature", r.temperature);
      r.top_k = o.value("top_k", r.top_k);
      r.top_p = o.value("top_p", r.top_p);
      if (o.contains("seed") && !o.at("seed").is_null()) r.seed = o.at("seed").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed generate request: ") + e.what());
  }
  return r;
}

std::string resolve_endpoint(std::string configured) {
  if (const char* env = std::getenv(kEndpointEnv); env && *env) return env;
  return configured;
}

// ------------------------------------------------------------------ client

namespace {

struct ParsedEndpoint {
  std::string origin;  // scheme://host:port
  std::string base_path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, re)) throw ConfigError("invalid endpoint URL '" + endpoint + "'");
  std::string base = m[2].matched ? m[2].str() : "";
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {m[1].str(), base};
}

}  // namespace

LmClient::LmClient(ClientOptions options) : options_(std::move(options)) {
  parse_endpoint(options_.endpoint);
}

json LmClient::post(const std::string& path, const json& body) const {
  const ParsedEndpoint ep = parse_endpoint(options_.endpoint);
  const std::string payload = body.dump();
  const auto timeout = options_.timeout;
  std::exception_ptr last;

  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff_base * (1LL << (attempt - 1)));

    httplib::Client cli(ep.origin);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    const auto started = std::chrono::steady_clock::now();
    auto res = cli.Post(ep.base_path + path, payload, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && elapsed >= timeout * 9 / 10);
      const std::string what = options_.endpoint + path + ": " + httplib::to_string(err);
      last = timed_out ? std::make_exception_ptr(TimeoutError("timed out calling " + what))
                       : std::make_exception_ptr(TransportError("cannot reach " + what));
      continue;
    }
    if (res->status >= 500) {
      last = std::make_exception_ptr(ProtocolError(
          res->status, res->body, options_.endpoint + path + " returned HTTP " + std::to_string(res->status)));
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw ProtocolError(res->status, res->body,
                          options_.endpoint + path + " returned HTTP " + std::to_string(res->status));
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
      throw ProtocolError(res->status, res->body, options_.endpoint + path + " returned a non-JSON body");
    return parsed;
  }
  std::rethrow_exception(last);
}

void LmClient::ping() const {
  const ParsedEndpoint ep = parse_endpoint(options_.endpoint);
  httplib::Client cli(ep.origin);
  const auto timeout = std::min(options_.timeout, std::chrono::milliseconds(10'000));
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  auto res = cli.Get(ep.base_path + "/api/tags");
  if (!res) throw TransportError("cannot reach " + options_.endpoint + ": " + httplib::to_string(res.error()));
}

GenerationResponse LmClient::generate(const GenerationRequest& request) const {
  request.validate();
  const auto started = std::chrono::steady_clock::now();
  const json reply = post("/api/generate", to_wire(request));
  GenerationResponse out;
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (!reply.contains("response") || !reply.at("response").is_string())
    throw ProtocolError(200, reply.dump(), "generate reply lacks a string \"response\" field");
  out.raw_text = reply.at("response").get<std::string>();
  out.model_echo = reply.value("model", std::string{});
  return out;
}

Eigen::MatrixXd LmClient::embed(const std::string& model, std::span<const std::string> texts) const {
  if (texts.empty()) throw ConfigError("embed needs at least one text");
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const json reply = post("/api/embeddings", json{{"model", model}, {"prompt", texts[i]}});
    if (!reply.contains("embedding") || !reply.at("embedding").is_array())
      throw ProtocolError(200, reply.dump(), "embeddings reply lacks an \"embedding\" array");
    const auto& arr = reply.at("embedding");
    if (i == 0) out.resize(static_cast<Eigen::Index>(arr.size()), static_cast<Eigen::Index>(texts.size()));
    if (arr.empty() || static_cast<Eigen::Index>(arr.size()) != out.rows())
      throw ProtocolError(200, "", "embedding dimension changed between texts");
    Eigen::VectorXd v(out.rows());
    for (Eigen::Index d = 0; d < v.size(); ++d) {
      const auto& x = arr[static_cast<std::size_t>(d)];
      if (!x.is_number()) throw ProtocolError(200, "", "embedding contains a non-number");
      v(d) = x.get<double>();
    }
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ProtocolError(200, "", "embedding has zero or non-finite norm");
    out.col(static_cast<Eigen::Index>(i)) = v / norm;
  }
  return out;
}

double LmClient::rerank(const std::string& model, std::string_view query,
                        std::string_view passage) const {
  const json reply = post("/api/rerank", json{{"model", model},
                                              {"query", std::string(query)},
                                              {"documents", json::array({std::string(passage)})}});
  try {
    return reply.at("results").at(0).at("relevance_score").get<double>();
  } catch (const json::exception&) {
    throw ProtocolError(200, reply.dump(), "rerank reply lacks results[0].relevance_score");
  }
}

double RemoteReranker::score(std::string_view query, std::string_view passage) {
  const double s = client_.rerank(model_, query, passage);
  return scale_ == ScoreScale::Logit ? 1.0 / (1.0 + std::exp(-s)) : s;
}

Eigen::MatrixXd CachingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) return inner_.embed(texts);
  std::vector<std::string> batch;
  std::unordered_map<std::string, Eigen::VectorXd> found;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : texts) {
      if (found.contains(t)) continue;
      auto it = cache_.find(t);
      if (it == cache_.end()) {
        found.emplace(t, Eigen::VectorXd());
        batch.push_back(t);
      } else {
        found.emplace(t, it->second);
      }
    }
  }
  if (!batch.empty()) {
    const Eigen::MatrixXd fresh = inner_.embed(batch);
    std::lock_guard lock(mutex_);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      found[batch[k]] = fresh.col(static_cast<Eigen::Index>(k));
      cache_.emplace(batch[k], found[batch[k]]);
    }
  }
  Eigen::MatrixXd out(found.at(texts.front()).size(), static_cast<Eigen::Index>(texts.size()));
  for (std::size_t i = 0; i < texts.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = found.at(texts[i]);
  return out;
}

}  // namespace clinex
