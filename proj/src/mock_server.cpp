#include <mutex>
#include <random>
#include <thread>

#include "clinex/data.hpp"
#include "clinex/lm_client.hpp"
#include "clinex/prompting.hpp"
#include "clinex/text.hpp"

// After Eigen: <resolv.h> defines _res, which Eigen uses as a parameter name.
#include <httplib.h>

namespace clinex {

using nlohmann::json;

std::string_view to_string(MockMode mode) noexcept {
  switch (mode) {
    case MockMode::Oracle: return "oracle";
    case MockMode::NoisyOracle: return "noisy";
    case MockMode::Garbage: return "garbage";
    case MockMode::Malformed: return "malformed";
    case MockMode::LengthNoisy: return "length-noisy";
  }
  return "oracle";
}

MockMode mock_mode_from_string(std::string_view name) {
  for (auto m : {MockMode::Oracle, MockMode::NoisyOracle, MockMode::Garbage, MockMode::Malformed,
                 MockMode::LengthNoisy})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown mock mode '" + std::string(name) + "'");
}

std::optional<std::string> report_id_from_prompt(std::string_view prompt) {
  std::optional<std::size_t> found;
  for (std::size_t at = prompt.find(kReportIdMarker); at != std::string_view::npos;
       at = prompt.find(kReportIdMarker, at + 1)) {
    if (at == 0 || prompt[at - 1] == '\n') found = at;
  }
  if (!found) return std::nullopt;
  std::string_view rest = prompt.substr(*found + kReportIdMarker.size());
  rest = rest.substr(0, rest.find('\n'));
  rest = trim(rest);
  if (rest.empty()) return std::nullopt;
  return std::string(rest);
}

namespace {

const json& mock_responses() {
  static const json j = json::parse(data::file("mock/responses.json"));
  return j;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

std::string_view MockModel::garbage_text() {
  static const std::string text = mock_responses().at("garbage").get<std::string>();
  return text;
}

std::vector<std::string> MockModel::malformed_templates() {
  return mock_responses().at("malformed").get<std::vector<std::string>>();
}

MockModel::MockModel(LabelSchema schema, std::map<std::string, std::string> gold, MockOptions options)
    : schema_(std::move(schema)),
      gold_(std::move(gold)),
      options_(options),
      embedder_(options.embedding_dim, options.seed) {
  if (!(options_.epsilon >= 0.0 && options_.epsilon <= 1.0))
    throw ConfigError("mock epsilon must be a probability");
}

double MockModel::error_rate(std::string_view prompt) const {
  switch (options_.mode) {
    case MockMode::NoisyOracle:
      return options_.epsilon;
    case MockMode::LengthNoisy:
      return std::min(options_.epsilon_cap,
                      options_.epsilon + options_.epsilon_per_kword *
                                             static_cast<double>(word_count(prompt)) / 1000.0);
    default:
      return 0.0;
  }
}

std::string MockModel::respond(const GenerationRequest& request) const {
  const auto id = report_id_from_prompt(request.prompt);
  if (options_.mode == MockMode::Garbage || !id) return std::string(garbage_text());
  auto it = gold_.find(*id);
  if (it == gold_.end()) return std::string(garbage_text());
  const std::string& gold = it->second;

  // Seeded per (mock seed, request seed, model, report) so answers do not
  // depend on call order.
  std::uint64_t key = hash_combine(options_.seed, static_cast<std::uint64_t>(request.seed.value_or(0)));
  key = hash_combine(key, fnv1a64(request.model));
  key = hash_combine(key, fnv1a64(*id));
  std::mt19937_64 rng(key);

  switch (options_.mode) {
    case MockMode::Oracle:
      return render_answer_json(schema_.answer_key, gold);
    case MockMode::NoisyOracle:
    case MockMode::LengthNoisy: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) >= error_rate(request.prompt) || schema_.valid_labels.size() < 2)
        return render_answer_json(schema_.answer_key, gold);
      std::vector<std::string> wrong;
      for (const auto& l : schema_.valid_labels)
        if (l != gold) wrong.push_back(l);
      std::uniform_int_distribution<std::size_t> pick(0, wrong.size() - 1);
      return render_answer_json(schema_.answer_key, wrong[pick(rng)]);
    }
    case MockMode::Malformed: {
      const auto templates = malformed_templates();
      std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
      return replace_all(replace_all(templates[pick(rng)], "{key}", schema_.answer_key), "{label}", gold);
    }
    case MockMode::Garbage:
      break;
  }
  return std::string(garbage_text());
}

Eigen::VectorXd MockModel::embed(std::string_view text) const { return embedder_.raw(text); }

double MockModel::rerank(std::string_view query, std::string_view passage) const {
  TokenOverlapScorer scorer;
  return scorer.score(query, passage);
}

// ------------------------------------------------------------------ server

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
  // stop() and wait() may run on different threads; only one may join.
  std::mutex join_mutex;
  std::shared_ptr<const MockModel> model;
  std::atomic<int> failures_left{0};
};

MockServer::MockServer(std::shared_ptr<const MockModel> model, int port)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  impl_->failures_left = impl_->model->options().fail_first;
  auto& srv = impl_->server;
  Impl* impl = impl_.get();

  auto parse = [](const httplib::Request& req, httplib::Response& res) -> std::optional<json> {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      res.status = 400;
      res.set_content(R"({"error":"invalid JSON body"})", "application/json");
      return std::nullopt;
    }
    return body;
  };

  srv.Post("/api/generate", [this, impl, parse](const httplib::Request& req, httplib::Response& res) {
    ++generate_calls_;
    const auto& opts = impl->model->options();
    if (opts.delay.count() > 0) std::this_thread::sleep_for(opts.delay);
    if (impl->failures_left.fetch_sub(1) > 0) {
      res.status = 503;
      res.set_content(R"({"error":"model is loading"})", "application/json");
      return;
    }
    auto body = parse(req, res);
    if (!body) return;
    GenerationRequest request;
    try {
      request = generation_request_from_wire(*body);
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const json reply = {{"model", request.model},
                        {"created_at", "1970-01-01T00:00:00Z"},
                        {"response", impl->model->respond(request)},
                        {"done", true}};
    res.set_content(reply.dump(), "application/json");
  });

  srv.Post("/api/embeddings", [this, impl, parse](const httplib::Request& req, httplib::Response& res) {
    ++embedding_calls_;
    auto body = parse(req, res);
    if (!body) return;
    if (!body->contains("prompt") || !body->at("prompt").is_string()) {
      res.status = 400;
      res.set_content(R"({"error":"missing prompt"})", "application/json");
      return;
    }
    const Eigen::VectorXd v = impl->model->embed(body->at("prompt").get<std::string>());
    json arr = json::array();
    for (Eigen::Index d = 0; d < v.size(); ++d) arr.push_back(v(d));
    res.set_content(json{{"embedding", arr}}.dump(), "application/json");
  });

  srv.Post("/api/rerank", [impl, parse](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req, res);
    if (!body) return;
    try {
      const auto query = body->at("query").get<std::string>();
      json results = json::array();
      const auto& docs = body->at("documents");
      for (std::size_t i = 0; i < docs.size(); ++i)
        results.push_back({{"index", i},
                           {"relevance_score", impl->model->rerank(query, docs[i].get<std::string>())}});
      res.set_content(json{{"results", results}}.dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  srv.Get("/api/tags", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"models":[{"name":"mock"}]})", "application/json");
  });

  if (port == 0) {
    port_ = srv.bind_to_any_port("127.0.0.1");
  } else {
    port_ = srv.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw Error("mock server could not bind a port");
  impl_->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  srv.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  wait();
}

void MockServer::wait() {
  if (!impl_) return;
  std::lock_guard lock(impl_->join_mutex);
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::unique_ptr<MockServer> mock_server(MockOptions options, const LabelSchema& schema,
                                        std::map<std::string, std::string> gold) {
  return std::make_unique<MockServer>(
      std::make_shared<const MockModel>(schema, std::move(gold), options));
}

}  // namespace clinex
