#include <doctest.h>

#include <cstdlib>
#include <random>
#include <thread>

#include "clinex/lm_client.hpp"
#include "clinex/postprocess.hpp"
#include "clinex/prompting.hpp"

#include <httplib.h>

using namespace clinex;
using namespace std::chrono_literals;

namespace {

std::string prompt_for(const std::string& id) {
  RetrievedContext ctx;
  ctx.report_id = id;
  ctx.selected_text = "Some report text.";
  return build_prompt(ctx, builtin_schema(Task::Radiology), {}, {});
}

ClientOptions fast(const std::string& endpoint) {
  ClientOptions o;
  o.endpoint = endpoint;
  o.backoff_base = 1ms;
  o.timeout = 5000ms;
  return o;
}

GenerationRequest request_for(const std::string& id, bool json_mode = true) {
  GenerationRequest r;
  r.model = "llama3";
  r.prompt = prompt_for(id);
  r.json_mode = json_mode;
  return r;
}

}  // namespace

TEST_CASE("wire format round-trips") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    GenerationRequest r;
    r.model = "m" + std::to_string(rng() % 100);
    r.prompt = "prompt \"quoted\" \n" + std::to_string(rng());
    r.json_mode = rng() % 2;
    r.temperature = static_cast<double>(rng() % 100) / 10.0;
    r.top_k = 1 + static_cast<std::int64_t>(rng() % 50);
    r.top_p = static_cast<double>(1 + rng() % 10) / 10.0;
    if (rng() % 2) r.seed = static_cast<std::int64_t>(rng() % 100000);
    CHECK(generation_request_from_wire(nlohmann::json::parse(to_wire(r).dump())) == r);
  }
  GenerationRequest r = request_for("x");
  const auto wire = to_wire(r);
  CHECK(wire.at("stream") == false);
  CHECK(wire.at("format") == "json");
  CHECK(wire.at("options").contains("temperature"));
  r.json_mode = false;
  CHECK_FALSE(to_wire(r).contains("format"));
  r.top_p = 0.0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("report id marker") {
  CHECK(report_id_from_prompt(prompt_for("rad-000042")) == "rad-000042");
  CHECK_FALSE(report_id_from_prompt("no marker here").has_value());
  CHECK(report_id_from_prompt("Report ID: a\nReport: x Report ID: b\nReport ID: c\n") == "c");
}

TEST_CASE("oracle, garbage and malformed mock modes over HTTP") {
  const auto rad = builtin_schema(Task::Radiology);
  SUBCASE("oracle radiology") {
    auto server = mock_server({}, rad, {{"r1", "2a"}});
    LmClient client(fast(server->endpoint()));
    const auto res = client.generate(request_for("r1"));
    CHECK(res.raw_text == "{\"score\": \"2a\"}");
    CHECK(res.model_echo == "llama3");
    CHECK(res.latency_ms >= 0.0);
    CHECK(client.generate(request_for("unknown")).raw_text == MockModel::garbage_text());
  }
  SUBCASE("oracle pathology") {
    auto server = mock_server({}, builtin_schema(Task::Pathology), {{"p1", "negative"}});
    LmClient client(fast(server->endpoint()));
    auto req = request_for("p1");
    CHECK(client.generate(req).raw_text == "{\"idh_status\": \"negative\"}");
  }
  SUBCASE("garbage") {
    MockOptions o;
    o.mode = MockMode::Garbage;
    auto server = mock_server(o, rad, {{"r1", "2a"}});
    const auto text = LmClient(fast(server->endpoint())).generate(request_for("r1")).raw_text;
    CHECK(text.starts_with("As an AI model"));
    CHECK(parse_label(text, rad) == ParsedLabel::invalid(InvalidReason::NoJson));
  }
  SUBCASE("malformed") {
    MockOptions o;
    o.mode = MockMode::Malformed;
    auto server = mock_server(o, rad, {{"r1", "2a"}, {"r2", "NR"}});
    LmClient client(fast(server->endpoint()));
    std::vector<std::string> expected;
    for (auto t : MockModel::malformed_templates()) {
      for (const auto& [from, to] : {std::pair{"{key}", "score"}, std::pair{"{label}", "2a"}})
        for (auto pos = t.find(from); pos != std::string::npos; pos = t.find(from)) t.replace(pos, std::string(from).size(), to);
      expected.push_back(t);
    }
    for (int seed = 0; seed < 30; ++seed) {
      auto req = request_for("r1");
      req.seed = seed;
      const auto text = client.generate(req).raw_text;
      CHECK(std::find(expected.begin(), expected.end(), text) != expected.end());
    }
  }
}

TEST_CASE("json mode answers parse in oracle and noisy modes") {
  const auto rad = builtin_schema(Task::Radiology);
  for (auto mode : {MockMode::Oracle, MockMode::NoisyOracle}) {
    MockOptions o;
    o.mode = mode;
    o.epsilon = 0.5;
    const MockModel model(rad, {{"r1", "3b"}}, o);
    for (int seed = 0; seed < 100; ++seed) {
      auto req = request_for("r1");
      req.seed = seed;
      const auto raw = model.respond(req);
      const auto parsed = nlohmann::json::parse(raw);
      CHECK(parsed.is_object());
      CHECK(parse_label(raw, rad).is_valid());
    }
  }
}

TEST_CASE("noisy oracle error fraction") {
  const auto rad = builtin_schema(Task::Radiology);
  std::map<std::string, std::string> gold;
  for (int i = 0; i < 10000; ++i) gold["r" + std::to_string(i)] = rad.valid_labels[static_cast<std::size_t>(i) % 13];
  MockOptions o;
  o.mode = MockMode::NoisyOracle;
  o.epsilon = 0.1;
  o.seed = 2024;
  const MockModel model(rad, gold, o);
  int wrong = 0;
  for (const auto& [id, label] : gold) {
    const auto parsed = parse_label(model.respond(request_for(id)), rad);
    REQUIRE(parsed.is_valid());
    wrong += parsed.label() != label;
  }
  CHECK(std::abs(wrong / 10000.0 - 0.10) <= 0.01);
}

TEST_CASE("noise is keyed by request seed, model and report") {
  const auto rad = builtin_schema(Task::Radiology);
  MockOptions o;
  o.mode = MockMode::NoisyOracle;
  o.epsilon = 0.5;
  const MockModel model(rad, {{"r1", "1a"}}, o);
  auto req = request_for("r1");
  req.seed = 5;
  const auto a = model.respond(req);
  CHECK(model.respond(req) == a);
  std::set<std::string> outcomes;
  for (int s = 0; s < 40; ++s) {
    req.seed = s;
    outcomes.insert(model.respond(req));
  }
  CHECK(outcomes.size() > 1);
}

TEST_CASE("length-noisy error rate grows with prompt length") {
  MockOptions o;
  o.mode = MockMode::LengthNoisy;
  o.epsilon = 0.02;
  o.epsilon_per_kword = 0.2;
  o.epsilon_cap = 0.5;
  const MockModel model(builtin_schema(Task::Pathology), {}, o);
  std::string prompt;
  for (int i = 0; i < 1000; ++i) prompt += "word ";
  CHECK(model.error_rate(prompt) == doctest::Approx(0.22));
  for (int i = 0; i < 9000; ++i) prompt += "word ";
  CHECK(model.error_rate(prompt) == 0.5);
  CHECK(model.error_rate("") == doctest::Approx(0.02));
}

TEST_CASE("retries on 5xx and gives up after three") {
  const auto rad = builtin_schema(Task::Radiology);
  MockOptions o;
  o.fail_first = 3;
  {
    auto server = mock_server(o, rad, {{"r1", "4"}});
    LmClient client(fast(server->endpoint()));
    CHECK(client.generate(request_for("r1")).raw_text == "{\"score\": \"4\"}");
    CHECK(server->generate_calls() == 4);
  }
  o.fail_first = 4;
  {
    auto server = mock_server(o, rad, {{"r1", "4"}});
    LmClient client(fast(server->endpoint()));
    try {
      client.generate(request_for("r1"));
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      CHECK(e.status() == 503);
    }
    CHECK(server->generate_calls() == 4);
  }
}

TEST_CASE("backoff doubles from the base delay") {
  MockOptions o;
  o.fail_first = 3;
  auto server = mock_server(o, builtin_schema(Task::Radiology), {{"r1", "4"}});
  auto opts = fast(server->endpoint());
  opts.backoff_base = 20ms;
  const auto t0 = std::chrono::steady_clock::now();
  LmClient(opts).generate(request_for("r1"));
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed >= 140ms);  // 20 + 40 + 80
}

TEST_CASE("server down is a transport error") {
  int port = 0;
  {
    auto server = mock_server({}, builtin_schema(Task::Radiology), {});
    port = server->port();
  }
  LmClient client(fast("http://127.0.0.1:" + std::to_string(port)));
  CHECK_THROWS_AS(client.generate(request_for("r1")), TransportError);
  CHECK_THROWS_AS(client.ping(), TransportError);
}

TEST_CASE("4xx is not retried") {
  httplib::Server srv;
  std::atomic<int> calls{0};
  srv.Post("/api/generate", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 404;
    res.set_content("{\"error\":\"model not found\"}", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  LmClient client(fast("http://127.0.0.1:" + std::to_string(port)));
  try {
    client.generate(request_for("r1"));
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.status() == 404);
    CHECK(e.body().find("model not found") != std::string::npos);
  }
  CHECK(calls == 1);
  srv.stop();
  t.join();
}

TEST_CASE("slow server times out") {
  MockOptions o;
  o.delay = 600ms;
  auto server = mock_server(o, builtin_schema(Task::Radiology), {{"r1", "4"}});
  auto opts = fast(server->endpoint());
  opts.timeout = 150ms;
  opts.max_retries = 0;
  CHECK_THROWS_AS(LmClient(opts).generate(request_for("r1")), TimeoutError);
}

TEST_CASE("embeddings and rerank over HTTP") {
  auto server = mock_server({}, builtin_schema(Task::Pathology), {});
  LmClient client(fast(server->endpoint()));
  const std::vector<std::string> texts = {"idh mutation detected", "idh mutation detected positive",
                                          "the ventricles are normal", "idh mutation detected"};
  const Eigen::MatrixXd v = client.embed("gte-large", texts);
  REQUIRE(v.cols() == 4);
  CHECK(v.rows() == 64);
  for (Eigen::Index j = 0; j < v.cols(); ++j) CHECK(v.col(j).norm() == doctest::Approx(1.0));
  CHECK(v.col(0) == v.col(3));
  CHECK(v.col(0).dot(v.col(1)) > v.col(0).dot(v.col(2)));
  CHECK_THROWS_AS(client.embed("gte-large", std::vector<std::string>{}), ConfigError);

  CHECK(client.rerank("bge", "idh detected", "IDH1 mutation was detected") == doctest::Approx(0.5));
  RemoteReranker logit(client, "bge", ScoreScale::Logit);
  CHECK(logit.score("idh", "no match") == doctest::Approx(0.5));

  RemoteEmbedder remote(client, "gte-large");
  CachingEmbedder cached(remote);
  const auto before = server->embedding_calls();
  const Eigen::MatrixXd a = cached.embed(texts);
  CHECK(server->embedding_calls() - before == 3);
  const Eigen::MatrixXd b = cached.embed(texts);
  CHECK(server->embedding_calls() - before == 3);
  CHECK(a == b);
  CHECK(a.col(1) == v.col(1));
}

TEST_CASE("client is safe for concurrent calls") {
  const auto rad = builtin_schema(Task::Radiology);
  std::map<std::string, std::string> gold;
  for (int i = 0; i < 40; ++i) gold["r" + std::to_string(i)] = rad.valid_labels[static_cast<std::size_t>(i) % 13];
  auto server = mock_server({}, rad, gold);
  const LmClient client(fast(server->endpoint()));
  std::atomic<int> correct{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = t; i < 40; i += 4) {
        const std::string id = "r" + std::to_string(i);
        if (client.generate(request_for(id)).raw_text == render_answer_json("score", gold.at(id))) ++correct;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(correct == 40);
}

TEST_CASE("endpoint resolution") {
  unsetenv(kEndpointEnv);
  CHECK(resolve_endpoint("http://a:1") == "http://a:1");
  setenv(kEndpointEnv, "http://b:2", 1);
  CHECK(resolve_endpoint("http://a:1") == "http://b:2");
  setenv(kEndpointEnv, "", 1);
  CHECK(resolve_endpoint("http://a:1") == "http://a:1");
  unsetenv(kEndpointEnv);
  CHECK_THROWS_AS(LmClient(fast("not a url")), ConfigError);
  CHECK_NOTHROW(LmClient(fast("http://localhost:11434/prefix/")));
}
