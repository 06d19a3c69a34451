#include <doctest.h>

#include <csignal>
#include <thread>

#include "clinex/aggregate.hpp"
#include "clinex/sweep.hpp"
#include "support.hpp"

using namespace clinex;
using nlohmann::json;

namespace {

const std::string kCli = CLINEX_CLI;

testing::ProcessResult cli(const testing::TempDir& dir, std::vector<std::string> args,
                           const std::filesystem::path& in = "/dev/null") {
  args.insert(args.begin(), kCli);
  args.push_back("--no-timestamps");
  return testing::run(args, dir.path(), in);
}

std::string path(const testing::TempDir& dir, const std::string& name) { return (dir.path() / name).string(); }

}  // namespace

TEST_CASE("generate-corpus") {
  testing::TempDir dir;
  auto r = cli(dir, {"generate-corpus", "--spec", "radiology", "--n", "120", "--out", path(dir, "a.jsonl")});
  CHECK(r.exit_code == 0);
  CHECK(testing::count_lines(dir.path() / "a.jsonl") == 120);
  CHECK(r.out.find("NR") != std::string::npos);
  const auto corpus = load_corpus(dir.path() / "a.jsonl");
  CHECK(corpus.reports.size() == 120);
  CHECK(corpus.annotations.size() == 120);

  r = cli(dir, {"generate-corpus", "--spec", "radiology", "--n", "120", "--out", path(dir, "b.jsonl")});
  CHECK(r.exit_code == 0);
  CHECK(testing::read_file(dir.path() / "a.jsonl") == testing::read_file(dir.path() / "b.jsonl"));
  r = cli(dir, {"generate-corpus", "--spec", "radiology", "--n", "120", "--seed", "9", "--out", path(dir, "c.jsonl")});
  CHECK(testing::read_file(dir.path() / "a.jsonl") != testing::read_file(dir.path() / "c.jsonl"));

  testing::write_file(dir.path() / "bad.json",
                      R"({"task": "pathology", "n_reports": 10, "class_distribution": {"positive": 0.5, "negative": 0.3, "NR": 0.1}})");
  r = cli(dir, {"generate-corpus", "--spec", path(dir, "bad.json"), "--out", path(dir, "d.jsonl")});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("sums to") != std::string::npos);

  r = cli(dir, {"generate-corpus", "--spec", path(dir, "missing.json"), "--out", path(dir, "d.jsonl")});
  CHECK(r.exit_code == 2);
  r = cli(dir, {"generate-corpus", "--bogus-flag"});
  CHECK(r.exit_code == 2);
}

TEST_CASE("extract") {
  testing::TempDir dir;
  const auto schema = builtin_schema(Task::Radiology);
  auto server = mock_server({}, schema, {{"rep-4", "4"}});
  testing::write_file(dir.path() / "report.txt",
                      "MRI brain. Findings: Increased enhancement compatible with progression. Impression: BT-RADS 4.\n");
  testing::write_file(dir.path() / "config.json", R"({"json_mode": true, "retrieval": {"mode": "hybrid"}})");

  auto r = cli(dir, {"extract", "--endpoint", server->endpoint(), "--report", path(dir, "report.txt"), "--report-id",
                     "rep-4", "--config", path(dir, "config.json"), "--show-raw"});
  REQUIRE(r.exit_code == 0);
  auto out = json::parse(r.out);
  CHECK(out.at("label") == "4");
  CHECK(out.at("report_id") == "rep-4");
  CHECK(out.at("raw_output") == R"({"score": "4"})");
  CHECK(out.contains("rag_used"));

  r = cli(dir, {"extract", "--endpoint", server->endpoint(), "--report", "-", "--report-id", "rep-4"},
          dir.path() / "report.txt");
  REQUIRE(r.exit_code == 0);
  out = json::parse(r.out);
  CHECK(out.at("label") == "4");
  CHECK_FALSE(out.contains("raw_output"));

  MockOptions garbage;
  garbage.mode = MockMode::Garbage;
  auto bad_server = mock_server(garbage, schema, {{"rep-4", "4"}});
  r = cli(dir, {"extract", "--endpoint", bad_server->endpoint(), "--report", path(dir, "report.txt"), "--report-id", "rep-4"});
  CHECK(r.exit_code == 0);
  CHECK(json::parse(r.out).at("label") == "INVALID");
  CHECK(json::parse(r.out).at("reason") == "no_json");

  r = cli(dir, {"extract", "--schema", path(dir, "nope.json"), "--endpoint", server->endpoint(), "--report",
                path(dir, "report.txt")});
  CHECK(r.exit_code == 2);

  const auto dead = "http://127.0.0.1:" + std::to_string([] {
    auto s = mock_server({}, builtin_schema(Task::Radiology), {});
    return s->port();
  }());
  r = cli(dir, {"extract", "--endpoint", dead, "--report", path(dir, "report.txt")});
  CHECK(r.exit_code == 3);
}

TEST_CASE("sweep and report") {
  testing::TempDir dir;
  REQUIRE(cli(dir, {"generate-corpus", "--spec", "pathology", "--n", "60", "--out", path(dir, "corpus.jsonl")}).exit_code == 0);
  const auto corpus = load_corpus(dir.path() / "corpus.jsonl");
  const auto schema = builtin_schema(Task::Pathology);
  auto server = mock_server({}, schema, corpus.gold_map());
  testing::write_file(dir.path() / "grid.json", R"({
    "base": {"json_mode": true},
    "axes": {"model_name": ["llama3", "phi3"], "retrieval.mode": ["off", "dense"]},
    "sample": {"n": 40, "seed": 3}
  })");
  const std::vector<std::string> common = {"--schema", "pathology", "--corpus", path(dir, "corpus.jsonl"),
                                           "--grid", path(dir, "grid.json"), "--endpoint", server->endpoint()};
  auto with = [&](std::vector<std::string> args, const std::string& store) {
    args.insert(args.end(), common.begin(), common.end());
    args.push_back("--store");
    args.push_back(path(dir, store));
    return args;
  };

  auto r = cli(dir, with({"sweep"}, "s.jsonl"));
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out).at("appended") == 160);
  CHECK(testing::count_lines(dir.path() / "s.jsonl") == 160);

  r = cli(dir, with({"sweep"}, "s.jsonl"));
  CHECK(r.exit_code == 0);
  CHECK(json::parse(r.out).at("appended") == 0);
  CHECK(json::parse(r.out).at("already_done") == 160);

  r = cli(dir, with({"report", "--compare", "retrieval.mode", "--csv", path(dir, "a.csv")}, "s.jsonl"));
  REQUIRE(r.exit_code == 0);
  const auto csv = testing::read_file(dir.path() / "a.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) CHECK(line.find(",4,1,1,1,1,1,1,1,") != std::string::npos);
  const auto cmp = json::parse(testing::read_file(dir.path() / "s.jsonl.comparisons.json"));
  CHECK(cmp.at("comparisons").at(0).at("outcome") == "no_difference");
  CHECK(r.out.find("retrieval.mode") != std::string::npos);

  // Reports from two independent sweeps are identical.
  REQUIRE(cli(dir, with({"sweep", "--parallelism", "1"}, "t.jsonl")).exit_code == 0);
  REQUIRE(cli(dir, with({"report", "--csv", path(dir, "b.csv")}, "t.jsonl")).exit_code == 0);
  CHECK(testing::read_file(dir.path() / "b.csv") == csv);

  // Interrupted sweep: report refuses, then resume completes it.
  r = cli(dir, with({"sweep", "--max-records", "25"}, "u.jsonl"));
  CHECK(r.exit_code == 0);
  r = cli(dir, with({"report"}, "u.jsonl"));
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("missing") != std::string::npos);
  r = cli(dir, with({"sweep"}, "u.jsonl"));
  CHECK(json::parse(r.out).at("appended") == 135);
  CHECK(cli(dir, with({"report"}, "u.jsonl")).exit_code == 0);

  // The registry alone is enough to report.
  r = cli(dir, {"report", "--schema", "pathology", "--corpus", path(dir, "corpus.jsonl"), "--store", path(dir, "s.jsonl")});
  CHECK(r.exit_code == 0);

  server->stop();
  r = cli(dir, with({"sweep"}, "v.jsonl"));
  CHECK(r.exit_code == 3);
}

TEST_CASE("report ordering") {
  testing::TempDir dir;
  const auto schema = builtin_schema(Task::Radiology);
  Corpus corpus;
  const std::vector<std::string> labels = {"1a", "2a", "3a", "4"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto id = "r" + std::to_string(i);
    corpus.reports.push_back(make_report(id, Task::Radiology, "text"));
    corpus.annotations.push_back({id, labels[i]});
  }
  save_corpus(dir.path() / "corpus.jsonl", corpus);

  // Last prediction per model; the rest are correct unless noted.
  struct Row {
    const char* model;
    const char* last;
    int wrong_first;
  };
  const Row rows[] = {{"dmodel", "4", 2}, {"amodel", "1a", 0}, {"cmodel", "4", 0}, {"bmodel", "NR", 0}};
  std::vector<PipelineConfig> configs;
  {
    ResultStore store(dir.path() / "s.jsonl");
    for (const auto& row : rows) {
      PipelineConfig c;
      c.model_name = row.model;
      configs.push_back(c);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        std::string label = i + 1 == labels.size() ? row.last : labels[i];
        if (static_cast<int>(i) < row.wrong_first) label = "NR";
        ExtractionRecord rec;
        rec.report_id = corpus.reports[i].id;
        rec.config_hash = config_hash(c);
        rec.raw_output = render_answer_json("score", label);
        rec.parsed = ParsedLabel::valid(label);
        store.append(rec);
      }
    }
  }
  register_configs(dir.path() / "s.jsonl", configs);
  // accuracy: c 1.0; a and b 0.75 with macro F1 2/3 and 3/4; d 0.5.
  const auto r = cli(dir, {"report", "--corpus", path(dir, "corpus.jsonl"), "--store", path(dir, "s.jsonl"), "--csv",
                           path(dir, "r.csv")});
  REQUIRE(r.exit_code == 0);
  std::vector<std::string> order;
  std::istringstream lines(testing::read_file(dir.path() / "r.csv"));
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) order.push_back(line.substr(0, line.find(',')));
  CHECK((order == std::vector<std::string>{"cmodel", "bmodel", "amodel", "dmodel"}));
  const auto pos = [&](const char* m) { return r.out.find(m); };
  CHECK(pos("cmodel") < pos("bmodel"));
  CHECK(pos("bmodel") < pos("amodel"));
  CHECK(pos("amodel") < pos("dmodel"));
}

TEST_CASE("mock-serve answers and stops on SIGTERM") {
  testing::TempDir dir;
  const auto out = dir.path() / "serve.out";
  const pid_t pid = testing::spawn({kCli, "mock-serve", "--port", "0", "--no-timestamps"}, out, dir.path() / "serve.err");
  std::string endpoint;
  for (int i = 0; i < 500 && endpoint.empty(); ++i) {
    const auto text = testing::read_file(out);
    if (text.find('\n') != std::string::npos) endpoint = text.substr(0, text.find('\n'));
    else std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE_FALSE(endpoint.empty());
  ClientOptions co;
  co.endpoint = endpoint;
  CHECK_NOTHROW(LmClient(co).ping());

  kill(pid, SIGTERM);
  int status = 0;
  pid_t done = 0;
  for (int i = 0; i < 500 && done == 0; ++i) {
    done = waitpid(pid, &status, WNOHANG);
    if (done == 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  if (done == 0) {
    kill(pid, SIGKILL);
    waitpid(pid, &status, 0);
  }
  REQUIRE(done == pid);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
