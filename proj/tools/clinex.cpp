// clinex: synthetic corpora, single-report extraction, configuration sweeps
// and sweep reports against an Ollama-style model server.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "clinex/aggregate.hpp"
#include "clinex/data.hpp"
#include "clinex/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clinex;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kTransport = 3, kIncomplete = 4 };

struct Options {
  std::string endpoint = kDefaultEndpoint;
  std::string schema = "radiology";
  std::string corpus;
  std::string store;
  std::string grid;
  std::size_t parallelism = 4;
  std::optional<std::uint64_t> seed;
  bool show_raw = false;
  bool no_timestamps = false;
  std::string log_level = "info";

  // generate-corpus
  std::string spec = "radiology";
  std::string out;
  std::optional<std::size_t> n_reports;
  // extract
  std::string config;
  std::string report = "-";
  std::string report_id = "report";
  // sweep
  std::optional<std::size_t> max_records;
  // report
  std::vector<std::string> compare;
  std::string csv;
  std::string comparisons;
  std::size_t top = 10;
  // mock-serve
  std::string mode = "oracle";
  double epsilon = 0.0;
  double per_kword = 0.0;
  int port = 11434;
};

std::string slurp(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::string& path) {
  if (path == "-") return slurp(std::cin);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return slurp(in);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw Error("cannot write " + path.string());
}

// A path, or the name of a built-in schema ("radiology", "pathology").
LabelSchema resolve_schema(const std::string& name) {
  if (fs::exists(name)) return load_schema(name);
  if (name == "radiology" || name == "pathology") return builtin_schema(task_from_string(name));
  throw ConfigError("schema file " + name + " does not exist");
}

json resolve_spec(const std::string& name) {
  if (fs::exists(name)) {
    json j = json::parse(read_text(name), nullptr, false);
    if (j.is_discarded()) throw ConfigError(name + " is not valid JSON");
    return j;
  }
  if (name == "radiology" || name == "pathology") return json::parse(data::file("specs/" + name + ".json"));
  throw ConfigError("corpus spec " + name + " does not exist");
}

Corpus require_corpus(const std::string& path) {
  if (path.empty()) throw ConfigError("--corpus is required");
  if (!fs::exists(path)) throw ConfigError("corpus file " + path + " does not exist");
  return load_corpus(path);
}

ClientOptions client_options(const Options& o) {
  ClientOptions c;
  c.endpoint = resolve_endpoint(o.endpoint);
  return c;
}

int cmd_generate_corpus(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  json j = resolve_spec(o.spec);
  if (o.n_reports) j["n_reports"] = *o.n_reports;
  if (o.seed) j["seed"] = *o.seed;
  const CorpusSpec spec = corpus_spec_from_json(j);
  const LabelSchema schema = builtin_schema(spec.task);
  const Corpus corpus = generate_synthetic_corpus(spec, schema);
  save_corpus(o.out, corpus);

  std::map<std::string, std::size_t> counts;
  for (const auto& a : corpus.annotations) ++counts[a.label];
  std::printf("%zu %s reports written to %s\n", corpus.reports.size(), std::string(to_string(spec.task)).c_str(),
              o.out.c_str());
  for (const auto& label : schema.valid_labels) {
    const auto c = counts[label];
    std::printf("  %-10s %7zu  %6.2f%%\n", label.c_str(), c, 100.0 * c / corpus.reports.size());
  }
  return kOk;
}

int cmd_extract(const Options& o) {
  const LabelSchema schema = resolve_schema(o.schema);
  const PipelineConfig config = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
  const Report report = make_report(o.report_id, schema.task, read_text(o.report));
  Backend backend(client_options(o));
  const ExtractionInputs inputs{schema, default_exemplars(schema)};
  const ExtractionRecord rec = extract_one(report, config, inputs, backend);
  if (rec.error) {
    spdlog::error("{}", *rec.error);
    return kTransport;
  }
  json out = {{"report_id", rec.report_id}, {"label", rec.parsed.display()}, {"rag_used", rec.rag_used}};
  if (!rec.parsed.is_valid()) out["reason"] = to_string(rec.parsed.reason());
  if (rec.rerank_score) out["rerank_score"] = *rec.rerank_score;
  if (o.show_raw) out["raw_output"] = rec.raw_output;
  std::cout << out.dump() << '\n';
  return kOk;
}

int cmd_sweep(const Options& o) {
  if (o.grid.empty()) throw ConfigError("--grid is required");
  if (o.store.empty()) throw ConfigError("--store is required");
  const LabelSchema schema = resolve_schema(o.schema);
  const SweepDefinition def = load_sweep_definition(o.grid);
  const Corpus corpus = require_corpus(o.corpus);
  for (const auto& r : corpus.reports)
    if (r.task != schema.task) throw ConfigError("corpus report " + r.id + " belongs to another task");
  const auto configs = enumerate_configs(def.grid);

  std::vector<Report> reports = corpus.reports;
  if (def.sample) reports = sample_reports(corpus.reports, def.sample->n, o.seed.value_or(def.sample->seed));

  Backend backend(client_options(o));
  backend.client().ping();
  spdlog::info("{} configurations x {} reports against {}", configs.size(), reports.size(),
               backend.client().options().endpoint);

  SweepOptions options;
  options.parallelism = o.parallelism;
  options.timestamps = !o.no_timestamps;
  options.max_new_records = o.max_records;
  options.on_progress = [](const SweepProgress& p) {
    if (p.appended % 100 == 0 || p.appended == p.pending)
      spdlog::info("{}/{} records written ({} backend errors)", p.appended, p.pending, p.errors);
  };
  const ExtractionInputs inputs{schema, default_exemplars(schema)};
  const SweepSummary s = run_sweep(reports, configs, inputs, backend, o.store, options);
  std::cout << json{{"total_pairs", s.total_pairs},
                    {"already_done", s.already_done},
                    {"appended", s.appended},
                    {"backend_errors", s.errors}}
                   .dump()
            << '\n';
  return kOk;
}

int cmd_report(const Options& o) {
  if (o.store.empty()) throw ConfigError("--store is required");
  const LabelSchema schema = resolve_schema(o.schema);
  const Corpus corpus = require_corpus(o.corpus);
  std::vector<PipelineConfig> configs =
      o.grid.empty() ? load_config_registry(o.store) : enumerate_configs(load_sweep_definition(o.grid).grid);
  if (configs.empty()) throw DataError("no configurations registered for " + o.store + "; pass --grid");
  const auto records = load_records(o.store);

  AggregateOptions options;
  options.compare_axes = o.compare;
  const AggregateReport report = aggregate(records, configs, corpus.gold_map(), schema, options);
  const auto rows = ranked(report.configs);

  const fs::path csv = o.csv.empty() ? fs::path(o.store + ".report.csv") : fs::path(o.csv);
  const fs::path cmp = o.comparisons.empty() ? fs::path(o.store + ".comparisons.json") : fs::path(o.comparisons);
  write_text(csv, to_csv(rows));
  write_text(cmp, comparisons_json(report).dump(2) + "\n");
  std::cout << top_table(rows, o.top);
  for (const auto& c : report.comparisons) {
    std::printf("%s: %s -> %s, mean delta %+.4f", c.axis.c_str(), c.value_a.dump().c_str(),
                c.value_b.dump().c_str(), c.mean_delta);
    if (c.sd_delta) std::printf(" +/- %.4f", *c.sd_delta);
    if (c.paired) std::printf(", paired t = %.4f, p = %.4g", c.paired->statistic, *c.paired->p_value);
    std::printf(" (%s)\n", c.outcome.c_str());
  }
  spdlog::info("wrote {} and {}", csv.string(), cmp.string());
  return kOk;
}

int cmd_mock_serve(const Options& o) {
  const LabelSchema schema = resolve_schema(o.schema);
  std::map<std::string, std::string> gold;
  if (!o.corpus.empty()) gold = require_corpus(o.corpus).gold_map();
  MockOptions mo;
  mo.mode = mock_mode_from_string(o.mode);
  mo.epsilon = o.epsilon;
  mo.epsilon_per_kword = o.per_kword;
  mo.seed = o.seed.value_or(0);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto model = std::make_shared<const MockModel>(schema, std::move(gold), mo);
  MockServer server(model, o.port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  std::cout << server.endpoint() << std::endl;
  spdlog::info("mock backend ({}) listening on {}", o.mode, server.endpoint());
  server.wait();
  waiter.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured data extraction from clinical reports with local language models"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--endpoint", o.endpoint, "Model server URL (EXTRACTOR_LM_ENDPOINT overrides)");
  app.add_option("--schema", o.schema, "Label schema file, or radiology / pathology");
  app.add_option("--corpus", o.corpus, "Corpus JSONL");
  app.add_option("--store", o.store, "Result store JSONL");
  app.add_option("--grid", o.grid, "Sweep definition JSON");
  app.add_option("--parallelism", o.parallelism, "Concurrent generations")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Seed override");
  app.add_flag("--show-raw", o.show_raw, "Include raw model output");
  app.add_flag("--no-timestamps", o.no_timestamps, "Omit wall-clock timestamps from records and logs");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic labelled corpus");
  gen->add_option("--spec", o.spec, "Corpus spec JSON, or radiology / pathology");
  gen->add_option("--out", o.out, "Output JSONL")->required();
  gen->add_option("--n", o.n_reports, "Number of reports")->check(CLI::PositiveNumber);

  auto* ext = app.add_subcommand("extract", "Run one report through the pipeline");
  ext->add_option("--config", o.config, "Pipeline config JSON");
  ext->add_option("--report", o.report, "Report text file, - for stdin");
  ext->add_option("--report-id", o.report_id, "Identifier used in the prompt");

  auto* sweep = app.add_subcommand("sweep", "Run or resume a configuration sweep");
  sweep->add_option("--max-records", o.max_records, "Stop after this many new records");

  auto* report = app.add_subcommand("report", "Aggregate a result store");
  report->add_option("--compare", o.compare, "Two-valued config axis to compare, e.g. retrieval.mode");
  report->add_option("--csv", o.csv, "CSV output path");
  report->add_option("--comparisons", o.comparisons, "Comparisons JSON output path");
  report->add_option("--top", o.top, "Rows in the printed table");

  auto* mock = app.add_subcommand("mock-serve", "Serve the deterministic mock backend");
  mock->add_option("--mode", o.mode, "oracle, noisy, garbage, malformed or length-noisy");
  mock->add_option("--epsilon", o.epsilon, "Error probability");
  mock->add_option("--per-kword", o.per_kword, "Added error per 1,000 prompt words");
  mock->add_option("--port", o.port, "Port, 0 for any free port");

  // Subcommands accept the global options after their name too.
  for (auto* sub : {gen, ext, sweep, report, mock}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  auto logger = spdlog::stderr_color_mt("clinex");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(o.log_level));
  spdlog::set_pattern(o.no_timestamps ? "%l: %v" : "[%Y-%m-%d %H:%M:%S.%e] %l: %v");

  try {
    if (*gen) return cmd_generate_corpus(o);
    if (*ext) return cmd_extract(o);
    if (*sweep) return cmd_sweep(o);
    if (*report) return cmd_report(o);
    if (*mock) return cmd_mock_serve(o);
  } catch (const MissingRecordsError& e) {
    spdlog::error("{}", e.what());
    return kIncomplete;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const LmError& e) {
    spdlog::error("{}", e.what());
    return kTransport;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kIncomplete;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kUsage;
}
