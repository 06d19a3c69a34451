#include "clinex/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clinex/data.hpp"
#include "clinex/text.hpp"

namespace clinex {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Task task) noexcept {
  return task == Task::Radiology ? "radiology" : "pathology";
}

Task task_from_string(std::string_view name) {
  const std::string lower = ascii_lower(trim(name));
  if (lower == "radiology") return Task::Radiology;
  if (lower == "pathology") return Task::Pathology;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- schema

namespace {

std::string fold_label(std::string_view label) { return ascii_lower(trim(label)); }

}  // namespace

void LabelSchema::validate() const {
  if (valid_labels.empty()) throw ConfigError("schema has no valid labels");
  if (answer_key.empty()) throw ConfigError("schema answer_key is empty");
  std::set<std::string> seen;
  for (const auto& label : valid_labels) {
    if (trim(label).empty()) throw ConfigError("schema contains an empty label");
    if (!seen.insert(fold_label(label)).second)
      throw ConfigError("schema labels collide after case folding: '" + label + "'");
  }
  if (std::find(valid_labels.begin(), valid_labels.end(), nr_label) == valid_labels.end())
    throw ConfigError("nr_label '" + nr_label + "' is not a valid label");
}

bool LabelSchema::contains(std::string_view label) const {
  return std::find(valid_labels.begin(), valid_labels.end(), label) != valid_labels.end();
}

std::size_t LabelSchema::index_of(std::string_view label) const {
  auto it = std::find(valid_labels.begin(), valid_labels.end(), label);
  if (it == valid_labels.end())
    throw DataError("label '" + std::string(label) + "' is not in the schema");
  return static_cast<std::size_t>(it - valid_labels.begin());
}

LabelSchema schema_from_json(const json& j) {
  LabelSchema s;
  try {
    s.task = task_from_string(j.at("task").get<std::string>());
    s.valid_labels = j.at("valid_labels").get<std::vector<std::string>>();
    s.nr_label = j.at("nr_label").get<std::string>();
    s.answer_key = j.at("answer_key").get<std::string>();
    s.retrieval_keywords = j.at("retrieval_keywords").get<std::string>();
    s.target_description = j.value("target_description", std::string{});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid schema: ") + e.what());
  }
  if (s.target_description.empty())
    s.target_description = s.task == Task::Radiology ? "BT-RADS follow-up score" : "IDH mutation status";
  s.validate();
  return s;
}

json to_json(const LabelSchema& s) {
  return json{{"task", to_string(s.task)},
              {"valid_labels", s.valid_labels},
              {"nr_label", s.nr_label},
              {"answer_key", s.answer_key},
              {"retrieval_keywords", s.retrieval_keywords},
              {"target_description", s.target_description}};
}

LabelSchema builtin_schema(Task task) {
  const auto path = task == Task::Radiology ? "schemas/radiology.json" : "schemas/pathology.json";
  return schema_from_json(json::parse(data::file(path)));
}

LabelSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("schema file " + path.string() + " is not valid JSON");
  return schema_from_json(j);
}

// ---------------------------------------------------------------- reports

Report make_report(std::string id, Task task, std::string_view raw_text) {
  Report r;
  r.id = std::move(id);
  r.task = task;
  r.text = normalize_text(raw_text);
  r.word_count = word_count(r.text);
  return r;
}

std::map<std::string, std::string> Corpus::gold_map() const {
  std::map<std::string, std::string> out;
  for (const auto& a : annotations) out.emplace(a.report_id, a.label);
  return out;
}

void Corpus::validate_against(const LabelSchema& schema) const {
  std::set<std::string> ids;
  for (const auto& r : reports) ids.insert(r.id);
  for (const auto& a : annotations) {
    if (!ids.contains(a.report_id))
      throw DataError("annotation refers to unknown report '" + a.report_id + "'");
    if (!schema.contains(a.label))
      throw DataError("report '" + a.report_id + "' has label '" + a.label +
                      "' outside the " + std::string(to_string(schema.task)) + " schema");
  }
  for (const auto& r : reports)
    if (r.task != schema.task)
      throw DataError("report '" + r.id + "' belongs to task " + std::string(to_string(r.task)));
}

// ---------------------------------------------------------------- persistence

std::string serialize_corpus(const Corpus& corpus) {
  std::map<std::string, const GoldAnnotation*> gold;
  for (const auto& a : corpus.annotations) gold.emplace(a.report_id, &a);
  std::string out;
  for (const auto& r : corpus.reports) {
    ordered_json line;
    line["id"] = r.id;
    line["task"] = to_string(r.task);
    line["text"] = r.text;
    if (auto it = gold.find(r.id); it != gold.end()) line["label"] = it->second->label;
    out += line.dump();
    out += '\n';
  }
  return out;
}

Corpus parse_corpus(std::string_view jsonl) {
  Corpus corpus;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "corpus line " + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": malformed JSON");
    try {
      Report r = make_report(j.at("id").get<std::string>(),
                             task_from_string(j.at("task").get<std::string>()),
                             j.at("text").get<std::string>());
      if (!ids.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
      if (j.contains("label"))
        corpus.annotations.push_back({r.id, j.at("label").get<std::string>()});
      corpus.reports.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  out << serialize_corpus(corpus);
  if (!out) throw DataError("failed writing corpus file " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

// ---------------------------------------------------------------- spec

void CorpusSpec::validate(const LabelSchema& schema) const {
  if (schema.task != task) throw ConfigError("corpus spec task does not match schema task");
  if (n_reports < 1) throw ConfigError("n_reports must be at least 1");
  if (class_distribution.empty()) throw ConfigError("class_distribution is empty");
  double total = 0.0;
  std::set<std::string> seen;
  for (const auto& [label, p] : class_distribution) {
    if (!schema.contains(label))
      throw ConfigError("class_distribution label '" + label + "' is not in the " +
                        std::string(to_string(task)) + " schema");
    if (!seen.insert(label).second) throw ConfigError("duplicate label '" + label + "'");
    if (!(p >= 0.0) || p > 1.0) throw ConfigError("probability for '" + label + "' is out of [0,1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("class_distribution sums to " + std::to_string(total) + ", expected 1");
  if (!(length_mean_words > 0.0) || !(length_sd_words > 0.0))
    throw ConfigError("length mean and sd must be positive");
  if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0))
    throw ConfigError("distractor_rate must be a probability");
}

namespace {

// Reference cohort label counts; probabilities are count / total so they sum
// to one exactly (the rounded percentages do not).
const std::vector<std::pair<std::string, double>>& reference_counts(Task task) {
  static const std::vector<std::pair<std::string, double>> radiology = {
      {"1", 5},   {"1a", 204}, {"1b", 124}, {"2", 856},  {"2a", 112}, {"2b", 10},
      {"3", 88},  {"3a", 47},  {"3b", 292}, {"3c", 386}, {"4", 373},  {"NR", 4797}};
  static const std::vector<std::pair<std::string, double>> pathology = {
      {"positive", 154}, {"negative", 1559}, {"NR", 441}};
  return task == Task::Radiology ? radiology : pathology;
}

std::vector<std::pair<std::string, double>> normalize_counts(
    std::vector<std::pair<std::string, double>> counts) {
  double total = 0.0;
  for (const auto& [label, c] : counts) {
    if (!(c >= 0.0)) throw ConfigError("class count for '" + label + "' is negative");
    total += c;
  }
  if (!(total > 0.0)) throw ConfigError("class counts sum to zero");
  for (auto& [label, c] : counts) c /= total;
  return counts;
}

}  // namespace

CorpusSpec default_corpus_spec(Task task, std::size_t n_reports, std::uint64_t seed) {
  CorpusSpec spec;
  spec.task = task;
  spec.n_reports = n_reports;
  spec.seed = seed;
  spec.class_distribution = normalize_counts(reference_counts(task));
  if (task == Task::Radiology) {
    spec.length_mean_words = 265.0;
    spec.length_sd_words = 66.0;
    spec.distractor_rate = 0.1;
  } else {
    spec.length_mean_words = 2504.0;
    spec.length_sd_words = 2563.0;
    spec.distractor_rate = 0.5;
  }
  return spec;
}

CorpusSpec corpus_spec_from_json(const json& j) {
  try {
    const Task task = task_from_string(j.at("task").get<std::string>());
    const auto n = j.value("n_reports", std::int64_t{0});
    if (n < 1) throw ConfigError("n_reports must be a positive integer");
    CorpusSpec spec = default_corpus_spec(task, static_cast<std::size_t>(n),
                                          j.value("seed", std::uint64_t{0}));
    auto read_pairs = [](const json& obj) {
      std::vector<std::pair<std::string, double>> out;
      for (const auto& [label, v] : obj.items()) out.emplace_back(label, v.get<double>());
      return out;
    };
    if (j.contains("class_distribution") && j.contains("class_counts"))
      throw ConfigError("give class_distribution or class_counts, not both");
    if (j.contains("class_distribution"))
      spec.class_distribution = read_pairs(j.at("class_distribution"));
    else if (j.contains("class_counts"))
      spec.class_distribution = normalize_counts(read_pairs(j.at("class_counts")));
    spec.length_mean_words = j.value("length_mean_words", spec.length_mean_words);
    spec.length_sd_words = j.value("length_sd_words", spec.length_sd_words);
    spec.distractor_rate = j.value("distractor_rate", spec.distractor_rate);
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid corpus spec: ") + e.what());
  }
}

}  // namespace clinex
