#include "clinex/aggregate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace clinex {

using nlohmann::json;

namespace {

std::string describe_missing(const std::vector<RecordKey>& missing) {
  std::string out = std::to_string(missing.size()) + " (report, config) pairs missing from the store:";
  const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) out += "\n  " + missing[i].first + " " + missing[i].second;
  if (shown < missing.size()) out += "\n  ... and " + std::to_string(missing.size() - shown) + " more";
  return out;
}

}  // namespace

MissingRecordsError::MissingRecordsError(std::vector<RecordKey> missing)
    : Error(describe_missing(missing)), missing_(std::move(missing)) {}

AggregateReport aggregate(std::span<const ExtractionRecord> records, std::span<const PipelineConfig> configs,
                          const std::map<std::string, std::string>& gold, const LabelSchema& schema,
                          const AggregateOptions& options) {
  if (configs.empty()) throw ConfigError("aggregate: no configurations");
  std::map<std::string, const PipelineConfig*> by_hash;
  std::vector<std::string> order;
  for (const auto& c : configs) {
    const auto h = config_hash(c);
    if (by_hash.emplace(h, &c).second) order.push_back(h);
  }

  std::map<std::string, std::map<std::string, const ExtractionRecord*>> table;
  std::set<std::string> report_ids;
  for (const auto& r : records) {
    if (!by_hash.count(r.config_hash)) continue;
    table[r.config_hash][r.report_id] = &r;
    report_ids.insert(r.report_id);
  }
  if (report_ids.empty()) throw MissingRecordsError({});

  std::vector<RecordKey> missing;
  for (const auto& h : order)
    for (const auto& id : report_ids)
      if (!table[h].count(id)) missing.emplace_back(id, h);
  if (!missing.empty()) throw MissingRecordsError(std::move(missing));

  std::vector<std::string> gold_labels;
  std::vector<std::string> without_gold;
  for (const auto& id : report_ids) {
    auto it = gold.find(id);
    if (it == gold.end()) without_gold.push_back(id);
    else gold_labels.push_back(it->second);
  }
  if (!without_gold.empty())
    throw DataError(std::to_string(without_gold.size()) + " reports have no gold label, first: " +
                    without_gold.front());

  AggregateReport report;
  for (const auto& h : order) {
    ConfigResult res;
    res.config = *by_hash[h];
    res.hash = h;
    std::vector<ParsedLabel> preds;
    preds.reserve(report_ids.size());
    for (const auto& id : report_ids) {
      const ExtractionRecord& rec = *table[h][id];
      preds.push_back(rec.parsed);
      if (rec.error) ++res.backend_errors;
      if (rec.rag_used) ++res.rag_used;
    }
    res.metrics = compute_metrics(confusion(preds, gold_labels, schema));
    report.configs.push_back(std::move(res));
  }

  for (const auto& axis : options.compare_axes) report.comparisons.push_back(compare_axis(report.configs, axis));

  const std::pair<const char*, double MetricsReport::*> metrics[] = {{"accuracy", &MetricsReport::accuracy},
                                                                      {"macro_f1", &MetricsReport::macro_f1}};
  for (const auto& [name, field] : metrics) {
    std::vector<double> m, log_params, quant;
    for (const auto& c : report.configs) {
      m.push_back(c.metrics.*field);
      log_params.push_back(std::log(c.config.param_count_b));
      quant.push_back(c.config.quant_bits);
    }
    for (const auto& [predictor, xs] : {std::pair{"log_param_count_b", &log_params}, std::pair{"quant_bits", &quant}}) {
      Correlation corr;
      corr.metric = name;
      corr.predictor = predictor;
      try {
        corr.result = spearman(*xs, m);
      } catch (const StatsError& e) {
        corr.undefined = e.what();
      }
      report.correlations.push_back(std::move(corr));
    }
  }

  auto& sg = report.size_groups;
  sg.cutoff_b = options.size_cutoff_b;
  std::vector<double> small, large;
  for (const auto& c : report.configs)
    (c.config.param_count_b <= sg.cutoff_b ? small : large).push_back(c.metrics.accuracy);
  sg.n_small = small.size();
  sg.n_large = large.size();
  if (small.size() < 2 || large.size() < 2) {
    sg.undefined = "each size group needs at least two configurations";
  } else {
    try {
      sg.student = student_t(large, small);
      sg.welch = welch_t(large, small);
      sg.cohens_d = cohens_d(large, small);
    } catch (const StatsError& e) {
      sg.undefined = e.what();
    }
  }
  return report;
}

AxisComparison compare_axis(std::span<const ConfigResult> results, const std::string& axis) {
  AxisComparison cmp;
  cmp.axis = axis;
  std::vector<json> values;
  struct Group {
    std::string label;
    std::optional<double> a, b;
  };
  std::map<std::string, Group> groups;
  std::vector<std::string> group_order;

  for (const auto& r : results) {
    json j = to_json(r.config);
    const json* v = json_at_path(j, axis);
    if (!v) throw ConfigError("unknown comparison axis '" + axis + "'");
    if (std::find(values.begin(), values.end(), *v) == values.end()) values.push_back(*v);
  }
  if (values.size() != 2)
    throw ConfigError("axis '" + axis + "' takes " + std::to_string(values.size()) +
                      " values across the configurations; comparisons need exactly two");
  cmp.value_a = values[0];
  cmp.value_b = values[1];

  for (const auto& r : results) {
    json j = to_json(r.config);
    const json v = *json_at_path(j, axis);
    json* node = &j;
    std::string_view path = axis;
    for (auto dot = path.find('.'); dot != std::string_view::npos; dot = path.find('.')) {
      node = &(*node)[std::string(path.substr(0, dot))];
      path = path.substr(dot + 1);
    }
    node->erase(std::string(path));
    const std::string key = to_hex(fnv1a64(j.dump()));
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      it->second.label = model_label(r.config);
      group_order.push_back(key);
    }
    (v == cmp.value_a ? it->second.a : it->second.b) = r.metrics.accuracy;
  }

  std::vector<double> a, b, d;
  for (const auto& key : group_order) {
    const auto& g = groups[key];
    if (!g.a || !g.b) continue;
    cmp.deltas.push_back({g.label, key, *g.a, *g.b, *g.b - *g.a});
    a.push_back(*g.a);
    b.push_back(*g.b);
    d.push_back(*g.b - *g.a);
  }
  if (!d.empty()) cmp.mean_delta = mean(d);
  if (d.size() < 2) {
    cmp.outcome = "insufficient_pairs";
    return cmp;
  }
  cmp.sd_delta = std::sqrt(variance(d));
  cmp.paired = paired_t(b, a);
  cmp.outcome = std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; }) ? "no_difference" : "tested";
  return cmp;
}

std::vector<ConfigResult> ranked(std::vector<ConfigResult> results) {
  std::stable_sort(results.begin(), results.end(), [](const ConfigResult& x, const ConfigResult& y) {
    if (x.metrics.accuracy != y.metrics.accuracy) return x.metrics.accuracy > y.metrics.accuracy;
    if (x.metrics.macro_f1 != y.metrics.macro_f1) return x.metrics.macro_f1 > y.metrics.macro_f1;
    return x.hash < y.hash;
  });
  return results;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string num(double x) {
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, x).ptr;
  return {buf, end};
}

}  // namespace

std::string to_csv(std::span<const ConfigResult> results) {
  std::ostringstream out;
  out << "model_name,param_count_b,quant_bits";
  for (const auto& h : metrics_csv_header()) out << ',' << h;
  out << ",config_hash,prompt_style,few_shot,json_instruction,json_mode,temperature,top_k,top_p,"
         "retrieval_mode,seed,n,invalid_rate,backend_errors,rag_used\n";
  for (const auto& r : results) {
    const auto& c = r.config;
    out << csv_field(c.model_name) << ',' << num(c.param_count_b) << ',' << c.quant_bits;
    for (double v : metrics_csv_values(r.metrics)) out << ',' << num(v);
    out << ',' << r.hash << ',' << to_string(c.prompt.style) << ',' << to_string(c.prompt.few_shot) << ','
        << (c.prompt.json_instruction ? "true" : "false") << ',' << (c.json_mode ? "true" : "false") << ','
        << num(c.temperature) << ',' << c.top_k << ',' << num(c.top_p) << ',' << to_string(c.retrieval.mode)
        << ',' << c.seed << ',' << r.metrics.n << ',' << num(r.metrics.invalid_rate) << ','
        << r.backend_errors << ',' << r.rag_used << '\n';
  }
  return out.str();
}

json comparisons_json(const AggregateReport& report) {
  json out = {{"comparisons", json::array()}, {"correlations", json::array()}};
  for (const auto& c : report.comparisons) {
    json deltas = json::array();
    for (const auto& d : c.deltas)
      deltas.push_back({{"group", d.group},
                        {"group_hash", d.group_hash},
                        {"accuracy_a", d.metric_a},
                        {"accuracy_b", d.metric_b},
                        {"delta", d.delta}});
    out["comparisons"].push_back({{"axis", c.axis},
                                  {"value_a", c.value_a},
                                  {"value_b", c.value_b},
                                  {"deltas", deltas},
                                  {"mean_delta", c.mean_delta},
                                  {"sd_delta", c.sd_delta ? json(*c.sd_delta) : json(nullptr)},
                                  {"paired_t", c.paired ? to_json(*c.paired) : json(nullptr)},
                                  {"outcome", c.outcome}});
  }
  for (const auto& c : report.correlations) {
    json j = {{"metric", c.metric}, {"predictor", c.predictor}};
    j["spearman"] = c.result ? to_json(*c.result) : json(nullptr);
    if (c.undefined) j["undefined"] = *c.undefined;
    out["correlations"].push_back(j);
  }
  const auto& sg = report.size_groups;
  json size = {{"cutoff_b", sg.cutoff_b}, {"n_small", sg.n_small}, {"n_large", sg.n_large}};
  size["student_t"] = sg.student ? to_json(*sg.student) : json(nullptr);
  size["welch_t"] = sg.welch ? to_json(*sg.welch) : json(nullptr);
  size["cohens_d"] = sg.cohens_d ? json(*sg.cohens_d) : json(nullptr);
  if (sg.undefined) size["undefined"] = *sg.undefined;
  out["size_groups"] = size;
  return out;
}

std::string top_table(std::span<const ConfigResult> results, std::size_t k) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %-24s %9s %9s %-8s %-22s %-5s %-10s %s\n", "rank", "model", "accuracy",
                "macro_f1", "prompt", "few_shot", "json", "retrieval", "config");
  out << line;
  for (std::size_t i = 0; i < std::min(k, results.size()); ++i) {
    const auto& r = results[i];
    std::snprintf(line, sizeof line, "%-4zu %-24s %8.2f%% %8.2f%% %-8s %-22s %-5s %-10s %s\n", i + 1,
                  model_label(r.config).c_str(), 100.0 * r.metrics.accuracy, 100.0 * r.metrics.macro_f1,
                  std::string(to_string(r.config.prompt.style)).c_str(),
                  std::string(to_string(r.config.prompt.few_shot)).c_str(), r.config.json_mode ? "on" : "off",
                  std::string(to_string(r.config.retrieval.mode)).c_str(), r.hash.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace clinex
