#include "clinex/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace clinex {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown field '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " has the wrong type");
  }
}

std::string read_string(const json& j, const char* key, std::string fallback, std::string_view where) {
  read(j, key, fallback, where);
  return fallback;
}

}  // namespace

void PipelineConfig::validate() const {
  if (model_name.empty()) throw ConfigError("model_name must not be empty");
  if (!(param_count_b > 0.0) || !std::isfinite(param_count_b))
    throw ConfigError("param_count_b must be a positive number");
  if (quant_bits < 3 || quant_bits > 16) throw ConfigError("quant_bits must lie in 3..16");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0,1]");
  retrieval.validate();
}

json to_json(const RetrievalSettings& s) {
  return {{"mode", to_string(s.mode)},
          {"chunk_size", s.chunk_size},
          {"overlap", s.overlap},
          {"chunk_unit", to_string(s.chunk_unit)},
          {"candidates", s.candidates},
          {"shortlist", s.shortlist},
          {"threshold", s.threshold},
          {"sequential_order", to_string(s.sequential_order)},
          {"bm25", {{"k1", s.bm25.k1}, {"b", s.bm25.b}}},
          {"embedding_model", s.embedding_model},
          {"reranker_model", s.reranker_model}};
}

RetrievalSettings retrieval_settings_from_json(const json& j) {
  constexpr std::string_view where = "retrieval";
  reject_unknown(j,
                 {"mode", "chunk_size", "overlap", "chunk_unit", "candidates", "shortlist", "threshold",
                  "sequential_order", "bm25", "embedding_model", "reranker_model"},
                 where);
  RetrievalSettings s;
  s.mode = retrieval_mode_from_string(read_string(j, "mode", std::string(to_string(s.mode)), where));
  read(j, "chunk_size", s.chunk_size, where);
  read(j, "overlap", s.overlap, where);
  s.chunk_unit = chunk_unit_from_string(read_string(j, "chunk_unit", std::string(to_string(s.chunk_unit)), where));
  read(j, "candidates", s.candidates, where);
  read(j, "shortlist", s.shortlist, where);
  read(j, "threshold", s.threshold, where);
  s.sequential_order = sequential_order_from_string(
      read_string(j, "sequential_order", std::string(to_string(s.sequential_order)), where));
  if (j.contains("bm25")) {
    const auto& b = j.at("bm25");
    reject_unknown(b, {"k1", "b"}, "retrieval.bm25");
    read(b, "k1", s.bm25.k1, "retrieval.bm25");
    read(b, "b", s.bm25.b, "retrieval.bm25");
  }
  read(j, "embedding_model", s.embedding_model, where);
  read(j, "reranker_model", s.reranker_model, where);
  return s;
}

json to_json(const PipelineConfig& c) {
  return {{"model_name", c.model_name},
          {"param_count_b", c.param_count_b},
          {"quant_bits", c.quant_bits},
          {"prompt",
           {{"style", to_string(c.prompt.style)},
            {"few_shot", to_string(c.prompt.few_shot)},
            {"json_instruction", c.prompt.json_instruction}}},
          {"temperature", c.temperature},
          {"top_k", c.top_k},
          {"top_p", c.top_p},
          {"json_mode", c.json_mode},
          {"retrieval", to_json(c.retrieval)},
          {"seed", c.seed}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  constexpr std::string_view where = "config";
  reject_unknown(j,
                 {"model_name", "param_count_b", "quant_bits", "prompt", "temperature", "top_k", "top_p",
                  "json_mode", "retrieval", "seed"},
                 where);
  PipelineConfig c;
  read(j, "model_name", c.model_name, where);
  read(j, "param_count_b", c.param_count_b, where);
  read(j, "quant_bits", c.quant_bits, where);
  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    reject_unknown(p, {"style", "few_shot", "json_instruction"}, "config.prompt");
    c.prompt.style =
        prompt_style_from_string(read_string(p, "style", std::string(to_string(c.prompt.style)), "config.prompt"));
    c.prompt.few_shot = few_shot_from_string(
        read_string(p, "few_shot", std::string(to_string(c.prompt.few_shot)), "config.prompt"));
    read(p, "json_instruction", c.prompt.json_instruction, "config.prompt");
  }
  read(j, "temperature", c.temperature, where);
  read(j, "top_k", c.top_k, where);
  read(j, "top_p", c.top_p, where);
  read(j, "json_mode", c.json_mode, where);
  if (j.contains("retrieval")) c.retrieval = retrieval_settings_from_json(j.at("retrieval"));
  read(j, "seed", c.seed, where);
  c.validate();
  return c;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return j;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_json(read_json_file(path));
}

std::string config_hash(const PipelineConfig& config) {
  return to_hex(fnv1a64(to_json(config).dump()));
}

std::string model_label(const PipelineConfig& c) {
  std::ostringstream out;
  out << c.model_name << ' ' << c.param_count_b << "B Q" << c.quant_bits;
  return out.str();
}

const json* json_at_path(const json& j, std::string_view dotted) {
  const json* node = &j;
  while (!dotted.empty()) {
    const auto dot = dotted.find('.');
    const std::string key(dotted.substr(0, dot));
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &node->at(key);
    dotted = dot == std::string_view::npos ? std::string_view{} : dotted.substr(dot + 1);
  }
  return node;
}

namespace {

void set_at_path(json& j, std::string_view dotted, const json& value) {
  json* node = &j;
  while (true) {
    const auto dot = dotted.find('.');
    const std::string key(dotted.substr(0, dot));
    if (key.empty()) throw ConfigError("empty segment in axis name");
    if (!node->is_object()) throw ConfigError("axis path crosses a non-object value");
    if (dot == std::string_view::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    dotted = dotted.substr(dot + 1);
  }
}

json apply_axis(json config, const std::string& axis, const json& value) {
  if (axis == "variant") {
    if (!value.is_object()) throw ConfigError("variant axis values must be objects");
    config.merge_patch(value);
  } else {
    set_at_path(config, axis, value);
  }
  return config;
}

}  // namespace

void SweepGrid::validate() const {
  std::set<std::string> seen;
  for (const auto& [axis, values] : axes) {
    if (!seen.insert(axis).second) throw ConfigError("duplicate axis '" + axis + "'");
    if (values.empty()) throw ConfigError("axis '" + axis + "' has no values");
    for (const auto& v : values) {
      try {
        pipeline_config_from_json(apply_axis(base, axis, v));
      } catch (const Error& e) {
        throw ConfigError("axis '" + axis + "' value " + v.dump() + ": " + e.what());
      }
    }
  }
  pipeline_config_from_json(base);
}

std::size_t SweepGrid::size() const {
  std::size_t n = 1;
  for (const auto& [axis, values] : axes) n *= values.size();
  return n;
}

std::vector<PipelineConfig> enumerate_configs(const SweepGrid& grid) {
  grid.validate();
  auto axes = grid.axes;
  std::stable_sort(axes.begin(), axes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<PipelineConfig> out;
  std::set<std::string> hashes;
  std::vector<std::size_t> index(axes.size(), 0);
  const std::size_t total = grid.size();
  for (std::size_t i = 0; i < total; ++i) {
    json j = grid.base;
    for (std::size_t a = 0; a < axes.size(); ++a) j = apply_axis(std::move(j), axes[a].first, axes[a].second[index[a]]);
    PipelineConfig c = pipeline_config_from_json(j);
    if (!hashes.insert(config_hash(c)).second)
      throw ConfigError("grid produces duplicate configuration " + to_json(c).dump());
    out.push_back(std::move(c));
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++index[a] < axes[a].second.size()) break;
      index[a] = 0;
    }
  }
  return out;
}

SweepDefinition sweep_definition_from_json(const json& j) {
  reject_unknown(j, {"base", "axes", "sample"}, "sweep definition");
  SweepDefinition d;
  if (j.contains("base")) d.grid.base = j.at("base");
  if (!d.grid.base.is_object()) throw ConfigError("sweep definition base must be an object");
  if (j.contains("axes")) {
    const auto& axes = j.at("axes");
    if (!axes.is_object()) throw ConfigError("sweep definition axes must be an object");
    for (const auto& [name, values] : axes.items()) {
      if (!values.is_array()) throw ConfigError("axis '" + name + "' must be an array");
      d.grid.axes.emplace_back(name, std::vector<json>(values.begin(), values.end()));
    }
  }
  if (j.contains("sample")) {
    const auto& s = j.at("sample");
    reject_unknown(s, {"n", "seed"}, "sample");
    SampleSpec spec;
    try {
      spec.n = s.at("n").get<std::size_t>();
      spec.seed = s.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed sample block: ") + e.what());
    }
    d.sample = spec;
  }
  d.grid.validate();
  return d;
}

SweepDefinition load_sweep_definition(const std::filesystem::path& path) {
  return sweep_definition_from_json(read_json_file(path));
}

}  // namespace clinex
