#include "clinex/prompting.hpp"

#include <fstream>
#include <sstream>

#include "clinex/data.hpp"

namespace clinex {

std::string_view to_string(PromptStyle style) noexcept {
  return style == PromptStyle::Simple ? "simple" : "complex";
}

PromptStyle prompt_style_from_string(std::string_view name) {
  if (name == "simple") return PromptStyle::Simple;
  if (name == "complex") return PromptStyle::Complex;
  throw ConfigError("unknown prompt style '" + std::string(name) + "'");
}

std::string_view to_string(FewShot mode) noexcept {
  switch (mode) {
    case FewShot::None: return "none";
    case FewShot::Positive: return "positive";
    case FewShot::PositiveAndNegative: return "positive_and_negative";
  }
  return "none";
}

FewShot few_shot_from_string(std::string_view name) {
  for (auto m : {FewShot::None, FewShot::Positive, FewShot::PositiveAndNegative})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown few-shot mode '" + std::string(name) + "'");
}

const PromptTemplates& PromptTemplates::builtin() {
  static const PromptTemplates t{
      std::string(data::file("templates/simple.txt")),
      std::string(data::file("templates/complex.txt")),
      std::string(data::file("templates/json_instruction.txt")),
      std::string(data::file("templates/exemplar.txt")),
  };
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t = builtin();
  auto read = [&](const char* name, std::string& into) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read template " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    into = buf.str();
  };
  read("simple.txt", t.simple);
  read("complex.txt", t.complex);
  read("json_instruction.txt", t.json_instruction);
  read("exemplar.txt", t.exemplar);
  return t;
}

std::string PromptTemplates::hash() const {
  std::uint64_t h = fnv1a64(simple);
  for (const auto* part : {&complex, &json_instruction, &exemplar})
    h = hash_combine(h, fnv1a64(*part));
  return to_hex(h);
}

namespace {

bool is_placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

}  // namespace

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
      if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
        const std::string name(tmpl.substr(i + 1, j - i - 1));
        auto it = values.find(name);
        if (it == values.end()) throw ConfigError("unresolved template placeholder {" + name + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::string render_answer_json(std::string_view answer_key, std::string_view label) {
  return "{" + nlohmann::json(std::string(answer_key)).dump() + ": " +
         nlohmann::json(std::string(label)).dump() + "}";
}

std::vector<FewShotExemplar> default_exemplars(const LabelSchema& schema) {
  const auto table = nlohmann::json::parse(data::file("exemplars.json"));
  std::vector<FewShotExemplar> positives;
  std::vector<FewShotExemplar> negatives;
  for (const auto& e : table.at(std::string(to_string(schema.task)))) {
    FewShotExemplar ex{e.at("snippet").get<std::string>(), e.at("answer").get<std::string>()};
    // The table uses the stock not-reported label; map it onto the schema's.
    const bool negative = ex.answer == "NR" || ex.answer == schema.nr_label;
    if (negative) ex.answer = schema.nr_label;
    if (!schema.contains(ex.answer)) continue;
    (negative ? negatives : positives).push_back(std::move(ex));
  }
  std::vector<FewShotExemplar> out;
  for (std::size_t i = 0; i < positives.size() && out.size() < 2; ++i) {
    bool distinct = true;
    for (const auto& o : out) distinct = distinct && o.answer != positives[i].answer;
    if (distinct) out.push_back(positives[i]);
  }
  if (!negatives.empty()) out.push_back(negatives.front());
  return out;
}

std::string build_prompt(const RetrievedContext& context, const LabelSchema& schema,
                         const PromptStrategy& strategy,
                         const std::vector<FewShotExemplar>& exemplars,
                         const PromptTemplates& templates) {
  std::vector<const FewShotExemplar*> positives;
  std::vector<const FewShotExemplar*> negatives;
  for (const auto& e : exemplars) {
    if (!schema.contains(e.answer))
      throw ConfigError("exemplar answer '" + e.answer + "' is not a valid label");
    (e.answer == schema.nr_label ? negatives : positives).push_back(&e);
  }
  if (strategy.few_shot == FewShot::PositiveAndNegative && negatives.empty())
    throw ConfigError("positive_and_negative few-shot prompting needs a negative exemplar");

  std::string shots;
  auto add_shot = [&](const FewShotExemplar& e) {
    shots += render_template(templates.exemplar,
                             {{"snippet", e.snippet},
                              {"answer", render_answer_json(schema.answer_key, e.answer)}});
  };
  if (strategy.few_shot != FewShot::None)
    for (const auto* e : positives) add_shot(*e);
  if (strategy.few_shot == FewShot::PositiveAndNegative)
    for (const auto* e : negatives) add_shot(*e);

  std::string labels;
  for (const auto& l : schema.valid_labels) {
    if (!labels.empty()) labels += ", ";
    labels += l;
  }
  const std::map<std::string, std::string> values = {
      {"target", schema.target_description},
      {"labels", labels},
      {"nr_label", schema.nr_label},
      {"answer_key", schema.answer_key},
      {"exemplars", shots},
      {"report_id", context.report_id},
      {"context", context.selected_text},
  };
  std::string prompt = render_template(
      strategy.style == PromptStyle::Simple ? templates.simple : templates.complex, values);
  if (strategy.json_instruction) {
    if (!prompt.empty() && prompt.back() != '\n') prompt += '\n';
    prompt += render_template(templates.json_instruction, values);
  }
  return prompt;
}

}  // namespace clinex
