#include <doctest.h>

#include "clinex/prompting.hpp"
#include "support.hpp"

using namespace clinex;

namespace {

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

RetrievedContext context_of(std::string id, std::string text) {
  RetrievedContext c;
  c.report_id = std::move(id);
  c.selected_text = std::move(text);
  return c;
}

const std::vector<PromptStrategy>& all_strategies() {
  static const std::vector<PromptStrategy> all = [] {
    std::vector<PromptStrategy> out;
    for (auto style : {PromptStyle::Simple, PromptStyle::Complex})
      for (auto fs : {FewShot::None, FewShot::Positive, FewShot::PositiveAndNegative})
        for (bool json : {false, true}) out.push_back({style, fs, json});
    return out;
  }();
  return all;
}

}  // namespace

TEST_CASE("render_template") {
  CHECK(render_template("a {x} b {y}", {{"x", "1"}, {"y", "{x}"}}) == "a 1 b {x}");
  CHECK(render_template("{\"k\": 1} {not a placeholder", {}) == "{\"k\": 1} {not a placeholder");
  CHECK_THROWS_AS(render_template("{missing}", {}), ConfigError);
  CHECK(render_answer_json("score", "2a") == "{\"score\": \"2a\"}");
  CHECK(render_answer_json("k", "a\"b") == "{\"k\": \"a\\\"b\"}");
}

TEST_CASE("simple prompt contains the context exactly once") {
  const auto schema = builtin_schema(Task::Radiology);
  const std::string text = "Stable enhancing lesion in the left frontal lobe. BT-RADS 2a.";
  const auto p = build_prompt(context_of("rad-1", text), schema, {PromptStyle::Simple, FewShot::None, false}, {});
  CHECK(occurrences(p, text) == 1);
  CHECK(p.find("Report ID: rad-1\n") != std::string::npos);
  CHECK(p.find("3c") == std::string::npos);
}

TEST_CASE("complex prompt enumerates every label") {
  for (auto task : {Task::Radiology, Task::Pathology}) {
    const auto schema = builtin_schema(task);
    const auto p = build_prompt(context_of("r", "text"), schema, {PromptStyle::Complex, FewShot::None, true}, {});
    for (const auto& l : schema.valid_labels) CHECK(p.find(l) != std::string::npos);
    const bool enumerated = p.find("1a, 1b, 2, 2a, 2b, 3, 3a, 3b, 3c, 4") != std::string::npos;
    CHECK(enumerated == (task == Task::Radiology));
    CHECK(p.find("\"" + schema.answer_key + "\"") != std::string::npos);
  }
}

TEST_CASE("json instruction is appended") {
  const auto schema = builtin_schema(Task::Pathology);
  const auto with = build_prompt(context_of("p", "x"), schema, {PromptStyle::Simple, FewShot::None, true}, {});
  const auto without = build_prompt(context_of("p", "x"), schema, {PromptStyle::Simple, FewShot::None, false}, {});
  CHECK(with.starts_with(without));
  CHECK(with.find("{\"idh_status\": \"<answer>\"}") != std::string::npos);
  CHECK(without.find("idh_status") == std::string::npos);
}

TEST_CASE("default exemplars") {
  const auto rad = builtin_schema(Task::Radiology);
  const auto ex = default_exemplars(rad);
  REQUIRE(ex.size() == 3);
  CHECK(ex[2].answer == "NR");
  CHECK(ex[0].answer != ex[1].answer);
  CHECK(ex[0].answer != "NR");
  CHECK(ex[1].answer != "NR");
  const auto path = builtin_schema(Task::Pathology);
  for (const auto& e : default_exemplars(path)) CHECK(path.contains(e.answer));
  CHECK(default_exemplars(path).back().answer == "NR");
  CHECK(default_exemplars(rad) == ex);
}

TEST_CASE("few-shot ordering and errors") {
  const auto schema = builtin_schema(Task::Radiology);
  std::vector<FewShotExemplar> ex = {{"neg snippet", "NR"}, {"pos one", "1a"}, {"pos two", "4"}};
  const auto p =
      build_prompt(context_of("r", "target text"), schema, {PromptStyle::Complex, FewShot::PositiveAndNegative, true}, ex);
  const auto neg = p.find("neg snippet"), pos1 = p.find("pos one"), pos2 = p.find("pos two"), target = p.find("target text");
  REQUIRE(neg != std::string::npos);
  CHECK(pos1 < pos2);
  CHECK(pos2 < neg);
  CHECK(neg < target);

  const auto positives_only =
      build_prompt(context_of("r", "target text"), schema, {PromptStyle::Complex, FewShot::Positive, true}, ex);
  CHECK(positives_only.find("neg snippet") == std::string::npos);
  CHECK(positives_only.find("pos one") != std::string::npos);

  const std::vector<FewShotExemplar> no_neg = {{"pos", "2"}};
  CHECK_THROWS_AS(build_prompt(context_of("r", "t"), schema, {PromptStyle::Simple, FewShot::PositiveAndNegative, true}, no_neg),
                  ConfigError);
  const std::vector<FewShotExemplar> bogus = {{"pos", "9z"}};
  CHECK_THROWS_AS(build_prompt(context_of("r", "t"), schema, {PromptStyle::Simple, FewShot::Positive, true}, bogus),
                  ConfigError);
}

TEST_CASE("build_prompt is pure and grows with exemplars") {
  for (auto task : {Task::Radiology, Task::Pathology}) {
    const auto schema = builtin_schema(task);
    const auto ex = default_exemplars(schema);
    const auto ctx = context_of("id-7", "Some report text. With two sentences.");
    for (const auto& s : all_strategies()) {
      CHECK(build_prompt(ctx, schema, s, ex) == build_prompt(ctx, schema, s, ex));
      if (s.style == PromptStyle::Simple && s.few_shot == FewShot::None)
        for (const auto& l : {"1a", "3c", "negative"}) CHECK(build_prompt(ctx, schema, s, ex).find(l) == std::string::npos);
    }
    for (auto style : {PromptStyle::Simple, PromptStyle::Complex}) {
      const auto none = build_prompt(ctx, schema, {style, FewShot::None, true}, ex).size();
      const auto pos = build_prompt(ctx, schema, {style, FewShot::Positive, true}, ex).size();
      const auto both = build_prompt(ctx, schema, {style, FewShot::PositiveAndNegative, true}, ex).size();
      CHECK(none < pos);
      CHECK(pos < both);
    }
  }
}

TEST_CASE("templates load from a directory and hash by content") {
  testing::TempDir dir;
  testing::write_file(dir / "simple.txt", "S {context} {report_id}");
  const auto t = PromptTemplates::load(dir.path());
  CHECK(t.simple == "S {context} {report_id}");
  CHECK(t.complex == PromptTemplates::builtin().complex);
  CHECK(t.hash() != PromptTemplates::builtin().hash());
  CHECK(t.hash().size() == 16);
  const auto schema = builtin_schema(Task::Radiology);
  CHECK(build_prompt(context_of("x", "ctx"), schema, {PromptStyle::Simple, FewShot::None, false}, {}, t) == "S ctx x");
  testing::write_file(dir / "simple.txt", "{undefined_placeholder}");
  CHECK_THROWS_AS(
      build_prompt(context_of("x", "ctx"), schema, {PromptStyle::Simple, FewShot::None, false}, {}, PromptTemplates::load(dir.path())),
      ConfigError);
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {PromptStyle::Simple, PromptStyle::Complex}) CHECK(prompt_style_from_string(to_string(s)) == s);
  for (auto f : {FewShot::None, FewShot::Positive, FewShot::PositiveAndNegative})
    CHECK(few_shot_from_string(to_string(f)) == f);
  CHECK_THROWS_AS(prompt_style_from_string("fancy"), ConfigError);
}
