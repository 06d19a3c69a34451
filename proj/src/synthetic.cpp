#include <cstdio>
#include <random>

#include "clinex/corpus.hpp"
#include "clinex/data.hpp"
#include "clinex/text.hpp"

namespace clinex {

namespace {

constexpr double kMinWords = 30.0;

struct Phrasebook {
  std::vector<std::string> sections;
  std::vector<std::string> filler;
  std::vector<std::string> distractor;
  // label -> answer sentence templates; empty key applies to every label.
  std::map<std::string, std::vector<std::string>> answers;
};

Phrasebook load_phrasebook(Task task) {
  const auto j = nlohmann::json::parse(
      data::file(task == Task::Radiology ? "corpus/radiology.json" : "corpus/pathology.json"));
  Phrasebook book;
  book.sections = j.at("sections").get<std::vector<std::string>>();
  book.filler = j.at("filler").get<std::vector<std::string>>();
  book.distractor = j.at("distractor").get<std::vector<std::string>>();
  const auto& answers = j.at("answer");
  if (answers.is_array()) {
    book.answers[""] = answers.get<std::vector<std::string>>();
  } else {
    for (const auto& [label, list] : answers.items())
      book.answers[label] = list.get<std::vector<std::string>>();
  }
  return book;
}

template <typename Rng>
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  return pool[dist(rng)];
}

std::string fill_label(std::string tmpl, const std::string& label) {
  const std::string key = "{label}";
  for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + label.size()))
    tmpl.replace(pos, key.size(), label);
  return tmpl;
}

// Lays sentences out with the line breaks a dictated report would carry: some
// sentences end in ".\n", and long sentences are hard-wrapped mid-line.
template <typename Rng>
std::string layout(const std::vector<std::string>& header, const std::vector<std::string>& body,
                   Rng& rng) {
  std::bernoulli_distribution sentence_break(0.35);
  std::bernoulli_distribution wrap(0.06);
  std::string raw;
  for (const auto& line : header) {
    raw += line;
    raw += '\n';
  }
  for (const auto& sentence : body) {
    std::size_t start = 0;
    while (start < sentence.size()) {
      std::size_t space = sentence.find(' ', start);
      if (space == std::string::npos) space = sentence.size();
      raw.append(sentence, start, space - start);
      if (space < sentence.size()) raw += wrap(rng) ? '\n' : ' ';
      start = space + 1;
    }
    raw += '.';
    raw += sentence_break(rng) ? '\n' : ' ';
  }
  return raw;
}

}  // namespace

Corpus generate_synthetic_corpus(const CorpusSpec& spec) {
  return generate_synthetic_corpus(spec, builtin_schema(spec.task));
}

Corpus generate_synthetic_corpus(const CorpusSpec& spec, const LabelSchema& schema) {
  spec.validate(schema);
  const Phrasebook book = load_phrasebook(spec.task);

  // Probabilities in schema order so the draw does not depend on how the spec
  // happened to list its labels.
  std::vector<double> weights(schema.valid_labels.size(), 0.0);
  for (const auto& [label, p] : spec.class_distribution) weights[schema.index_of(label)] = p;

  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<std::size_t> label_dist(weights.begin(), weights.end());
  std::normal_distribution<double> length_dist(spec.length_mean_words, spec.length_sd_words);
  std::bernoulli_distribution distractor(spec.distractor_rate);

  const char* prefix = spec.task == Task::Radiology ? "rad" : "path";
  const std::size_t n_header = spec.task == Task::Radiology ? 4 : 3;

  Corpus corpus;
  corpus.reports.reserve(spec.n_reports);
  corpus.annotations.reserve(spec.n_reports);
  for (std::size_t i = 0; i < spec.n_reports; ++i) {
    const std::string& label = schema.valid_labels[label_dist(rng)];

    double target = length_dist(rng);
    for (int tries = 0; target < kMinWords && tries < 1000; ++tries) target = length_dist(rng);
    if (target < kMinWords) target = kMinWords;

    std::vector<std::string> header(book.sections.begin(),
                                    book.sections.begin() + static_cast<long>(n_header));
    std::size_t words = 0;
    for (const auto& h : header) words += word_count(h);

    std::optional<std::string> answer;
    if (label != schema.nr_label) {
      auto it = book.answers.find(label);
      const auto& pool = it != book.answers.end() ? it->second : book.answers.at("");
      answer = fill_label(pick(pool, rng), label);
      words += word_count(*answer);
    }
    std::optional<std::string> distract;
    if (distractor(rng)) {
      distract = pick(book.distractor, rng);
      words += word_count(*distract);
    }

    std::vector<std::string> body;
    while (static_cast<double>(words) < target) {
      body.push_back(pick(book.filler, rng));
      words += word_count(body.back());
    }
    auto insert_at_random = [&](std::string sentence) {
      std::uniform_int_distribution<std::size_t> at(0, body.size());
      body.insert(body.begin() + static_cast<long>(at(rng)), std::move(sentence));
    };
    if (answer) insert_at_random(*answer);
    if (distract) insert_at_random(*distract);

    char id[32];
    std::snprintf(id, sizeof id, "%s-%06zu", prefix, i + 1);
    corpus.reports.push_back(make_report(id, spec.task, layout(header, body, rng)));
    corpus.annotations.push_back({id, label});
  }
  return corpus;
}

}  // namespace clinex
