#include "clinex/metrics.hpp"

namespace clinex {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const ParsedLabel> predictions, std::span<const std::string> gold,
                          const LabelSchema& schema) {
  if (predictions.size() != gold.size())
    throw Error("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(gold.size()) + " gold labels");
  ConfusionMatrix cm;
  cm.classes = schema.valid_labels;
  const auto k = static_cast<Eigen::Index>(cm.classes.size());
  cm.counts = CountMatrix::Zero(k, k + 1);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!schema.contains(gold[i])) throw DataError("gold label '" + gold[i] + "' is not in the schema");
    const auto row = static_cast<Eigen::Index>(schema.index_of(gold[i]));
    Eigen::Index col = cm.invalid_column();
    if (predictions[i].is_valid() && schema.contains(predictions[i].label()))
      col = static_cast<Eigen::Index>(schema.index_of(predictions[i].label()));
    ++cm.counts(row, col);
  }
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const auto k = static_cast<Eigen::Index>(cm.classes.size());
  if (k == 0 || cm.counts.rows() != k || cm.counts.cols() != k + 1)
    throw Error("compute_metrics: malformed confusion matrix");
  if ((cm.counts.array() < 0).any()) throw Error("compute_metrics: negative count");
  MetricsReport r;
  r.n = cm.total();
  if (r.n == 0) throw Error("compute_metrics: empty confusion matrix");

  const std::int64_t tp_total = cm.counts.leftCols(k).diagonal().sum();
  r.accuracy = ratio(tp_total, r.n);
  r.micro_precision = r.micro_recall = r.micro_f1 = r.accuracy;
  r.invalid_rate = ratio(cm.invalid_count(), r.n);

  int supported = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    ClassMetrics m;
    const std::int64_t tp = cm.counts(c, c);
    m.support = cm.counts.row(c).sum();
    m.precision = ratio(tp, cm.counts.col(c).sum());
    m.recall = ratio(tp, m.support);
    m.f1 = harmonic(m.precision, m.recall);
    r.per_class[cm.classes[static_cast<std::size_t>(c)]] = m;
    if (m.support > 0) {
      ++supported;
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
    }
  }
  r.macro_precision /= supported;
  r.macro_recall /= supported;
  r.macro_f1 /= supported;
  return r;
}

json to_json(const MetricsReport& r) {
  json per_class = json::object();
  for (const auto& [label, m] : r.per_class)
    per_class[label] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  return {{"n", r.n},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"micro_precision", r.micro_precision},
          {"macro_recall", r.macro_recall},
          {"micro_recall", r.micro_recall},
          {"macro_f1", r.macro_f1},
          {"micro_f1", r.micro_f1},
          {"invalid_rate", r.invalid_rate},
          {"per_class", per_class}};
}

const std::vector<std::string>& metrics_csv_header() {
  static const std::vector<std::string> header = {"accuracy",     "macro_precision", "micro_precision",
                                                  "macro_recall", "micro_recall",    "macro_f1",
                                                  "micro_f1"};
  return header;
}

std::vector<double> metrics_csv_values(const MetricsReport& r) {
  return {r.accuracy, r.macro_precision, r.micro_precision, r.macro_recall,
          r.micro_recall, r.macro_f1, r.micro_f1};
}

}  // namespace clinex
