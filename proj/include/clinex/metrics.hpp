#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "clinex/corpus.hpp"
#include "clinex/postprocess.hpp"

namespace clinex {

// ------------------------------------------------------------------ confusion

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows are gold classes in schema order; columns are the same classes
/// followed by one INVALID column.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  CountMatrix counts;

  std::size_t gold_classes() const noexcept { return classes.size(); }
  Eigen::Index invalid_column() const noexcept { return static_cast<Eigen::Index>(classes.size()); }
  std::int64_t total() const { return counts.sum(); }
  std::int64_t invalid_count() const { return counts.col(invalid_column()).sum(); }
};

ConfusionMatrix confusion(std::span<const ParsedLabel> predictions, std::span<const std::string> gold,
                          const LabelSchema& schema);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct MetricsReport {
  std::int64_t n = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double micro_precision = 0.0;
  double macro_recall = 0.0;
  double micro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double invalid_rate = 0.0;
  std::map<std::string, ClassMetrics> per_class;
};

/// Macro averages run over gold classes with nonzero support. INVALID
/// predictions count against recall of their gold class and as predictions in
/// the micro averages, so micro P = micro R = micro F1 = accuracy.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

nlohmann::json to_json(const MetricsReport& report);

/// Accuracy, Macro Precision, Micro Precision, Macro Recall, Micro Recall,
/// Macro F1, Micro F1.
const std::vector<std::string>& metrics_csv_header();
std::vector<double> metrics_csv_values(const MetricsReport& report);

// ------------------------------------------------------------------ statistics

class StatsError : public Error {
 public:
  using Error::Error;
};

enum class StatTest { StudentT, WelchT, PairedT, Spearman, CohensD };

std::string_view to_string(StatTest test) noexcept;

struct StatTestResult {
  StatTest test = StatTest::StudentT;
  double statistic = 0.0;
  std::optional<double> df;
  /// Two-sided.
  std::optional<double> p_value;
  std::vector<std::size_t> n;
};

nlohmann::json to_json(const StatTestResult& result);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);
/// P(|T| >= |t|).
double two_sided_p(double t, double df);

double mean(std::span<const double> x);
/// Sample variance (n - 1 denominator).
double variance(std::span<const double> x);

StatTestResult student_t(std::span<const double> a, std::span<const double> b);
StatTestResult welch_t(std::span<const double> a, std::span<const double> b);
/// All-zero differences give t = 0, p = 1.
StatTestResult paired_t(std::span<const double> a, std::span<const double> b);
StatTestResult spearman(std::span<const double> x, std::span<const double> y);
double cohens_d(std::span<const double> a, std::span<const double> b);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace clinex
