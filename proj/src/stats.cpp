#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clinex/metrics.hpp"

namespace clinex {

using nlohmann::json;

std::string_view to_string(StatTest test) noexcept {
  switch (test) {
    case StatTest::StudentT: return "student_t";
    case StatTest::WelchT: return "welch_t";
    case StatTest::PairedT: return "paired_t";
    case StatTest::Spearman: return "spearman";
    case StatTest::CohensD: return "cohens_d";
  }
  return "student_t";
}

json to_json(const StatTestResult& r) {
  json j = {{"test", to_string(r.test)}, {"statistic", r.statistic}, {"n", r.n}};
  j["df"] = r.df ? json(*r.df) : json(nullptr);
  j["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
  return j;
}

// ------------------------------------------------------------------ distributions

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw StatsError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw StatsError("incomplete beta: parameters must be positive");
  if (std::isnan(x) || x < 0.0 || x > 1.0) throw StatsError("incomplete beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw StatsError("t distribution: df must be positive");
  if (std::isnan(t)) throw StatsError("t distribution: statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return std::clamp(p, 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
  const double tail = two_sided_p(t, df) / 2.0;
  return t >= 0.0 ? 1.0 - tail : tail;
}

// ------------------------------------------------------------------ samples

double mean(std::span<const double> x) {
  if (x.empty()) throw StatsError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw StatsError("variance needs at least two observations");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

namespace {

void require_min(std::span<const double> x, std::size_t n, const char* what) {
  if (x.size() < n)
    throw StatsError(std::string(what) + ": each sample needs at least " + std::to_string(n) +
                     " observations");
  for (double v : x)
    if (!std::isfinite(v)) throw StatsError(std::string(what) + ": non-finite observation");
}

StatTestResult t_result(StatTest test, double diff, double se, double df, std::vector<std::size_t> n,
                        const char* what) {
  StatTestResult r;
  r.test = test;
  r.n = std::move(n);
  r.df = df;
  if (se == 0.0) {
    if (diff == 0.0) throw StatsError(std::string(what) + ": zero variance with equal means");
    r.statistic = diff > 0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.statistic = diff / se;
  r.p_value = two_sided_p(r.statistic, df);
  return r;
}

}  // namespace

StatTestResult student_t(std::span<const double> a, std::span<const double> b) {
  require_min(a, 2, "student_t");
  require_min(b, 2, "student_t");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double df = na + nb - 2.0;
  const double pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  return t_result(StatTest::StudentT, mean(a) - mean(b), se, df, {a.size(), b.size()}, "student_t");
}

StatTestResult welch_t(std::span<const double> a, std::span<const double> b) {
  require_min(a, 2, "welch_t");
  require_min(b, 2, "welch_t");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = variance(a) / na, qb = variance(b) / nb;
  const double se = std::sqrt(qa + qb);
  double df = na + nb - 2.0;
  if (qa + qb > 0.0) df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  return t_result(StatTest::WelchT, mean(a) - mean(b), se, df, {a.size(), b.size()}, "welch_t");
}

StatTestResult paired_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StatsError("paired_t: samples differ in length");
  require_min(a, 2, "paired_t");
  require_min(b, 2, "paired_t");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double md = mean(d);
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    StatTestResult r;
    r.test = StatTest::PairedT;
    r.statistic = 0.0;
    r.df = n - 1.0;
    r.p_value = 1.0;
    r.n = {a.size()};
    return r;
  }
  const double se = std::sqrt(variance(d) / n);
  return t_result(StatTest::PairedT, md, se, n - 1.0, {a.size()}, "paired_t");
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

StatTestResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("spearman: samples differ in length");
  require_min(x, 3, "spearman");
  require_min(y, 3, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw StatsError("spearman: constant input");
  StatTestResult r;
  r.test = StatTest::Spearman;
  r.n = {x.size()};
  r.statistic = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(x.size()) - 2.0;
  r.df = df;
  const double rho2 = r.statistic * r.statistic;
  if (rho2 >= 1.0) {
    r.p_value = 0.0;
  } else {
    r.p_value = two_sided_p(r.statistic * std::sqrt(df / (1.0 - rho2)), df);
  }
  return r;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  require_min(a, 2, "cohens_d");
  require_min(b, 2, "cohens_d");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double pooled =
      std::sqrt(((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0));
  if (pooled == 0.0) throw StatsError("cohens_d: zero pooled standard deviation");
  return (mean(a) - mean(b)) / pooled;
}

}  // namespace clinex
