#include <doctest.h>

#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "clinex/metrics.hpp"

using namespace clinex;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

LabelSchema abc() {
  LabelSchema s = builtin_schema(Task::Pathology);
  s.valid_labels = {"A", "B", "C"};
  return s;
}

std::vector<ParsedLabel> preds(std::initializer_list<const char*> labels) {
  std::vector<ParsedLabel> out;
  for (const char* l : labels)
    out.push_back(l ? ParsedLabel::valid(l) : ParsedLabel::invalid(InvalidReason::NoJson));
  return out;
}

double boost_p(double t, double df) {
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

// Per-item counting without a confusion matrix.
MetricsReport brute_force(const std::vector<ParsedLabel>& p, const std::vector<std::string>& g,
                          const std::vector<std::string>& classes) {
  MetricsReport r;
  r.n = static_cast<std::int64_t>(g.size());
  long double correct = 0;
  long double mp = 0, mr = 0, mf = 0;
  int present = 0;
  for (const auto& c : classes) {
    long double tp = 0, pred = 0, sup = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool is_pred = p[i].is_valid() && p[i].label() == c;
      tp += is_pred && g[i] == c;
      pred += is_pred;
      sup += g[i] == c;
    }
    correct += tp;
    if (sup == 0) continue;
    ++present;
    const long double prec = pred == 0 ? 0 : tp / pred;
    const long double rec = tp / sup;
    mp += prec;
    mr += rec;
    mf += prec + rec == 0 ? 0 : 2 * prec * rec / (prec + rec);
  }
  r.accuracy = static_cast<double>(correct / g.size());
  r.macro_precision = static_cast<double>(mp / present);
  r.macro_recall = static_cast<double>(mr / present);
  r.macro_f1 = static_cast<double>(mf / present);
  return r;
}

}  // namespace

TEST_CASE("confusion examples") {
  const auto s = abc();
  const std::vector<std::string> gold5 = {"A", "B", "C", "A", "B"};
  auto cm = confusion(preds({"A", "B", "C", "A", "B"}), gold5, s);
  CHECK(cm.total() == 5);
  CHECK(cm.counts(0, 0) == 2);
  CHECK(cm.counts(1, 1) == 2);
  CHECK(cm.counts(2, 2) == 1);
  CHECK(cm.counts.sum() == cm.counts.diagonal().sum());

  const std::vector<std::string> gold3 = {"A", "B", "C"};
  cm = confusion(preds({"A", nullptr, "C"}), gold3, s);
  CHECK(cm.invalid_count() == 1);
  CHECK(cm.counts(1, cm.invalid_column()) == 1);

  const std::vector<std::string> g = {"A", "B", "B"};
  cm = confusion(preds({"A", "A", "B"}), g, s);
  CHECK(cm.counts(0, 0) == 1);
  CHECK(cm.counts(1, 0) == 1);
  CHECK(cm.counts(1, 1) == 1);
  CHECK(cm.total() == 3);

  CHECK_THROWS(confusion(preds({"A"}), g, s));
  const std::vector<std::string> bad = {"Z"};
  CHECK_THROWS(confusion(preds({"A"}), bad, s));
}

TEST_CASE("compute_metrics examples") {
  const auto s = abc();
  const std::vector<std::string> gold = {"A", "B", "C", "A"};
  auto m = compute_metrics(confusion(preds({"A", "B", "C", "A"}), gold, s));
  for (double v : metrics_csv_values(m)) CHECK(v == 1.0);
  CHECK(m.invalid_rate == 0.0);

  const std::vector<std::string> g = {"A", "B", "B"};
  m = compute_metrics(confusion(preds({"A", "A", "B"}), g, s));
  CHECK(m.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.per_class.at("A").precision == doctest::Approx(0.5));
  CHECK(m.per_class.at("B").recall == doctest::Approx(0.5));
  CHECK(m.per_class.at("C").support == 0);

  m = compute_metrics(confusion(preds({nullptr, nullptr, nullptr}), g, s));
  CHECK(m.accuracy == 0.0);
  CHECK(m.invalid_rate == 1.0);
  CHECK(m.per_class.at("A").recall == 0.0);
  CHECK(m.per_class.at("B").recall == 0.0);

  ConfusionMatrix empty{s.valid_labels, CountMatrix::Zero(3, 4)};
  CHECK_THROWS(compute_metrics(empty));
  CHECK(metrics_csv_header().size() == 7);
  CHECK(metrics_csv_header().front() == "accuracy");
}

TEST_CASE("metrics agree with per-item counting on random fixtures") {
  const auto s = abc();
  std::mt19937_64 rng(3);
  const char* options[] = {"A", "B", "C", nullptr};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<std::string> gold;
    std::vector<ParsedLabel> p;
    for (std::size_t i = 0; i < n; ++i) {
      gold.emplace_back(options[rng() % (1 + trial % 3)]);
      const char* l = options[rng() % 4];
      p.push_back(l ? ParsedLabel::valid(l) : ParsedLabel::invalid(InvalidReason::Empty));
    }
    const auto m = compute_metrics(confusion(p, gold, s));
    const auto o = brute_force(p, gold, s.valid_labels);
    CHECK(std::abs(m.accuracy - o.accuracy) <= 1e-12);
    CHECK(std::abs(m.macro_precision - o.macro_precision) <= 1e-12);
    CHECK(std::abs(m.macro_recall - o.macro_recall) <= 1e-12);
    CHECK(std::abs(m.macro_f1 - o.macro_f1) <= 1e-12);
    CHECK(std::abs(m.micro_f1 - m.accuracy) <= 1e-12);
    CHECK(std::abs(m.micro_precision - m.accuracy) <= 1e-12);
    CHECK(std::abs(m.micro_recall - m.accuracy) <= 1e-12);
    for (double v : metrics_csv_values(m)) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("metrics serialize") {
  const std::vector<std::string> g = {"A", "B"};
  const auto m = compute_metrics(confusion(preds({"A", "A"}), g, abc()));
  const auto j = to_json(m);
  CHECK(j.at("accuracy") == 0.5);
  CHECK(j.at("n") == 2);
  CHECK(j.at("per_class").contains("B"));
}

TEST_CASE("incomplete beta and t distribution match an independent implementation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ab(0.1, 60.0), xs(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = ab(rng), b = ab(rng), x = xs(rng);
    CHECK(std::abs(incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)) <= 1e-9);
  }
  std::uniform_real_distribution<double> ts(-12.0, 12.0), dfs(1.0, 200.0);
  for (int i = 0; i < 2000; ++i) {
    const double t = ts(rng), df = dfs(rng);
    CHECK(std::abs(two_sided_p(t, df) - boost_p(t, df)) <= 1e-9);
    CHECK(std::abs(student_t_cdf(t, df) - boost::math::cdf(boost::math::students_t(df), t)) <= 1e-9);
  }
  CHECK(incomplete_beta(2, 3, 0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1) == 1.0);
  CHECK(two_sided_p(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("t-test examples") {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 3, 4, 5, 6};
  const auto st = student_t(a, b);
  CHECK(st.statistic == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(*st.df == 8.0);
  CHECK(std::abs(*st.p_value - boost_p(-1.0, 8.0)) <= 1e-9);

  const auto same = paired_t(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(*same.p_value == 1.0);

  const std::vector<double> x = {1, 2, 3}, y = {10, 20, 30, 40};
  const auto w = welch_t(x, y);
  // Formula evaluated in 50-digit arithmetic.
  Big mx = Big(6) / 3, my = Big(100) / 4;
  Big vx = 0, vy = 0;
  for (double v : x) vx += (Big(v) - mx) * (Big(v) - mx);
  for (double v : y) vy += (Big(v) - my) * (Big(v) - my);
  vx /= 2;
  vy /= 3;
  const Big sx = vx / 3, sy = vy / 4;
  const Big t = (mx - my) / boost::multiprecision::sqrt(sx + sy);
  const Big df = (sx + sy) * (sx + sy) / (sx * sx / 2 + sy * sy / 3);
  CHECK(std::abs(w.statistic - t.convert_to<double>()) <= 1e-9);
  CHECK(std::abs(*w.df - df.convert_to<double>()) <= 1e-9);
  CHECK(std::abs(*w.p_value - boost_p(t.convert_to<double>(), df.convert_to<double>())) <= 1e-9);
  CHECK((w.n == std::vector<std::size_t>{3, 4}));

  const std::vector<double> c1 = {2, 2, 2}, c2 = {2, 2, 2}, c3 = {3, 3, 3};
  CHECK_THROWS_AS(welch_t(c1, c2), StatsError);
  CHECK_THROWS_AS(student_t(c1, c2), StatsError);
  CHECK(std::isinf(welch_t(c1, c3).statistic));
  CHECK(*welch_t(c1, c3).p_value == 0.0);
  const std::vector<double> one = {1};
  CHECK_THROWS_AS(welch_t(one, a), StatsError);
  CHECK_THROWS_AS(paired_t(x, y), StatsError);
}

TEST_CASE("paired t matches the one-sample formula") {
  const std::vector<double> a = {0.61, 0.72, 0.55, 0.80, 0.66, 0.70}, b = {0.58, 0.75, 0.50, 0.71, 0.60, 0.69};
  Big md = 0;
  for (std::size_t i = 0; i < a.size(); ++i) md += Big(a[i]) - Big(b[i]);
  md /= a.size();
  Big ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Big d = Big(a[i]) - Big(b[i]) - md;
    ss += d * d;
  }
  const Big t = md / boost::multiprecision::sqrt(ss / (a.size() - 1) / a.size());
  const auto r = paired_t(a, b);
  CHECK(std::abs(r.statistic - t.convert_to<double>()) <= 1e-9);
  CHECK(*r.df == 5.0);
  CHECK(std::abs(*r.p_value - boost_p(r.statistic, 5.0)) <= 1e-9);
}

TEST_CASE("student equals welch on equal variance and size") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6);
    for (auto& v : a) v = z(rng);
    const double shift = z(rng);
    std::vector<double> b = a;
    std::reverse(b.begin(), b.end());
    for (auto& v : b) v = -v + shift;  // same variance
    const auto s = student_t(a, b), w = welch_t(a, b);
    CHECK(std::abs(s.statistic - w.statistic) <= 1e-12);
    CHECK(std::abs(*s.df - *w.df) <= 1e-9);
  }
}

TEST_CASE("spearman") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> up = {2, 4, 8, 16, 32}, down = {5, 4, 3, 2, -10};
  CHECK(spearman(x, up).statistic == doctest::Approx(1.0));
  CHECK(*spearman(x, up).p_value == 0.0);
  CHECK(spearman(x, down).statistic == doctest::Approx(-1.0));

  const std::vector<double> tx = {1, 2, 2, 4}, ty = {3, 1, 4, 2};
  CHECK((average_ranks(tx) == std::vector<double>{1, 2.5, 2.5, 4}));
  const auto r = spearman(tx, ty);
  CHECK(r.statistic == doctest::Approx(-1.0 / std::sqrt(10.0)).epsilon(1e-14));
  const double t = r.statistic * std::sqrt(2.0 / (1.0 - r.statistic * r.statistic));
  CHECK(std::abs(*r.p_value - boost_p(t, 2.0)) <= 1e-9);
  CHECK(*r.df == 2.0);

  const std::vector<double> flat = {1, 1, 1, 1};
  CHECK_THROWS_AS(spearman(flat, ty), StatsError);
  const std::vector<double> two = {1, 2};
  CHECK_THROWS_AS(spearman(two, two), StatsError);

  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> d(0, 5);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);
    try {
      const double rho = spearman(a, b).statistic;
      CHECK((rho >= -1.0 && rho <= 1.0));
    } catch (const StatsError&) {
    }
  }
}

TEST_CASE("cohens d") {
  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 3, 4, 5};
  CHECK(cohens_d(a, a) == 0.0);
  CHECK(cohens_d(a, b) == doctest::Approx(-cohens_d(b, a)));
  // Both samples have variance 5/3, so shifting by sqrt(5/3) gives d = 1.
  const double sd = std::sqrt(5.0 / 3.0);
  std::vector<double> shifted = a;
  for (auto& v : shifted) v += sd;
  CHECK(cohens_d(shifted, a) == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<double> c = {3, 3}, e = {3, 3};
  CHECK_THROWS_AS(cohens_d(c, e), StatsError);
}

TEST_CASE("stat results serialize") {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 3, 4, 5, 6};
  const auto j = to_json(student_t(a, b));
  CHECK(j.at("test") == to_string(StatTest::StudentT));
  CHECK(j.at("statistic") == -1.0);
  CHECK(j.contains("p_value"));
}
