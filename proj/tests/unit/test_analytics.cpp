#include <doctest.h>

#include <cmath>

#include "colornet/analytics.hpp"
#include "colornet/error.hpp"
#include "colornet/rng.hpp"

using namespace colornet;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(t, p) = rows[t][p];
  return cm;
}

EvalReport report_with(const std::string& id, std::vector<double> per_class) {
  EvalReport r;
  r.id = id;
  r.per_class = std::move(per_class);
  return r;
}

}  // namespace

TEST_CASE("confusion counts by hand") {
  const auto cm = confusion(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1}, 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.total() == 3);
  CHECK(cm.trace() == 2);
}

TEST_CASE("perfect predictions give a diagonal matrix") {
  const std::vector<int> y{0, 1, 2, 2, 1, 2};
  const auto cm = confusion(y, y, 3);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.at(2, 2) == 3);
  CHECK(cm.trace() == cm.total());
  for (double a : per_class_accuracy(cm)) CHECK(a == 1.0);
  const auto r = macro_rates(cm);
  CHECK(r.tp == 100.0);
  CHECK(r.fn == 0.0);
}

TEST_CASE("empty input gives a zero matrix") {
  const auto cm = confusion(std::vector<int>{}, std::vector<int>{}, 4);
  CHECK(cm.num_classes() == 4);
  CHECK(cm.total() == 0);
}

TEST_CASE("confusion rejects bad input") {
  CHECK_THROWS_AS(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, 2), UsageError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), UsageError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{-1}, 2), UsageError);
}

TEST_CASE("two-class fixture rates") {
  const auto cm = from_rows({{8, 2}, {1, 9}});
  const auto pc = per_class_accuracy(cm);
  CHECK(pc[0] == doctest::Approx(0.8));
  CHECK(pc[1] == doctest::Approx(0.9));
  const auto r = macro_rates(cm);
  CHECK(r.tp == doctest::Approx(85.0));
  CHECK(r.fn == doctest::Approx(15.0));
  CHECK(r.fp == doctest::Approx(15.0));
  CHECK(r.tn == doctest::Approx(85.0));
}

TEST_CASE("three-class fixture rates") {
  // Class 0 positives: 5 (4 hit). Negatives 10, of which 1 predicted 0.
  const auto cm = from_rows({{4, 1, 0}, {1, 3, 1}, {0, 2, 3}});
  const auto r = macro_rates(cm);
  const double tp = (4.0 / 5 + 3.0 / 5 + 3.0 / 5) / 3 * 100;
  const double fp = (1.0 / 10 + 3.0 / 10 + 1.0 / 10) / 3 * 100;
  CHECK(r.tp == doctest::Approx(tp));
  CHECK(r.fp == doctest::Approx(fp));
  CHECK(r.tp + r.fn == doctest::Approx(100.0));
  CHECK(r.tn + r.fp == doctest::Approx(100.0));
}

TEST_CASE("empty class row has zero accuracy and is skipped by TP") {
  const auto cm = from_rows({{3, 1, 0}, {0, 0, 0}, {0, 1, 4}});
  const auto pc = per_class_accuracy(cm);
  CHECK(pc[1] == 0.0);
  const auto r = macro_rates(cm);
  CHECK(r.tp == doctest::Approx((0.75 + 0.8) / 2 * 100));
}

TEST_CASE("macro sums hold on random matrices") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    ConfusionMatrix cm(k);
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t p = 0; p < k; ++p) cm.at(t, p) = rng.below(4) == 0 ? 0 : rng.below(50);
    const auto r = macro_rates(cm);
    for (double a : per_class_accuracy(cm)) CHECK((a >= 0.0 && a <= 1.0));
    if (cm.total() == 0) continue;
    CHECK(std::fabs(r.tp + r.fn - 100.0) < 0.01);
    CHECK(std::fabs(r.tn + r.fp - 100.0) < 0.01);
  }
}

TEST_CASE("argmax confusion is invariant to monotone row rescaling") {
  Rng rng(22);
  ScoreMatrix s(40, 5);
  std::vector<int> labels(40);
  for (long i = 0; i < 40; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(5));
    for (long j = 0; j < 5; ++j) s(i, j) = rng.uniform(0.0, 1.0);
  }
  ScoreMatrix t = s;
  for (long i = 0; i < 40; ++i) {
    const double a = rng.uniform(0.1, 10.0), b = rng.uniform(-5.0, 5.0);
    for (long j = 0; j < 5; ++j) t(i, j) = std::exp(a * s(i, j) + b);
  }
  const auto ra = evaluate_scores("a", s, labels);
  const auto rb = evaluate_scores("b", t, labels);
  CHECK(ra.confusion == rb.confusion);
}

TEST_CASE("report accuracy equals trace over total") {
  const auto cm = from_rows({{8, 2}, {1, 9}});
  const auto r = make_report("x", cm, 123, 1.5);
  CHECK(r.accuracy == doctest::Approx(17.0 / 20));
  CHECK(r.param_count == 123);
}

TEST_CASE("report json round trip and reproducible output") {
  const auto r = make_report("HSV", from_rows({{8, 2}, {1, 9}}), 7, 3.25);
  const auto j = report_to_json(r);
  CHECK_FALSE(j.contains("wall_time"));
  CHECK(report_to_json(r, true)["wall_time"] == 3.25);
  const auto back = report_from_json(j);
  CHECK(back.id == "HSV");
  CHECK(back.confusion == r.confusion);
  CHECK(back.accuracy == r.accuracy);
  CHECK(back.per_class == r.per_class);
  CHECK(report_to_json(back) == j);
}

TEST_CASE("csv row and confusion grid") {
  const auto r = make_report("YUV", from_rows({{8, 2}, {1, 9}}));
  const auto header = report_csv_header();
  const auto row = report_csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(row.rfind("YUV,", 0) == 0);
  CHECK(confusion_grid(r.confusion) == "8 2\n1 9\n");
}

TEST_CASE("identical reports have zero spread") {
  const std::vector<EvalReport> rs{report_with("A", {0.5, 0.7}), report_with("B", {0.5, 0.7})};
  for (const auto& d : cross_space_class_deltas(rs)) {
    CHECK(d.spread == 0.0);
    CHECK(d.best == "A");
  }
}

TEST_CASE("hand computed class deltas") {
  const std::vector<EvalReport> rs{report_with("A", {0.8, 0.5, 0.6}),
                                   report_with("B", {0.6, 0.9, 0.4})};
  const auto d = cross_space_class_deltas(rs);
  REQUIRE(d.size() == 3);
  CHECK(d[0].class_index == 1);
  CHECK(d[0].best == "B");
  CHECK(d[0].worst == "A");
  CHECK(d[0].spread == doctest::Approx(0.4));
  // Classes 0 and 2 tie at 0.2: lower index first.
  CHECK(d[1].class_index == 0);
  CHECK(d[2].class_index == 2);
  CHECK(d[2].best == "A");
}

TEST_CASE("branch disagreement fixture") {
  const std::vector<std::vector<int>> p{{0, 1, 2, 0}, {0, 1, 1, 1}, {1, 1, 2, 0}};
  const auto m = branch_disagreement(p);
  CHECK(m[0][0] == 0.0);
  CHECK(m[0][1] == doctest::Approx(0.5));
  CHECK(m[0][2] == doctest::Approx(0.25));
  CHECK(m[1][2] == doctest::Approx(0.75));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(m[i][j] == m[j][i]);
}

TEST_CASE("complementary predictions disagree everywhere") {
  const std::vector<std::vector<int>> p{{0, 1, 0, 1}, {1, 0, 1, 0}};
  CHECK(branch_disagreement(p)[0][1] == 1.0);
}

TEST_CASE("pair accuracy ignores other classes") {
  ScoreMatrix s(4, 3);
  s << 0.2, 0.1, 0.7,  // label 0: 0 beats 1
      0.1, 0.3, 0.6,   // label 1: 1 beats 0
      0.5, 0.4, 0.1,   // label 1: 0 beats 1, miss
      0.3, 0.3, 0.4;   // label 2: excluded
  CHECK(pair_accuracy(s, std::vector<int>{0, 1, 1, 2}, 0, 1) == doctest::Approx(2.0 / 3));
}
