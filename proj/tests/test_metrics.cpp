#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "deepids/metrics.hpp"
#include "support/checks.hpp"

using namespace deepids;
using metrics::ConfusionMatrix;

namespace {

Eigen::VectorXi ids(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out[i++] = x;
  return out;
}

ConfusionMatrix cm2(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  ConfusionMatrix cm;
  cm.counts.resize(2, 2);
  cm.counts << a, b, c, d;
  return cm;
}

}  // namespace

TEST_CASE("confusion matrix counts actual rows against predicted columns") {
  const ConfusionMatrix cm = metrics::confusion(ids({0, 1, 1}), ids({0, 1, 0}), 2);
  CHECK(cm.counts(0, 0) == 1);
  CHECK(cm.counts(0, 1) == 0);
  CHECK(cm.counts(1, 0) == 1);
  CHECK(cm.counts(1, 1) == 1);
  CHECK(cm.total() == 3);
  CHECK(cm.num_classes() == 2);

  const ConfusionMatrix empty = metrics::confusion({}, {}, 3);
  CHECK(empty.counts.isZero());
  CHECK(empty.num_classes() == 3);

  REQUIRE_FAILS_WITH(metrics::confusion(ids({0, 1}), ids({0}), 2),
                     errc::length_mismatch);
  REQUIRE_FAILS_WITH(metrics::confusion(ids({0, 2}), ids({0, 1}), 2),
                     errc::class_out_of_range);
  REQUIRE_FAILS_WITH(metrics::confusion(ids({0, -1}), ids({0, 1}), 2),
                     errc::class_out_of_range);
  REQUIRE_FAILS_WITH(metrics::confusion(ids({0}), ids({0}), 1), errc::invalid_spec);
}

TEST_CASE("confusion is invariant under record order") {
  Eigen::VectorXi actual = ids({0, 1, 2, 1, 0, 2, 2, 1});
  Eigen::VectorXi predicted = ids({0, 1, 1, 1, 2, 2, 0, 0});
  const ConfusionMatrix base = metrics::confusion(actual, predicted, 3);

  std::mt19937_64 rng(5);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::VectorXi a(8), p(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = actual[perm[i]];
      p[i] = predicted[perm[i]];
    }
    CHECK(metrics::confusion(a, p, 3).counts == base.counts);
  }
}

TEST_CASE("per-class mean accuracy") {
  CHECK(metrics::accuracy_macro(cm2(3, 1, 1, 3)) == 0.75);
  CHECK(metrics::accuracy_macro(cm2(4, 0, 0, 4)) == 1.0);
  CHECK(metrics::accuracy_standard(cm2(3, 1, 1, 3)) == 0.75);

  // with two classes the per-class mean equals plain accuracy
  const ConfusionMatrix uneven = cm2(7, 2, 3, 11);
  CHECK(metrics::accuracy_macro(uneven) ==
        Catch::Approx(metrics::accuracy_standard(uneven)).epsilon(1e-15));

  ConfusionMatrix empty;
  empty.counts.setZero(2, 2);
  REQUIRE_FAILS_WITH(metrics::accuracy_macro(empty), errc::empty_matrix);
  REQUIRE_FAILS_WITH(metrics::accuracy_standard(empty), errc::empty_matrix);
}

TEST_CASE("mean accuracy identity on random matrices") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(2, 6);
  std::uniform_int_distribution<std::int64_t> count(0, 40);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = size(rng);
    ConfusionMatrix cm;
    cm.counts.resize(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) cm.counts(i, j) = count(rng);
    if (cm.total() == 0) cm.counts(0, 0) = 1;

    const double n = static_cast<double>(cm.total());
    const double trace = static_cast<double>(cm.counts.trace());
    const double expected = 1.0 - (2.0 / m) * (1.0 - trace / n);
    CHECK(metrics::accuracy_macro(cm) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("binary collapse treats every nonzero class as attack") {
  // actual A A N N, predicted A N A N (class 1 = attack)
  const ConfusionMatrix half = metrics::confusion(ids({1, 1, 0, 0}), ids({1, 0, 1, 0}), 2);
  const metrics::BinaryCounts c = metrics::collapse_binary(half);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(metrics::positive_predictive_value(half).value == 0.5);
  CHECK(metrics::true_positive_rate(half).value == 0.5);

  // actual A A N, predicted A N N: precise but misses half the attacks
  const ConfusionMatrix miss = metrics::confusion(ids({1, 1, 0}), ids({1, 0, 0}), 2);
  const metrics::Ratio ppv = metrics::positive_predictive_value(miss);
  const metrics::Ratio tpr = metrics::true_positive_rate(miss);
  CHECK(ppv.value == 1.0);
  CHECK(ppv.defined);
  CHECK(tpr.value == 0.5);
  CHECK(tpr.defined);

  const ConfusionMatrix perfect = metrics::confusion(ids({0, 1, 1}), ids({0, 1, 1}), 2);
  CHECK(metrics::positive_predictive_value(perfect).value == 1.0);
  CHECK(metrics::true_positive_rate(perfect).value == 1.0);
}

TEST_CASE("ratios with zero denominators are flagged undefined") {
  // nothing flagged as attack: no positives predicted, no attacks present
  const ConfusionMatrix quiet = metrics::confusion(ids({0, 0, 0}), ids({0, 0, 0}), 2);
  const metrics::Ratio ppv = metrics::positive_predictive_value(quiet);
  const metrics::Ratio tpr = metrics::true_positive_rate(quiet);
  CHECK_FALSE(ppv.defined);
  CHECK(ppv.value == 0.0);
  CHECK_FALSE(tpr.defined);
  CHECK(tpr.value == 0.0);

  // attacks exist but none predicted: recall defined (0), precision not
  const ConfusionMatrix blind = metrics::confusion(ids({1, 1, 0}), ids({0, 0, 0}), 2);
  CHECK_FALSE(metrics::positive_predictive_value(blind).defined);
  const metrics::Ratio blind_tpr = metrics::true_positive_rate(blind);
  CHECK(blind_tpr.defined);
  CHECK(blind_tpr.value == 0.0);
}

TEST_CASE("multiclass collapse pools all attack classes") {
  ConfusionMatrix cm;
  cm.counts.resize(3, 3);
  cm.counts << 5, 1, 0,
               2, 3, 1,
               0, 1, 4;
  const metrics::BinaryCounts c = metrics::collapse_binary(cm);
  CHECK(c.tp == 9);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  CHECK(c.tn == 5);
  CHECK(metrics::positive_predictive_value(cm).value == Catch::Approx(9.0 / 10.0));
  CHECK(metrics::true_positive_rate(cm).value == Catch::Approx(9.0 / 11.0));
}

TEST_CASE("full report carries per-class statistics") {
  const std::vector<std::string> names{"normal", "dos", "probe"};
  const Eigen::VectorXi actual = ids({0, 0, 1, 1, 1, 2, 2, 2});
  const Eigen::VectorXi predicted = ids({0, 1, 1, 1, 0, 2, 2, 1});
  const metrics::MetricsReport rep = metrics::compute_metrics(actual, predicted, names);

  REQUIRE(rep.per_class.size() == 3);
  CHECK(rep.per_class[0].name == "normal");
  CHECK(rep.per_class[0].support == 2);
  CHECK(rep.per_class[0].precision.value == 0.5);  // 1 of 2 predicted normal
  CHECK(rep.per_class[0].recall.value == 0.5);
  CHECK(rep.per_class[1].support == 3);
  CHECK(rep.per_class[1].precision.value == 0.5);  // 2 of 4 predicted dos
  CHECK(rep.per_class[1].recall.value == Catch::Approx(2.0 / 3.0));
  CHECK(rep.per_class[2].support == 3);
  CHECK(rep.per_class[2].precision.value == 1.0);
  CHECK(rep.per_class[2].recall.value == Catch::Approx(2.0 / 3.0));

  CHECK(rep.acc_standard == Catch::Approx(5.0 / 8.0));
  CHECK(rep.cm.total() == 8);
}

TEST_CASE("report serializes to json and text") {
  const std::vector<std::string> names{"normal", "attack"};
  const metrics::MetricsReport rep =
      metrics::compute_metrics(ids({0, 1, 1, 0}), ids({0, 1, 0, 0}), names);

  const nlohmann::json j = metrics::to_json(rep);
  CHECK(j["records"] == 4);
  CHECK(j["acc"] == rep.acc);
  CHECK(j["ppv"]["defined"] == true);
  CHECK(j["ppv"]["value"] == 1.0);
  CHECK(j["tpr"]["value"] == 0.5);
  REQUIRE(j["confusion"].size() == 2);
  CHECK(j["confusion"][0][0] == 2);
  CHECK(j["confusion"][1][0] == 1);
  CHECK(j["classes"][1]["name"] == "attack");
  CHECK(j["classes"][1]["support"] == 2);

  std::ostringstream text;
  metrics::write_text(text, rep);
  const std::string s = text.str();
  CHECK(s.find("records 4") != std::string::npos);
  CHECK(s.find("class normal") != std::string::npos);
  CHECK(s.find("(undefined)") == std::string::npos);
}
