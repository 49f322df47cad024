// Classification quality measures. Accuracy is the per-class mean of
// (TP + TN) / total; PPV and TPR collapse the attack classes against class 0
// ("normal") and score the resulting binary decision.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepids/error.hpp"

namespace deepids {
namespace metrics {

struct ConfusionMatrix {
  // counts(i, j): records of actual class i predicted as class j.
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  int num_classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
};

inline ConfusionMatrix confusion(const Eigen::VectorXi& actual,
                                 const Eigen::VectorXi& predicted, int num_classes) {
  if (actual.size() != predicted.size())
    fail(errc::length_mismatch, "confusion: " + std::to_string(actual.size()) +
                                    " actual vs " + std::to_string(predicted.size()) +
                                    " predicted labels");
  if (num_classes < 2) fail(errc::invalid_spec, "confusion needs >= 2 classes");
  ConfusionMatrix cm;
  cm.counts.setZero(num_classes, num_classes);
  for (Eigen::Index r = 0; r < actual.size(); ++r) {
    const int a = actual[r], p = predicted[r];
    if (a < 0 || a >= num_classes || p < 0 || p >= num_classes)
      fail(errc::class_out_of_range,
           "record " + std::to_string(r) + ": class id outside [0, " +
               std::to_string(num_classes) + ")");
    ++cm.counts(a, p);
  }
  return cm;
}

// Mean over classes of the one-vs-rest accuracy (TP_i + TN_i) / total.
inline double accuracy_macro(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  if (!(n > 0.0)) fail(errc::empty_matrix, "accuracy of empty confusion matrix");
  const int m = cm.num_classes();
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto row = cm.counts.row(i).sum();
    const auto col = cm.counts.col(i).sum();
    sum += (n - static_cast<double>(row) - static_cast<double>(col) +
            2.0 * static_cast<double>(cm.counts(i, i))) /
           n;
  }
  return sum / static_cast<double>(m);
}

inline double accuracy_standard(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  if (!(n > 0.0)) fail(errc::empty_matrix, "accuracy of empty confusion matrix");
  return static_cast<double>(cm.counts.trace()) / n;
}

// A ratio whose denominator can legitimately be zero; such values are
// reported as 0 with defined == false rather than NaN.
struct Ratio {
  double value = 0.0;
  bool defined = false;
};

inline Ratio ratio(std::int64_t numer, std::int64_t denom) {
  if (denom == 0) return {0.0, false};
  return {static_cast<double>(numer) / static_cast<double>(denom), true};
}

struct BinaryCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Collapse to attack (any class > 0) versus normal (class 0).
inline BinaryCounts collapse_binary(const ConfusionMatrix& cm) {
  BinaryCounts c;
  const int m = cm.num_classes();
  c.tn = cm.counts(0, 0);
  for (int j = 1; j < m; ++j) c.fp += cm.counts(0, j);
  for (int i = 1; i < m; ++i) {
    c.fn += cm.counts(i, 0);
    for (int j = 1; j < m; ++j) c.tp += cm.counts(i, j);
  }
  return c;
}

inline Ratio positive_predictive_value(const ConfusionMatrix& cm) {
  const BinaryCounts c = collapse_binary(cm);
  return ratio(c.tp, c.tp + c.fp);
}

inline Ratio true_positive_rate(const ConfusionMatrix& cm) {
  const BinaryCounts c = collapse_binary(cm);
  return ratio(c.tp, c.tp + c.fn);
}

struct PerClass {
  std::string name;
  std::int64_t support = 0;
  Ratio precision;
  Ratio recall;
};

struct MetricsReport {
  ConfusionMatrix cm;
  double acc = 0.0;           // per-class mean accuracy
  double acc_standard = 0.0;  // plain trace / total
  Ratio ppv;                  // attack-vs-normal precision
  Ratio tpr;                  // attack-vs-normal recall
  std::vector<PerClass> per_class;
};

inline MetricsReport compute_metrics(const Eigen::VectorXi& actual,
                                     const Eigen::VectorXi& predicted,
                                     const std::vector<std::string>& class_names) {
  MetricsReport rep;
  rep.cm = confusion(actual, predicted, static_cast<int>(class_names.size()));
  rep.acc = accuracy_macro(rep.cm);
  rep.acc_standard = accuracy_standard(rep.cm);
  rep.ppv = positive_predictive_value(rep.cm);
  rep.tpr = true_positive_rate(rep.cm);
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    PerClass pc;
    pc.name = class_names[i];
    pc.support = rep.cm.counts.row(idx).sum();
    pc.precision = ratio(rep.cm.counts(idx, idx), rep.cm.counts.col(idx).sum());
    pc.recall = ratio(rep.cm.counts(idx, idx), pc.support);
    rep.per_class.push_back(std::move(pc));
  }
  return rep;
}

inline nlohmann::json to_json(const Ratio& r) {
  return nlohmann::json{{"value", r.value}, {"defined", r.defined}};
}

inline nlohmann::json to_json(const MetricsReport& rep) {
  nlohmann::json j;
  j["records"] = rep.cm.total();
  j["acc"] = rep.acc;
  j["acc_standard"] = rep.acc_standard;
  j["ppv"] = to_json(rep.ppv);
  j["tpr"] = to_json(rep.tpr);
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < rep.cm.counts.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < rep.cm.counts.cols(); ++k)
      row.push_back(rep.cm.counts(i, k));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& pc : rep.per_class)
    classes.push_back({{"name", pc.name},
                       {"support", pc.support},
                       {"precision", to_json(pc.precision)},
                       {"recall", to_json(pc.recall)}});
  j["classes"] = std::move(classes);
  return j;
}

// Plain-text summary for the console and the train report file.
inline void write_text(std::ostream& os, const MetricsReport& rep) {
  os << "records " << rep.cm.total() << '\n';
  os << "acc " << rep.acc << '\n';
  os << "acc_standard " << rep.acc_standard << '\n';
  os << "ppv " << rep.ppv.value << (rep.ppv.defined ? "" : " (undefined)") << '\n';
  os << "tpr " << rep.tpr.value << (rep.tpr.defined ? "" : " (undefined)") << '\n';
  for (const auto& pc : rep.per_class) {
    os << "class " << pc.name << " support " << pc.support << " precision "
       << pc.precision.value << (pc.precision.defined ? "" : " (undefined)")
       << " recall " << pc.recall.value << (pc.recall.defined ? "" : " (undefined)")
       << '\n';
  }
}

}  // namespace metrics
}  // namespace deepids
