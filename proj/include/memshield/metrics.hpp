#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "memshield/catalog.hpp"
#include "memshield/error.hpp"

namespace memshield {

// Malware is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }

  void add(Label predicted, Label truth) {
    if (truth == Label::Malware) {
      (predicted == Label::Malware ? tp : fn) += 1;
    } else {
      (predicted == Label::Malware ? fp : tn) += 1;
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> truths) {
  if (predictions.size() != truths.size()) throw PreconditionError("prediction/truth length mismatch");
  if (predictions.empty()) throw PreconditionError("confusion matrix of zero instances");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) cm.add(predictions[i], truths[i]);
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricReport {
  double accuracy = 0.0;
  // Malware-as-positive values.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<ClassMetrics, 2> per_class{};  // indexed by Label
  ClassMetrics weighted{};                    // support-weighted mean of per_class
};

namespace detail {

// Zero-denominator conventions: precision with no positive predictions is 1
// when no positives were missed, else 0; recall with no positives is 1; F1 is
// 0 when precision + recall is 0.
inline ClassMetrics class_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassMetrics m;
  m.precision = tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0)
                             : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.support = tp + fn;
  return m;
}

}  // namespace detail

inline MetricReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw PreconditionError("metrics of an empty confusion matrix");
  MetricReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.per_class[1] = detail::class_metrics(cm.tp, cm.fp, cm.fn);
  r.per_class[0] = detail::class_metrics(cm.tn, cm.fn, cm.fp);
  r.precision = r.per_class[1].precision;
  r.recall = r.per_class[1].recall;
  r.f1 = r.per_class[1].f1;
  const double total = static_cast<double>(cm.total());
  for (const auto& c : r.per_class) {
    const double w = static_cast<double>(c.support) / total;
    r.weighted.precision += w * c.precision;
    r.weighted.recall += w * c.recall;
    r.weighted.f1 += w * c.f1;
  }
  r.weighted.support = cm.total();
  return r;
}

struct SummaryStat {
  double mean = 0.0;
  double std = 0.0;             // sample standard deviation (n - 1)
  double std_population = 0.0;  // n
};

inline SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_population = std::sqrt(ss / static_cast<double>(values.size()));
  s.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

// The four fold-level columns reported for cross-validation: accuracy and the
// weighted precision, recall and F1.
struct CVReport {
  std::vector<MetricReport> folds;
  std::vector<ConfusionMatrix> confusion;
  SummaryStat accuracy, precision, recall, f1;

  std::size_t k() const { return folds.size(); }

  void finalize() {
    std::vector<double> a, p, r, f;
    for (const auto& m : folds) {
      a.push_back(m.accuracy);
      p.push_back(m.weighted.precision);
      r.push_back(m.weighted.recall);
      f.push_back(m.weighted.f1);
    }
    accuracy = summarize(a);
    precision = summarize(p);
    recall = summarize(r);
    f1 = summarize(f);
  }
};

}  // namespace memshield
