#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memshield/bench.hpp"
#include "memshield/classifier.hpp"
#include "memshield/explain.hpp"
#include "memshield/forest.hpp"
#include "memshield/metrics.hpp"
#include "memshield/serialize.hpp"
#include "memshield/split.hpp"

namespace memshield {

// ---------------------------------------------------------------------------
// Stage 1: every classifier trained and tested on one stratified 80/20 split.

struct BaselineRow {
  ClassifierKind kind;
  MetricReport metrics;
  ConfusionMatrix confusion;
};

struct BaselineTable {
  std::vector<BaselineRow> rows;  // by non-increasing weighted F1, ties in declaration order
  ClassifierKind winner = ClassifierKind::RandomForest;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;

  const BaselineRow& row(ClassifierKind k) const {
    for (const auto& r : rows) {
      if (r.kind == k) return r;
    }
    throw PreconditionError("classifier not in table");
  }
};

struct Stage1Options {
  std::vector<ClassifierKind> classifiers{std::begin(kAllClassifiers), std::end(kAllClassifiers)};
  ClassifierSpec defaults{};
  double test_fraction = 0.2;
};

inline BaselineTable run_stage1(const Dataset& d, std::uint64_t seed, const Stage1Options& options = {}) {
  const auto split = stratified_split(d, options.test_fraction, derive_seed(seed, 1));
  BaselineTable table;
  table.seed = seed;
  table.train_size = split.train.size();
  table.test_size = split.test.size();
  for (auto kind : options.classifiers) {
    auto spec = options.defaults;
    spec.kind = kind;
    const auto model = fit_classifier(spec, split.train, derive_seed(seed, 100 + static_cast<std::uint64_t>(kind)));
    const auto cm = evaluate(model, split.test);
    table.rows.push_back({kind, compute_metrics(cm), cm});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const BaselineRow& a, const BaselineRow& b) {
    if (a.metrics.weighted.f1 != b.metrics.weighted.f1) return a.metrics.weighted.f1 > b.metrics.weighted.f1;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  if (!table.rows.empty()) table.winner = table.rows.front().kind;
  return table;
}

// ---------------------------------------------------------------------------
// Stage 2: single-subtype training with top-k feature selection.

struct ExperimentConfig {
  std::size_t k = 5;
  double train_fraction = 0.8;
  ForestParams forest{};
  std::size_t background_size = 100;
  // Latency is measured only when set; it is the one non-deterministic field.
  std::optional<LatencyConfig> latency;
};

inline ImportanceRanking select_top_k(const Dataset& train, std::size_t k, std::uint64_t seed,
                                      const ForestParams& params = {}) {
  if (k == 0) throw PreconditionError("k must be >= 1");
  if (k > train.n_features()) {
    throw PreconditionError("k=" + std::to_string(k) + " exceeds the " + std::to_string(train.n_features()) +
                            " available features");
  }
  auto p = params;
  p.seed = seed;
  return mdi_importance(fit_forest(train, p)).top(k);
}

// Per-stratum detection counts on the transfer test set.
struct StratumOutcome {
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct SubtypeModelResult {
  Subtype subtype = Subtype::Transponder;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  ImportanceRanking selected;  // ranked, length k
  ConfusionMatrix confusion;
  MetricReport metrics;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  ConfusionMatrix held_in;  // remaining instances of the training subtype (malware only)
  ConfusionMatrix unseen;   // the other subtypes (malware only)
  std::array<StratumOutcome, kSubtypeCount + 1> by_stratum{};
  SizeReport size;
  std::optional<LatencyReport> latency;
  RandomForestModel model;
  BackgroundSample background;
};

inline std::uint64_t subtype_seed(std::uint64_t seed, Subtype s) { return derive_seed(seed, 10 + index(s)); }

inline SubtypeModelResult run_subtype_experiment(const Dataset& d, Subtype subtype, const ExperimentConfig& config,
                                                 std::uint64_t seed) {
  const auto sub_seed = subtype_seed(seed, subtype);
  const auto split = subtype_partition(d, subtype, config.train_fraction, derive_seed(sub_seed, 1));

  SubtypeModelResult r;
  r.subtype = subtype;
  r.seed = seed;
  r.k = config.k;
  r.selected = select_top_k(split.train, config.k, derive_seed(sub_seed, 2), config.forest);
  const auto train = project(split.train, r.selected.indices());
  const auto test = project(split.test, r.selected.indices());
  r.train_size = train.size();
  r.test_size = test.size();

  const auto full = d.stratum_counts();
  const auto in_test = test.stratum_counts();
  for (const auto& s : kSubtypes) {
    if (s.subtype != subtype && in_test[1 + index(s.subtype)] != full[1 + index(s.subtype)]) {
      throw ValidationError("transfer test set is missing instances of " + std::string(s.name));
    }
  }

  auto params = config.forest;
  params.seed = derive_seed(sub_seed, 3);
  r.model = fit_forest(train, params);

  for (const auto& inst : test.instances) {
    const auto pred = r.model.predict(inst.features).label;
    r.confusion.add(pred, inst.label());
    const auto stratum = stratum_of(inst.label_info);
    ++r.by_stratum[stratum].total;
    r.by_stratum[stratum].correct += pred == inst.label();
    if (inst.label_info.subtype) {
      (*inst.label_info.subtype == subtype ? r.held_in : r.unseen).add(pred, inst.label());
    }
  }
  r.metrics = compute_metrics(r.confusion);
  r.size = measure_size(r.model);
  r.background = BackgroundSample::draw(train, config.background_size, derive_seed(sub_seed, 4));
  if (config.latency) {
    std::vector<std::vector<double>> sample;
    for (std::size_t i = 0; i < test.size() && i < 1000; ++i) sample.push_back(test.instances[i].features);
    r.latency = measure_latency(r.model, sample, *config.latency);
  }
  return r;
}

struct TransferReport {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<SubtypeModelResult> results;  // in subtype order
  std::vector<std::size_t> ranking;         // positions into results, best accuracy first
  // feature name -> how many models selected it at rank 1..k
  std::map<std::string, std::vector<std::size_t>> frequency;

  std::size_t rank_of(Subtype s) const {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (results[ranking[i]].subtype == s) return i + 1;
    }
    throw PreconditionError("subtype not in report");
  }

  std::set<std::string> selected_union() const {
    std::set<std::string> u;
    for (const auto& r : results) {
      for (const auto& e : r.selected.entries) u.insert(e.name);
    }
    return u;
  }

  const SubtypeModelResult& result(Subtype s) const {
    for (const auto& r : results) {
      if (r.subtype == s) return r;
    }
    throw PreconditionError("subtype not in report");
  }
};

inline TransferReport compile_transfer_report(std::vector<SubtypeModelResult> results, std::uint64_t seed,
                                              std::size_t k) {
  TransferReport t;
  t.seed = seed;
  t.k = k;
  t.results = std::move(results);
  t.ranking.resize(t.results.size());
  for (std::size_t i = 0; i < t.ranking.size(); ++i) t.ranking[i] = i;
  std::stable_sort(t.ranking.begin(), t.ranking.end(), [&](std::size_t a, std::size_t b) {
    return t.results[a].metrics.accuracy > t.results[b].metrics.accuracy;
  });
  for (const auto& r : t.results) {
    for (std::size_t rank = 0; rank < r.selected.size(); ++rank) {
      auto& counts = t.frequency[r.selected.entries[rank].name];
      counts.resize(k, 0);
      ++counts[rank];
    }
  }
  return t;
}

inline TransferReport run_transfer_suite(const Dataset& d, const ExperimentConfig& config, std::uint64_t seed,
                                         const std::vector<Subtype>& subtypes = {}) {
  std::vector<SubtypeModelResult> results;
  if (subtypes.empty()) {
    for (const auto& s : kSubtypes) results.push_back(run_subtype_experiment(d, s.subtype, config, seed));
  } else {
    for (auto s : subtypes) results.push_back(run_subtype_experiment(d, s, config, seed));
  }
  return compile_transfer_report(std::move(results), seed, config.k);
}

struct FeatureSweepResult {
  Subtype subtype = Subtype::Transponder;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::size_t, double>> points;  // (k, accuracy), k strictly increasing

  double accuracy_at(std::size_t k) const {
    for (const auto& [kk, a] : points) {
      if (kk == k) return a;
    }
    throw PreconditionError("k not in sweep");
  }
};

inline FeatureSweepResult feature_count_sweep(const Dataset& d, Subtype subtype, std::vector<std::size_t> k_list,
                                              const ExperimentConfig& config, std::uint64_t seed) {
  std::sort(k_list.begin(), k_list.end());
  k_list.erase(std::unique(k_list.begin(), k_list.end()), k_list.end());
  if (k_list.empty()) throw PreconditionError("empty k list");
  if (k_list.front() < 1 || k_list.back() > d.n_features()) {
    throw PreconditionError("k values must lie in [1, " + std::to_string(d.n_features()) + "]");
  }
  FeatureSweepResult out{subtype, seed, {}};
  for (auto k : k_list) {
    auto c = config;
    c.k = k;
    c.latency.reset();
    out.points.emplace_back(k, run_subtype_experiment(d, subtype, c, seed).metrics.accuracy);
  }
  return out;
}

}  // namespace memshield
