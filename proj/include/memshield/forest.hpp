#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "memshield/dataset.hpp"
#include "memshield/error.hpp"
#include "memshield/rng.hpp"

namespace memshield {

struct Prediction {
  Label label = Label::Benign;
  double probability_malware = 0.0;
};

// Probability 0.5 exactly is classified as malware.
inline Label label_for(double probability_malware) {
  return probability_malware >= 0.5 ? Label::Malware : Label::Benign;
}

class MaxFeatures {
 public:
  enum class Rule { Sqrt, All, Fixed };

  static MaxFeatures sqrt() { return MaxFeatures(Rule::Sqrt, 0); }
  static MaxFeatures all() { return MaxFeatures(Rule::All, 0); }
  static MaxFeatures fixed(std::size_t k) { return MaxFeatures(Rule::Fixed, k); }

  Rule rule() const { return rule_; }
  std::size_t k() const { return k_; }

  std::size_t resolve(std::size_t n_features) const {
    switch (rule_) {
      case Rule::Sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
      case Rule::All: return n_features;
      case Rule::Fixed: return std::clamp<std::size_t>(k_, 1, n_features);
    }
    return n_features;
  }

  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;

 private:
  MaxFeatures(Rule r, std::size_t k) : rule_(r), k_(k) {}
  Rule rule_ = Rule::Sqrt;
  std::size_t k_ = 0;
};

enum class Vote : std::uint8_t { Soft = 0, Hard = 1 };

struct ForestParams {
  std::size_t n_trees = 100;
  MaxFeatures max_features = MaxFeatures::sqrt();
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  Vote vote = Vote::Soft;
  // Worker threads for training; 0 means hardware concurrency. Never affects results.
  std::size_t n_threads = 1;

  void validate() const {
    if (n_trees < 1) throw PreconditionError("n_trees must be >= 1");
    if (min_samples_split < 2) throw PreconditionError("min_samples_split must be >= 2");
    if (min_samples_leaf < 1) throw PreconditionError("min_samples_leaf must be >= 1");
  }
};

inline double gini_impurity(double n_benign, double n_malware) {
  const double n = n_benign + n_malware;
  if (!(n >= 1.0)) throw PreconditionError("gini impurity of an empty node");
  const double p0 = n_benign / n;
  const double p1 = n_malware / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold routes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double impurity_decrease = 0.0;  // gini(node) minus size-weighted child gini
  std::uint64_t n_samples = 0;
  std::array<std::uint64_t, 2> counts{};  // (benign, malware) over the node's bootstrap sample

  bool is_leaf() const { return feature < 0; }
  double malware_fraction() const {
    const auto n = counts[0] + counts[1];
    return n == 0 ? 0.0 : static_cast<double>(counts[1]) / static_cast<double>(n);
  }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes are stored in pre-order; the root is nodes[0].
struct DecisionTreeModel {
  std::vector<TreeNode> nodes;
  std::size_t n_features = 0;

  std::size_t node_count() const { return nodes.size(); }
  const TreeNode& root() const { return nodes.front(); }

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return i;
  }

  double predict_proba(std::span<const double> x) const { return nodes[leaf_index(x)].malware_fraction(); }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes[i].is_leaf()) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
    }
    return best;
  }

  friend bool operator==(const DecisionTreeModel&, const DecisionTreeModel&) = default;
};

struct RandomForestModel {
  std::vector<DecisionTreeModel> trees;
  ForestParams params;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return feature_names.size(); }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& t : trees) n += t.node_count();
    return n;
  }

  void check_dimension(std::span<const double> x) const {
    if (x.size() != n_features()) {
      throw DimensionError("model expects " + std::to_string(n_features()) + " features, got " +
                           std::to_string(x.size()));
    }
  }

  // Soft vote: mean of per-tree leaf malware fractions. Hard vote: fraction of
  // trees whose own leaf fraction is >= 0.5.
  double predict_proba(std::span<const double> x) const {
    check_dimension(x);
    double sum = 0.0;
    for (const auto& t : trees) {
      const double p = t.predict_proba(x);
      sum += params.vote == Vote::Soft ? p : (p >= 0.5 ? 1.0 : 0.0);
    }
    return sum / static_cast<double>(trees.size());
  }

  Prediction predict(std::span<const double> x) const {
    const double p = predict_proba(x);
    return {label_for(p), p};
  }
};

inline Prediction predict(const RandomForestModel& model, std::span<const double> x) {
  return model.predict(x);
}

// Feature-major copy of a dataset with per-row bootstrap weights.
struct TrainingSet {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> columns;  // columns[f * n_rows + r]
  std::vector<std::uint8_t> labels;

  static TrainingSet from_dataset(const Dataset& d) {
    TrainingSet ts;
    ts.n_rows = d.size();
    ts.n_features = d.n_features();
    ts.columns.resize(ts.n_rows * ts.n_features);
    ts.labels.resize(ts.n_rows);
    for (std::size_t r = 0; r < ts.n_rows; ++r) {
      const auto& inst = d.instances[r];
      if (inst.features.size() != ts.n_features) throw DimensionError("ragged training set");
      for (std::size_t f = 0; f < ts.n_features; ++f) ts.columns[f * ts.n_rows + r] = inst.features[f];
      ts.labels[r] = static_cast<std::uint8_t>(inst.label());
    }
    return ts;
  }

  double value(std::size_t feature, std::size_t row) const { return columns[feature * n_rows + row]; }
};

struct SplitCandidate {
  std::size_t feature_index = 0;
  double threshold = 0.0;
  double weighted_impurity_decrease = 0.0;
};

namespace detail {

// Below this a decrease is rounding noise from a split that does not change
// the class mix.
inline constexpr double kMinDecrease = 1e-12;

// Decreases closer than this are equal; different count pairs can reach the
// same exact value along different rounding paths, and the tie rule must
// still apply to them.
inline constexpr double kTieTolerance = 1e-12;

struct SplitScratch {
  std::vector<std::pair<double, std::uint32_t>> sorted;
};

// Best threshold on one feature, or nullopt when the feature is constant on
// the node or no threshold satisfies min_samples_leaf with positive decrease.
// `constant` reports whether the node's values were all equal.
inline std::optional<SplitCandidate> best_split_on_feature(
    const TrainingSet& ts, std::span<const std::uint32_t> weights, std::span<const std::uint32_t> rows,
    std::size_t feature, std::size_t min_samples_leaf, SplitScratch& scratch, bool& constant) {
  // Second member packs (weight << 1) | label so the scan never touches
  // per-row arrays.
  auto& sorted = scratch.sorted;
  sorted.clear();
  const double* col = ts.columns.data() + feature * ts.n_rows;
  std::uint64_t total[2] = {0, 0};
  for (auto r : rows) {
    sorted.emplace_back(col[r], (weights[r] << 1) | ts.labels[r]);
    total[ts.labels[r]] += weights[r];
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  constant = sorted.front().first == sorted.back().first;
  if (constant) return std::nullopt;

  const std::uint64_t n = total[0] + total[1];
  const double nd = static_cast<double>(n);
  const double parent = gini_impurity(static_cast<double>(total[0]), static_cast<double>(total[1]));
  std::uint64_t left[2] = {0, 0};
  std::optional<SplitCandidate> best;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const auto packed = sorted[i].second;
    left[packed & 1u] += packed >> 1;
    if (!(sorted[i].first < sorted[i + 1].first)) continue;
    const std::uint64_t nl = left[0] + left[1];
    const std::uint64_t nr = n - nl;
    if (nl < min_samples_leaf || nr < min_samples_leaf) continue;
    const double gl = gini_impurity(static_cast<double>(left[0]), static_cast<double>(left[1]));
    const double gr = gini_impurity(static_cast<double>(total[0] - left[0]),
                                    static_cast<double>(total[1] - left[1]));
    const double decrease =
        parent - (static_cast<double>(nl) * gl + static_cast<double>(nr) * gr) / nd;
    if (decrease > kMinDecrease && (!best || decrease > best->weighted_impurity_decrease + kTieTolerance)) {
      const double lo = sorted[i].first;
      const double hi = sorted[i + 1].first;
      double mid = lo + (hi - lo) / 2.0;
      if (!(mid < hi)) mid = lo;
      best = SplitCandidate{feature, mid, decrease};
    }
  }
  return best;
}

inline bool better(const SplitCandidate& a, const std::optional<SplitCandidate>& b) {
  if (!b) return true;
  if (std::abs(a.weighted_impurity_decrease - b->weighted_impurity_decrease) > kTieTolerance) {
    return a.weighted_impurity_decrease > b->weighted_impurity_decrease;
  }
  if (a.feature_index != b->feature_index) return a.feature_index < b->feature_index;
  return a.threshold < b->threshold;
}

}  // namespace detail

// Exhaustive midpoint search over the given features. Ties go to the lower
// feature index, then the smaller threshold.
inline std::optional<SplitCandidate> find_best_split(const TrainingSet& ts,
                                                     std::span<const std::uint32_t> weights,
                                                     std::span<const std::uint32_t> rows,
                                                     std::span<const std::size_t> features,
                                                     std::size_t min_samples_leaf = 1) {
  if (rows.empty() || features.empty()) return std::nullopt;
  detail::SplitScratch scratch;
  std::optional<SplitCandidate> best;
  for (auto f : features) {
    bool constant = false;
    auto c = detail::best_split_on_feature(ts, weights, rows, f, min_samples_leaf, scratch, constant);
    if (c && detail::better(*c, best)) best = c;
  }
  return best;
}

// Unit-weight convenience over every row of a dataset.
inline std::optional<SplitCandidate> find_best_split(const Dataset& d,
                                                     std::span<const std::size_t> features,
                                                     std::size_t min_samples_leaf = 1) {
  const auto ts = TrainingSet::from_dataset(d);
  std::vector<std::uint32_t> weights(ts.n_rows, 1), rows(ts.n_rows);
  for (std::uint32_t r = 0; r < rows.size(); ++r) rows[r] = r;
  return find_best_split(ts, weights, rows, features, min_samples_leaf);
}

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const TrainingSet& ts, const ForestParams& params, std::uint64_t tree_seed)
      : ts_(ts), params_(params), rng_(tree_seed), weights_(ts.n_rows, 0) {
    if (params.bootstrap) {
      for (std::size_t i = 0; i < ts.n_rows; ++i) ++weights_[rng_.uniform_index(ts.n_rows)];
    } else {
      std::fill(weights_.begin(), weights_.end(), 1u);
    }
    for (std::uint32_t r = 0; r < ts.n_rows; ++r) {
      if (weights_[r] > 0) rows_.push_back(r);
    }
    pool_.resize(ts.n_features);
    for (std::size_t f = 0; f < pool_.size(); ++f) pool_[f] = f;
    m_ = params.max_features.resolve(ts.n_features);
  }

  DecisionTreeModel grow() {
    DecisionTreeModel tree;
    tree.n_features = ts_.n_features;
    grow_node(0, rows_.size(), 0);
    tree.nodes = std::move(nodes_);
    return tree;
  }

 private:
  std::uint32_t grow_node(std::size_t begin, std::size_t end, std::size_t depth) {
    TreeNode node;
    for (std::size_t i = begin; i < end; ++i) node.counts[ts_.labels[rows_[i]]] += weights_[rows_[i]];
    node.n_samples = node.counts[0] + node.counts[1];
    const auto idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(node);

    const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
    if (pure || node.n_samples < params_.min_samples_split ||
        (params_.max_depth && depth >= *params_.max_depth) ||
        node.n_samples < 2 * params_.min_samples_leaf) {
      return idx;
    }
    const auto split = choose(std::span(rows_).subspan(begin, end - begin));
    if (!split) return idx;

    const auto f = split->feature_index;
    const auto mid_it = std::stable_partition(
        rows_.begin() + static_cast<std::ptrdiff_t>(begin), rows_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::uint32_t r) { return ts_.value(f, r) <= split->threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());

    nodes_[idx].feature = static_cast<std::int32_t>(f);
    nodes_[idx].threshold = split->threshold;
    nodes_[idx].impurity_decrease = split->weighted_impurity_decrease;
    const auto l = grow_node(begin, mid, depth + 1);
    nodes_[idx].left = l;
    const auto r = grow_node(mid, end, depth + 1);
    nodes_[idx].right = r;
    return idx;
  }

  // Features are drawn without replacement until m_ non-constant ones have
  // been evaluated; constant features do not use up the budget.
  std::optional<SplitCandidate> choose(std::span<const std::uint32_t> rows) {
    std::optional<SplitCandidate> best;
    std::size_t evaluated = 0;
    for (std::size_t i = 0; i < pool_.size() && evaluated < m_; ++i) {
      const std::size_t j = i + rng_.uniform_index(pool_.size() - i);
      std::swap(pool_[i], pool_[j]);
      bool constant = false;
      auto c = best_split_on_feature(ts_, weights_, rows, pool_[i], params_.min_samples_leaf, scratch_,
                                     constant);
      if (constant) continue;
      ++evaluated;
      if (c && better(*c, best)) best = c;
    }
    return best;
  }

  const TrainingSet& ts_;
  const ForestParams& params_;
  Rng rng_;
  std::vector<std::uint32_t> weights_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::size_t> pool_;
  std::size_t m_ = 1;
  std::vector<TreeNode> nodes_;
  SplitScratch scratch_;
};

}  // namespace detail

inline DecisionTreeModel fit_tree(const TrainingSet& ts, const ForestParams& params, std::uint64_t tree_seed) {
  params.validate();
  if (ts.n_rows == 0) throw PreconditionError("cannot fit a tree on an empty training set");
  return detail::TreeGrower(ts, params, tree_seed).grow();
}

inline DecisionTreeModel fit_tree(const Dataset& train, const ForestParams& params, std::uint64_t tree_seed) {
  return fit_tree(TrainingSet::from_dataset(train), params, tree_seed);
}

// Seed of tree i. Depends only on (params.seed, i) so any worker count and
// scheduling order yields the same forest.
inline std::uint64_t tree_seed(const ForestParams& params, std::size_t i) {
  return derive_seed(params.seed, i);
}

inline RandomForestModel fit_forest(const Dataset& train, const ForestParams& params) {
  params.validate();
  if (train.empty()) throw PreconditionError("cannot fit a forest on an empty training set");
  const auto ts = TrainingSet::from_dataset(train);
  RandomForestModel model{std::vector<DecisionTreeModel>(params.n_trees), params, train.catalog.names()};

  std::size_t workers = params.n_threads == 0 ? std::thread::hardware_concurrency() : params.n_threads;
  workers = std::clamp<std::size_t>(workers, 1, params.n_trees);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < params.n_trees; i = next++) {
      model.trees[i] = fit_tree(ts, params, tree_seed(params, i));
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return model;
}

struct FeatureScore {
  std::string name;
  std::size_t index = 0;
  double score = 0.0;
};

struct ImportanceRanking {
  std::vector<FeatureScore> entries;  // non-increasing score, ties by lower index

  std::size_t size() const { return entries.size(); }

  ImportanceRanking top(std::size_t k) const {
    if (k > entries.size()) throw PreconditionError("requested more features than ranked");
    return {std::vector<FeatureScore>(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k))};
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.name);
    return out;
  }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (const auto& e : entries) out.push_back(e.index);
    return out;
  }

  static ImportanceRanking from_scores(const std::vector<std::string>& names, std::vector<double> scores) {
    ImportanceRanking r;
    for (std::size_t i = 0; i < scores.size(); ++i) r.entries.push_back({names[i], i, scores[i]});
    std::stable_sort(r.entries.begin(), r.entries.end(),
                     [](const FeatureScore& a, const FeatureScore& b) { return a.score > b.score; });
    return r;
  }
};

// Mean decrease in impurity: per tree, sum (n_node / n_root) * decrease over
// the nodes splitting on each feature; average across trees and normalise.
inline std::vector<double> mdi_scores(const RandomForestModel& model) {
  std::vector<double> scores(model.n_features(), 0.0);
  bool any_split = false;
  for (const auto& tree : model.trees) {
    const double n_root = static_cast<double>(tree.root().n_samples);
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      any_split = true;
      scores[static_cast<std::size_t>(node.feature)] +=
          static_cast<double>(node.n_samples) / n_root * node.impurity_decrease;
    }
  }
  if (!any_split) throw PreconditionError("forest has no splits; importance is undefined");
  double total = 0.0;
  for (auto& s : scores) {
    s /= static_cast<double>(model.trees.size());
    total += s;
  }
  for (auto& s : scores) s /= total;
  return scores;
}

inline ImportanceRanking mdi_importance(const RandomForestModel& model) {
  return ImportanceRanking::from_scores(model.feature_names, mdi_scores(model));
}

// Mean decrease in accuracy when a feature column is shuffled, averaged over
// repeats; negative means are clipped to zero before normalising.
inline ImportanceRanking permutation_importance(const RandomForestModel& model, const Dataset& data,
                                                std::uint64_t seed, std::size_t repeats = 5) {
  if (data.empty()) throw PreconditionError("permutation importance needs data");
  auto accuracy = [&](const std::vector<std::vector<double>>& rows) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) ok += model.predict(rows[i]).label == data.instances[i].label();
    return static_cast<double>(ok) / static_cast<double>(rows.size());
  };
  std::vector<std::vector<double>> rows;
  for (const auto& inst : data.instances) rows.push_back(inst.features);
  const double base = accuracy(rows);
  std::vector<double> scores(model.n_features(), 0.0);
  for (std::size_t f = 0; f < model.n_features(); ++f) {
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      Rng rng(derive_seed(seed, f, rep));
      std::vector<double> col;
      for (const auto& r : rows) col.push_back(r[f]);
      rng.shuffle(std::span(col));
      auto shuffled = rows;
      for (std::size_t i = 0; i < rows.size(); ++i) shuffled[i][f] = col[i];
      scores[f] += base - accuracy(shuffled);
    }
    scores[f] = std::max(0.0, scores[f] / static_cast<double>(repeats));
  }
  double total = 0.0;
  for (double s : scores) total += s;
  if (total > 0.0) {
    for (auto& s : scores) s /= total;
  }
  return ImportanceRanking::from_scores(model.feature_names, std::move(scores));
}

}  // namespace memshield
