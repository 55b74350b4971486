#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "memshield/dataset.hpp"
#include "memshield/forest.hpp"

namespace memshield {

struct DecisionTreeSpec {};
struct GaussianNBSpec {
  double variance_floor = 1e-9;
};
struct KnnSpec {
  std::size_t k = 5;
};
// Full-batch gradient descent on mean log-loss + (l2/2)|w|^2. The trial step
// at iteration t is learning_rate / (1 + decay * t), halved until the Armijo
// condition holds, so the loss never increases.
struct LogisticRegressionSpec {
  std::size_t max_iter = 1000;
  double learning_rate = 1.0;
  double decay = 0.0;
  double l2 = 0.0;
  double tolerance = 1e-6;  // stop once the gradient norm drops below this
};

using BaselineKind = std::variant<DecisionTreeSpec, GaussianNBSpec, KnnSpec, LogisticRegressionSpec>;

inline std::string_view baseline_name(const BaselineKind& kind) {
  return std::visit(
      [](const auto& k) -> std::string_view {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, DecisionTreeSpec>) return "DecisionTree";
        if constexpr (std::is_same_v<T, GaussianNBSpec>) return "GaussianNB";
        if constexpr (std::is_same_v<T, KnnSpec>) return "KNeighbors";
        return "LogisticRegression";
      },
      kind);
}

namespace detail {

inline void check_dim(std::size_t expected, std::span<const double> x) {
  if (x.size() != expected) {
    throw DimensionError("model expects " + std::to_string(expected) + " features, got " +
                         std::to_string(x.size()));
  }
}

inline void require_both_labels(const Dataset& train, std::string_view who) {
  const auto m = train.count(Label::Malware);
  if (m == 0 || m == train.size()) {
    throw PreconditionError(std::string(who) + " needs both labels in the training set");
  }
}

}  // namespace detail

struct DecisionTreeModelBaseline {
  RandomForestModel forest;  // single tree, no bootstrap, all features

  std::size_t n_features() const { return forest.n_features(); }
  Prediction predict(std::span<const double> x) const { return forest.predict(x); }
};

struct GaussianNBModel {
  std::vector<std::string> feature_names;
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> mean;
  std::array<std::vector<double>, 2> variance;

  std::size_t n_features() const { return feature_names.size(); }

  double log_joint(std::size_t c, std::span<const double> x) const {
    double l = log_prior[c];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - mean[c][j];
      l -= 0.5 * std::log(2.0 * std::numbers::pi * variance[c][j]) + d * d / (2.0 * variance[c][j]);
    }
    return l;
  }

  Prediction predict(std::span<const double> x) const {
    detail::check_dim(n_features(), x);
    const double diff = log_joint(0, x) - log_joint(1, x);
    const double p = 1.0 / (1.0 + std::exp(diff));
    return {label_for(p), p};
  }
};

struct KnnModel {
  std::vector<std::string> feature_names;
  std::size_t k = 5;
  std::vector<double> rows;  // row-major, n_rows x n_features
  std::vector<std::uint8_t> labels;
  std::vector<std::uint64_t> source_rows;

  std::size_t n_features() const { return feature_names.size(); }
  std::size_t n_rows() const { return labels.size(); }

  // Malware fraction among the k nearest training rows (Euclidean); equal
  // distances are broken by lower source row.
  Prediction predict(std::span<const double> x) const {
    detail::check_dim(n_features(), x);
    const auto d = n_features();
    std::vector<std::pair<double, std::size_t>> dist(n_rows());
    for (std::size_t i = 0; i < n_rows(); ++i) {
      const double* r = rows.data() + i * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = r[j] - x[j];
        s += diff * diff;
      }
      dist[i] = {s, i};
    }
    const auto kk = std::min(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return source_rows[a.second] < source_rows[b.second];
                      });
    std::size_t votes = 0;
    for (std::size_t i = 0; i < kk; ++i) votes += labels[dist[i].second];
    const double p = static_cast<double>(votes) / static_cast<double>(kk);
    return {label_for(p), p};
  }
};

struct LogisticRegressionModel {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> loss_history;  // loss before each step, then the final loss
  double final_gradient_norm = 0.0;
  std::size_t iterations = 0;

  std::size_t n_features() const { return feature_names.size(); }

  Prediction predict(std::span<const double> x) const {
    detail::check_dim(n_features(), x);
    double z = bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
    const double p = 1.0 / (1.0 + std::exp(-z));
    return {label_for(p), p};
  }
};

using BaselineModel =
    std::variant<DecisionTreeModelBaseline, GaussianNBModel, KnnModel, LogisticRegressionModel>;

inline DecisionTreeModelBaseline fit_decision_tree(const Dataset& train, std::uint64_t seed) {
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.max_features = MaxFeatures::all();
  p.seed = seed;
  return {fit_forest(train, p)};
}

inline GaussianNBModel fit_gaussian_nb(const Dataset& train, const GaussianNBSpec& spec) {
  detail::require_both_labels(train, "GaussianNB");
  const auto d = train.n_features();
  GaussianNBModel m;
  m.feature_names = train.catalog.names();
  std::array<std::size_t, 2> n{};
  for (std::size_t c = 0; c < 2; ++c) {
    m.mean[c].assign(d, 0.0);
    m.variance[c].assign(d, 0.0);
  }
  for (const auto& inst : train.instances) {
    const auto c = static_cast<std::size_t>(inst.label());
    ++n[c];
    for (std::size_t j = 0; j < d; ++j) m.mean[c][j] += inst.features[j];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (auto& v : m.mean[c]) v /= static_cast<double>(n[c]);
  }
  for (const auto& inst : train.instances) {
    const auto c = static_cast<std::size_t>(inst.label());
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = inst.features[j] - m.mean[c][j];
      m.variance[c][j] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (auto& v : m.variance[c]) v = std::max(v / static_cast<double>(n[c]), spec.variance_floor);
    m.log_prior[c] = std::log(static_cast<double>(n[c]) / static_cast<double>(train.size()));
  }
  return m;
}

inline KnnModel fit_knn(const Dataset& train, const KnnSpec& spec) {
  if (spec.k < 1) throw PreconditionError("k must be >= 1");
  if (train.empty()) throw PreconditionError("KNN needs a non-empty training set");
  KnnModel m;
  m.feature_names = train.catalog.names();
  m.k = spec.k;
  m.rows.reserve(train.size() * train.n_features());
  for (const auto& inst : train.instances) {
    m.rows.insert(m.rows.end(), inst.features.begin(), inst.features.end());
    m.labels.push_back(static_cast<std::uint8_t>(inst.label()));
    m.source_rows.push_back(inst.source_row);
  }
  return m;
}

inline LogisticRegressionModel fit_logistic_regression(const Dataset& train, const LogisticRegressionSpec& spec) {
  if (spec.max_iter < 1) throw PreconditionError("max_iter must be >= 1");
  detail::require_both_labels(train, "LogisticRegression");
  const auto d = train.n_features();
  const auto n = static_cast<double>(train.size());
  LogisticRegressionModel m;
  m.feature_names = train.catalog.names();
  m.weights.assign(d, 0.0);

  std::vector<double> grad(d);
  auto evaluate = [&](bool want_grad) {
    double loss = 0.0, grad_b = 0.0;
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& inst : train.instances) {
      double z = m.bias;
      for (std::size_t j = 0; j < d; ++j) z += m.weights[j] * inst.features[j];
      const double y = inst.label() == Label::Malware ? 1.0 : 0.0;
      // log(1 + e^z) - y z, computed without overflow.
      loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
      if (want_grad) {
        const double r = 1.0 / (1.0 + std::exp(-z)) - y;
        for (std::size_t j = 0; j < d; ++j) grad[j] += r * inst.features[j];
        grad_b += r;
      }
    }
    double w2 = 0.0;
    for (double w : m.weights) w2 += w * w;
    loss = loss / n + 0.5 * spec.l2 * w2;
    double norm2 = 0.0;
    if (want_grad) {
      for (std::size_t j = 0; j < d; ++j) {
        grad[j] = grad[j] / n + spec.l2 * m.weights[j];
        norm2 += grad[j] * grad[j];
      }
      grad_b /= n;
      norm2 += grad_b * grad_b;
    }
    return std::tuple{loss, grad_b, std::sqrt(norm2)};
  };

  for (std::size_t t = 0; t < spec.max_iter; ++t) {
    auto [loss, grad_b, norm] = evaluate(true);
    m.loss_history.push_back(loss);
    m.final_gradient_norm = norm;
    if (norm < spec.tolerance) break;
    const auto w0 = m.weights;
    const double b0 = m.bias;
    const auto g = grad;
    double step = spec.learning_rate / (1.0 + spec.decay * static_cast<double>(t));
    bool accepted = false;
    for (int halving = 0; halving < 50 && !accepted; ++halving, step *= 0.5) {
      for (std::size_t j = 0; j < d; ++j) m.weights[j] = w0[j] - step * g[j];
      m.bias = b0 - step * grad_b;
      accepted = std::get<0>(evaluate(false)) <= loss - 0.5 * step * norm * norm;
    }
    if (!accepted) {
      m.weights = w0;
      m.bias = b0;
      break;
    }
    ++m.iterations;
  }
  auto [loss, grad_b, norm] = evaluate(true);
  m.loss_history.push_back(loss);
  m.final_gradient_norm = norm;
  return m;
}

inline BaselineModel fit_baseline(const BaselineKind& kind, const Dataset& train, std::uint64_t seed) {
  if (train.empty()) throw PreconditionError("cannot fit a baseline on an empty training set");
  return std::visit(
      [&](const auto& k) -> BaselineModel {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, DecisionTreeSpec>) return fit_decision_tree(train, seed);
        if constexpr (std::is_same_v<T, GaussianNBSpec>) return fit_gaussian_nb(train, k);
        if constexpr (std::is_same_v<T, KnnSpec>) return fit_knn(train, k);
        if constexpr (std::is_same_v<T, LogisticRegressionSpec>) return fit_logistic_regression(train, k);
      },
      kind);
}

inline Prediction predict_baseline(const BaselineModel& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

}  // namespace memshield
