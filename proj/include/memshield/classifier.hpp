#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "memshield/baselines.hpp"
#include "memshield/dataset.hpp"
#include "memshield/forest.hpp"
#include "memshield/metrics.hpp"
#include "memshield/rng.hpp"
#include "memshield/split.hpp"

namespace memshield {

template <typename M>
concept Predictor = requires(const M& m, std::span<const double> x) {
  { m.predict(x) } -> std::same_as<Prediction>;
};

template <Predictor M>
ConfusionMatrix evaluate(const M& model, const Dataset& test) {
  ConfusionMatrix cm;
  for (const auto& inst : test.instances) cm.add(model.predict(inst.features).label, inst.label());
  return cm;
}

// Declaration order doubles as the tie-break order in comparison tables.
enum class ClassifierKind { RandomForest, DecisionTree, KNeighbors, LogisticRegression, GaussianNB };

inline constexpr ClassifierKind kAllClassifiers[] = {
    ClassifierKind::RandomForest, ClassifierKind::DecisionTree, ClassifierKind::KNeighbors,
    ClassifierKind::LogisticRegression, ClassifierKind::GaussianNB};

inline std::string_view name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::RandomForest: return "RandomForest";
    case ClassifierKind::DecisionTree: return "DecisionTree";
    case ClassifierKind::KNeighbors: return "KNeighbors";
    case ClassifierKind::LogisticRegression: return "LogisticRegression";
    case ClassifierKind::GaussianNB: return "GaussianNB";
  }
  return "?";
}

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::RandomForest;
  ForestParams forest{};
  KnnSpec knn{};
  LogisticRegressionSpec logistic{};
  GaussianNBSpec naive_bayes{};
  // Fit min-max on the training fold and apply it to every input.
  bool scale = true;
};

class TrainedClassifier {
 public:
  using Model = std::variant<RandomForestModel, BaselineModel>;

  TrainedClassifier(std::optional<ScalerParams> scaler, Model model)
      : scaler_(std::move(scaler)), model_(std::move(model)) {}

  Prediction predict(std::span<const double> x) const {
    if (!scaler_) return predict_raw(x);
    if (x.size() != scaler_->size()) throw DimensionError("classifier input dimension mismatch");
    std::vector<double> scaled(x.begin(), x.end());
    scaler_->transform_in_place(scaled);
    return predict_raw(scaled);
  }

  const Model& model() const { return model_; }
  const std::optional<ScalerParams>& scaler() const { return scaler_; }

 private:
  Prediction predict_raw(std::span<const double> x) const {
    return std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, RandomForestModel>) return m.predict(x);
          else return predict_baseline(m, x);
        },
        model_);
  }

  std::optional<ScalerParams> scaler_;
  Model model_;
};

inline TrainedClassifier fit_classifier(const ClassifierSpec& spec, const Dataset& train, std::uint64_t seed) {
  std::optional<ScalerParams> scaler;
  const Dataset* data = &train;
  Dataset scaled;
  if (spec.scale) {
    scaler = ScalerParams::fit(train);
    scaled = scaler->apply(train);
    data = &scaled;
  }
  switch (spec.kind) {
    case ClassifierKind::RandomForest: {
      auto p = spec.forest;
      p.seed = seed;
      return {std::move(scaler), fit_forest(*data, p)};
    }
    case ClassifierKind::DecisionTree:
      return {std::move(scaler), BaselineModel(fit_decision_tree(*data, seed))};
    case ClassifierKind::KNeighbors:
      return {std::move(scaler), BaselineModel(fit_knn(*data, spec.knn))};
    case ClassifierKind::LogisticRegression:
      return {std::move(scaler), BaselineModel(fit_logistic_regression(*data, spec.logistic))};
    case ClassifierKind::GaussianNB:
      return {std::move(scaler), BaselineModel(fit_gaussian_nb(*data, spec.naive_bayes))};
  }
  throw PreconditionError("unknown classifier kind");
}

// Stratified k-fold: fit on k-1 folds, evaluate on the held-out fold. Fold f
// trains with seed derive_seed(seed, f).
inline CVReport cross_validate(const ClassifierSpec& spec, const Dataset& d, std::size_t k, std::uint64_t seed) {
  const auto folds = stratified_kfold(d, k, seed);
  CVReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto model = fit_classifier(spec, folds[f].train, derive_seed(seed, 1000 + f));
    const auto cm = evaluate(model, folds[f].test);
    report.confusion.push_back(cm);
    report.folds.push_back(compute_metrics(cm));
  }
  report.finalize();
  return report;
}

}  // namespace memshield
