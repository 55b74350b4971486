#include <gtest/gtest.h>

#include <cmath>

#include "memshield/baselines.hpp"
#include "memshield/classifier.hpp"
#include "memshield/fixture.hpp"
#include "test_util.hpp"

using namespace memshield;
using memshield::testing::separable_fixture;

namespace {

Dataset points(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
  std::vector<FeatureEntry> e;
  for (std::size_t j = 0; j < rows.front().size(); ++j) e.push_back({"fixture.f" + std::to_string(j), "Fixture", false});
  Dataset d{FeatureCatalog(e), {}, "t"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.instances.push_back({rows[i], labels[i] ? LabelInfo::malware(Subtype::Zeus) : LabelInfo::benign(), i});
  }
  return d;
}

}  // namespace

TEST(GaussianNB, SeparatesWellSeparatedClusters) {
  auto d = separable_fixture(3);
  auto s = stratified_split(d, 0.3, 1);
  auto m = fit_gaussian_nb(s.train, {});
  EXPECT_EQ(evaluate(m, s.test).fp + evaluate(m, s.test).fn, 0u);
}

TEST(GaussianNB, SymmetricClassesGiveOneHalfAtMidpoint) {
  // Both classes: variance 1 around -1 and +1, equal priors.
  auto d = points({{-2}, {0}, {0}, {2}}, {0, 0, 1, 1});
  auto m = fit_gaussian_nb(d, {});
  EXPECT_NEAR(m.predict(std::vector<double>{1.0 - 1.0}).probability_malware, 0.5, 1e-12);
  EXPECT_GT(m.predict(std::vector<double>{0.5}).probability_malware, 0.5);
}

TEST(GaussianNB, ZeroVarianceFeatureStaysFinite) {
  auto d = points({{1, 5}, {2, 5}, {8, 5}, {9, 5}}, {0, 0, 1, 1});
  auto m = fit_gaussian_nb(d, {});
  for (double x : {-1e3, 0.0, 5.0, 1e3}) {
    const double p = m.predict(std::vector<double>{x, 5.0}).probability_malware;
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(GaussianNB, SingleLabelIsError) {
  EXPECT_THROW(fit_gaussian_nb(points({{1}, {2}}, {1, 1}), {}), PreconditionError);
}

TEST(Knn, OneNeighbourReproducesTrainingLabels) {
  auto d = make_fixture(FixtureSpec{}, 4);
  auto m = fit_knn(d, {1});
  for (const auto& i : d.instances) EXPECT_EQ(m.predict(i.features).label, i.label());
}

TEST(Knn, ThreeNeighbourVote) {
  auto d = points({{0}, {1}, {2}, {10}}, {1, 1, 0, 0});
  auto m = fit_knn(d, {3});
  const auto p = m.predict(std::vector<double>{0.5});
  EXPECT_DOUBLE_EQ(p.probability_malware, 2.0 / 3.0);
  EXPECT_EQ(p.label, Label::Malware);
}

TEST(Knn, EquidistantTieUsesLowerSourceRow) {
  auto d = points({{-1}, {1}}, {1, 0});
  EXPECT_EQ(fit_knn(d, {1}).predict(std::vector<double>{0.0}).label, Label::Malware);
  d.instances[0].source_row = 5;
  EXPECT_EQ(fit_knn(d, {1}).predict(std::vector<double>{0.0}).label, Label::Benign);
}

TEST(Knn, KLargerThanTrainingSetUsesAllRows) {
  auto d = points({{0}, {1}, {2}}, {1, 0, 0});
  EXPECT_DOUBLE_EQ(fit_knn(d, {10}).predict(std::vector<double>{0.0}).probability_malware, 1.0 / 3.0);
}

TEST(LogisticRegression, ZeroIterationModelPredictsHalf) {
  LogisticRegressionModel m;
  m.feature_names = {"a", "b"};
  m.weights = {0.0, 0.0};
  const auto p = m.predict(std::vector<double>{3.0, -4.0});
  EXPECT_DOUBLE_EQ(p.probability_malware, 0.5);
  EXPECT_EQ(p.label, Label::Malware);
}

TEST(LogisticRegression, LossNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto d = make_fixture(FixtureSpec{}, seed);
    LogisticRegressionSpec spec;
    spec.max_iter = 300;
    spec.learning_rate = 5.0;  // deliberately large; backtracking must cope
    auto m = fit_logistic_regression(d, spec);
    ASSERT_GE(m.loss_history.size(), 2u);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i) {
      EXPECT_LE(m.loss_history[i], m.loss_history[i - 1]) << "seed " << seed << " step " << i;
    }
    EXPECT_NEAR(m.loss_history.front(), std::log(2.0), 1e-12);
  }
}

TEST(LogisticRegression, LearnsSeparableFixture) {
  auto d = separable_fixture(8);
  auto s = stratified_split(d, 0.3, 2);
  ClassifierSpec spec;
  spec.kind = ClassifierKind::LogisticRegression;
  auto m = fit_classifier(spec, s.train, 1);
  const auto cm = evaluate(m, s.test);
  EXPECT_EQ(cm.fp + cm.fn, 0u);
}

TEST(LogisticRegression, SingleLabelIsError) {
  EXPECT_THROW(fit_logistic_regression(points({{1}, {2}}, {0, 0}), {}), PreconditionError);
}

TEST(DecisionTree, FitsTrainingSetExactly) {
  auto d = make_fixture(FixtureSpec{}, 5);
  auto m = fit_decision_tree(d, 1);
  EXPECT_EQ(m.forest.trees.size(), 1u);
  for (const auto& i : d.instances) EXPECT_EQ(m.predict(i.features).label, i.label());
}

TEST(Baselines, DimensionChecked) {
  auto d = make_fixture(FixtureSpec{}, 5);
  std::vector<double> wrong(2, 0.0);
  for (const BaselineKind& k : {BaselineKind{DecisionTreeSpec{}}, BaselineKind{GaussianNBSpec{}},
                                BaselineKind{KnnSpec{}}, BaselineKind{LogisticRegressionSpec{}}}) {
    auto m = fit_baseline(k, d, 1);
    EXPECT_THROW(predict_baseline(m, wrong), DimensionError) << baseline_name(k);
  }
}

TEST(Baselines, EveryClassifierBeatsChanceOnSeparableData) {
  auto d = separable_fixture(21);
  auto s = stratified_split(d, 0.25, 3);
  for (auto kind : kAllClassifiers) {
    ClassifierSpec spec;
    spec.kind = kind;
    spec.forest.n_trees = 10;
    auto m = fit_classifier(spec, s.train, 4);
    const auto cm = evaluate(m, s.test);
    EXPECT_GE(static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total()), 0.99) << name(kind);
  }
}
