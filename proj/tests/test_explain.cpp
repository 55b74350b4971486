#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "memshield/explain.hpp"
#include "memshield/fixture.hpp"
#include "test_util.hpp"

using namespace memshield;
using memshield::testing::small_forest;

namespace {

// Permutation-average oracle: phi_j is the mean, over all k! orderings, of the
// change in the background-averaged output when j joins the features before it.
template <typename M>
std::vector<double> permutation_oracle(const M& model, const std::vector<double>& x, const BackgroundSample& bg) {
  const std::size_t k = x.size();
  auto v = [&](const std::vector<bool>& present) {
    double s = 0.0;
    for (const auto& row : bg.rows) {
      std::vector<double> z(k);
      for (std::size_t j = 0; j < k; ++j) z[j] = present[j] ? x[j] : row[j];
      s += model.predict_proba(z);
    }
    return s / static_cast<double>(bg.rows.size());
  };
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(k, 0.0);
  double perms = 0;
  do {
    std::vector<bool> present(k, false);
    double before = v(present);
    for (auto j : order) {
      present[j] = true;
      const double after = v(present);
      phi[j] += after - before;
      before = after;
    }
    perms += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= perms;
  return phi;
}

struct Case {
  RandomForestModel model;
  Dataset data;
};

Case random_case(std::uint64_t seed, std::size_t k) {
  FixtureSpec spec;
  spec.n_features = k;
  spec.n_benign = spec.n_per_subtype = 40;
  spec.separation = 1.5;
  auto d = make_fixture(spec, seed);
  auto p = small_forest(seed, 3);
  p.max_depth = 4;
  return {fit_forest(d, p), std::move(d)};
}

// Linear "model" for exercising attribution without trees.
struct LinearModel {
  std::vector<double> w;
  double b = 0.0;
  std::size_t n_features() const { return w.size(); }
  double predict_proba(std::span<const double> x) const {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
    return z;
  }
};

}  // namespace

TEST(Shapley, EfficiencyOnForests) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = random_case(seed, 5);
    auto bg = BackgroundSample::draw(c.data, 20, seed);
    for (std::size_t i = 0; i < 5; ++i) {
      auto a = exact_shapley(c.model, c.data.instances[i].features, bg, i);
      EXPECT_LE(std::abs(a.efficiency_gap()), 1e-9);
    }
  }
}

TEST(Shapley, MatchesPermutationOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t k = 1 + seed % 3;
    auto c = random_case(seed, k);
    auto bg = BackgroundSample::draw(c.data, 10, seed + 1);
    const auto& x = c.data.instances[seed % c.data.size()].features;
    auto a = exact_shapley(c.model, x, bg);
    auto want = permutation_oracle(c.model, x, bg);
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(a.phi[j], want[j], 1e-12);
  }
}

TEST(Shapley, StumpAttributesEverythingToSplitFeature) {
  // x0 <= 0 -> benign leaf, x0 > 0 -> malware leaf; feature 1 unused.
  RandomForestModel m;
  m.feature_names = {"fixture.a", "fixture.b"};
  TreeNode root, lo, hi;
  root.feature = 0;
  root.threshold = 0.0;
  root.left = 1;
  root.right = 2;
  lo.counts = {5, 0};
  hi.counts = {0, 5};
  m.trees = {DecisionTreeModel{{root, lo, hi}, 2}};
  BackgroundSample bg{{{-1.0, 3.0}, {-2.0, -4.0}}};
  auto a = exact_shapley(m, std::vector<double>{1.0, 100.0}, bg);
  EXPECT_EQ(a.base_value, 0.0);
  EXPECT_EQ(a.prediction, 1.0);
  EXPECT_EQ(a.phi[0], 1.0);
  EXPECT_EQ(a.phi[1], 0.0);
}

TEST(Shapley, UnusedFeaturesGetExactlyZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = random_case(seed, 6);
    std::set<std::size_t> used;
    for (const auto& t : c.model.trees) {
      for (const auto& n : t.nodes) {
        if (!n.is_leaf()) used.insert(static_cast<std::size_t>(n.feature));
      }
    }
    auto bg = BackgroundSample::draw(c.data, 8, seed);
    auto a = exact_shapley(c.model, c.data.instances[0].features, bg);
    for (std::size_t j = 0; j < 6; ++j) {
      if (!used.count(j)) {
        EXPECT_EQ(a.phi[j], 0.0) << "seed " << seed << " feature " << j;
      }
    }
  }
}

TEST(Shapley, LinearInModelOutput) {
  // phi of a two-tree soft-vote forest is the mean of the single-tree phis.
  auto c = random_case(5, 4);
  auto bg = BackgroundSample::draw(c.data, 15, 2);
  const auto& x = c.data.instances[7].features;
  RandomForestModel pair = c.model;
  pair.trees.resize(2);
  RandomForestModel t0 = pair, t1 = pair;
  t0.trees = {pair.trees[0]};
  t1.trees = {pair.trees[1]};
  auto a = exact_shapley(pair, x, bg);
  auto a0 = exact_shapley(t0, x, bg);
  auto a1 = exact_shapley(t1, x, bg);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.phi[j], 0.5 * (a0.phi[j] + a1.phi[j]), 1e-12);
}

TEST(Shapley, LinearModelClosedForm) {
  // For a linear model phi_j = w_j (x_j - mean background x_j).
  LinearModel m{{2.0, -1.0, 0.5}, 0.25};
  BackgroundSample bg{{{0, 0, 0}, {2, 4, 6}}};
  std::vector<double> x{3, 1, -2};
  auto a = exact_shapley(m, x, bg);
  EXPECT_NEAR(a.phi[0], 2.0 * (3 - 1), 1e-12);
  EXPECT_NEAR(a.phi[1], -1.0 * (1 - 2), 1e-12);
  EXPECT_NEAR(a.phi[2], 0.5 * (-2 - 3), 1e-12);
}

TEST(Shapley, TooManyFeaturesRejected) {
  LinearModel m{std::vector<double>(21, 1.0), 0.0};
  BackgroundSample bg{{std::vector<double>(21, 0.0)}};
  EXPECT_THROW(exact_shapley(m, std::vector<double>(21, 1.0), bg), PreconditionError);
}

TEST(Shapley, DimensionMismatchRejected) {
  LinearModel m{{1, 1}, 0};
  BackgroundSample bg{{{0, 0}}};
  EXPECT_THROW(exact_shapley(m, std::vector<double>{1.0}, bg), DimensionError);
  EXPECT_THROW(exact_shapley(m, std::vector<double>{1, 1}, BackgroundSample{{{0, 0, 0}}}), DimensionError);
}

TEST(Background, DrawWithoutReplacement) {
  auto d = make_fixture(FixtureSpec{}, 1);
  auto bg = BackgroundSample::draw(d, 100, 3);
  EXPECT_EQ(bg.size(), 100u);
  std::set<std::vector<double>> uniq(bg.rows.begin(), bg.rows.end());
  EXPECT_EQ(uniq.size(), 100u);
  EXPECT_EQ(BackgroundSample::draw(d, 1000, 3).size(), d.size());
  EXPECT_EQ(BackgroundSample::draw(d, 100, 3).rows, bg.rows);
  EXPECT_THROW(BackgroundSample::draw(d, 0, 3), PreconditionError);
}

TEST(Force, SegmentsChainFromBaseToPrediction) {
  Attribution a;
  a.base_value = 0.5;
  a.phi = {-0.1, 0.3};
  a.prediction = 0.7;
  a.instance = {1.0, 2.0};
  auto p = force_plot_data(a, {"x", "y"});
  ASSERT_EQ(p.segments.size(), 2u);
  EXPECT_EQ(p.segments[0].feature, "y");
  EXPECT_DOUBLE_EQ(p.segments[0].start, 0.5);
  EXPECT_DOUBLE_EQ(p.segments[0].end, 0.8);
  EXPECT_DOUBLE_EQ(p.segments[1].start, 0.8);
  EXPECT_DOUBLE_EQ(p.segments[1].end, 0.7);
  EXPECT_DOUBLE_EQ(p.segments.back().end, p.prediction);
}

namespace {

std::size_t count(const std::string& s, const std::string& pattern) {
  std::regex re(pattern);
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

}  // namespace

TEST(Svg, BeeswarmHasOnePointPerAttribution) {
  auto c = random_case(3, 5);
  auto bg = BackgroundSample::draw(c.data, 10, 1);
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> ids;
  // 100 points even when the fixture is smaller; repeats are fine here.
  for (std::size_t i = 0; i < 100; ++i) {
    xs.push_back(c.data.instances[i % c.data.size()].features);
    ids.push_back(i);
  }
  auto g = beeswarm_data(c.model, xs, ids, bg, c.model.feature_names);
  const auto svg = render_svg(g, "seed=3");
  EXPECT_EQ(count(svg, "<circle "), 500u);
  EXPECT_EQ(count(svg, "class=\"row-label\""), 5u);
  EXPECT_EQ(svg, render_svg(beeswarm_data(c.model, xs, ids, bg, c.model.feature_names), "seed=3"));
  for (std::size_t r = 1; r < g.order.size(); ++r) {
    EXPECT_GE(g.mean_abs_phi[g.order[r - 1]], g.mean_abs_phi[g.order[r]]);
  }
  std::ostringstream csv;
  write_attribution_csv(g, csv);
  EXPECT_EQ(count(csv.str(), "\n"), 501u);
}

TEST(Svg, ForcePlotArrowsAndMarkers) {
  auto c = random_case(4, 5);
  auto bg = BackgroundSample::draw(c.data, 10, 1);
  auto a = exact_shapley(c.model, c.data.instances[0].features, bg);
  const auto svg = render_svg(force_plot_data(a, c.model.feature_names));
  EXPECT_EQ(count(svg, "<polygon class=\"arrow"), 5u);
  EXPECT_EQ(count(svg, "class=\"marker base\""), 1u);
  EXPECT_EQ(count(svg, "class=\"marker prediction\""), 1u);
}

TEST(Svg, MetadataIsEscaped) {
  auto c = random_case(4, 2);
  auto bg = BackgroundSample::draw(c.data, 4, 1);
  auto a = exact_shapley(c.model, c.data.instances[0].features, bg);
  const auto svg = render_svg(force_plot_data(a, c.model.feature_names), "a<b&c");
  EXPECT_NE(svg.find("a&lt;b&amp;c"), std::string::npos);
}
