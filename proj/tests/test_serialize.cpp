#include <gtest/gtest.h>

#include "memshield/fixture.hpp"
#include "memshield/serialize.hpp"
#include "test_util.hpp"

using namespace memshield;
using memshield::testing::small_forest;

namespace {

RandomForestModel trained(std::uint64_t seed, std::size_t trees = 8) {
  return fit_forest(make_fixture(FixtureSpec{}, seed), small_forest(seed, trees));
}

}  // namespace

TEST(Serialize, RoundTripPreservesPredictionsAndImportance) {
  auto m = trained(1);
  auto back = deserialize(serialize(m));
  EXPECT_EQ(back.trees, m.trees);
  EXPECT_EQ(back.feature_names, m.feature_names);
  auto d = make_fixture(FixtureSpec{}, 99);
  for (const auto& i : d.instances) EXPECT_EQ(back.predict_proba(i.features), m.predict_proba(i.features));
  EXPECT_EQ(mdi_scores(back), mdi_scores(m));
}

TEST(Serialize, EncodingIsDeterministic) {
  EXPECT_EQ(serialize(trained(4)), serialize(trained(4)));
}

TEST(Serialize, HardVoteSurvives) {
  auto d = make_fixture(FixtureSpec{}, 2);
  auto p = small_forest(2, 3);
  p.vote = Vote::Hard;
  auto back = deserialize(serialize(fit_forest(d, p)));
  EXPECT_EQ(back.params.vote, Vote::Hard);
}

TEST(Serialize, SingleLeafModelIsSmall) {
  RandomForestModel m;
  m.feature_names = {"fixture.f00"};
  TreeNode leaf;
  leaf.counts = {4, 1};
  leaf.n_samples = 5;
  m.trees = {DecisionTreeModel{{leaf}, 1}};
  const auto bytes = serialize(m);
  EXPECT_LT(bytes.size(), 200u);
  EXPECT_EQ(deserialize(bytes).trees, m.trees);
}

TEST(Serialize, EveryTruncationIsRejected) {
  const auto bytes = serialize(trained(3, 2));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(deserialize(cut), DecodeError) << n;
  }
}

TEST(Serialize, CorruptionNeverCrashes) {
  const auto bytes = serialize(trained(3, 2));
  Rng rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    auto b = bytes;
    const auto flips = 1 + rng.uniform_index(4);
    for (std::size_t f = 0; f < flips; ++f) b[rng.uniform_index(b.size())] ^= static_cast<std::uint8_t>(1 + rng.uniform_index(255));
    try {
      auto m = deserialize(b);
      // Accepted corruptions must still yield a usable model.
      std::vector<double> x(m.n_features(), 0.0);
      (void)m.predict_proba(x);
    } catch (const DecodeError&) {
    }
  }
}

TEST(Serialize, RejectsBadMagicVersionAndTrailingBytes) {
  auto bytes = serialize(trained(5, 1));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), DecodeError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(deserialize(bad), DecodeError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize(bad), DecodeError);
}

TEST(Serialize, BaselinesRoundTrip) {
  auto d = make_fixture(FixtureSpec{}, 6);
  std::vector<BaselineKind> kinds{DecisionTreeSpec{}, GaussianNBSpec{}, KnnSpec{3}, LogisticRegressionSpec{}};
  for (const auto& k : kinds) {
    auto m = fit_baseline(k, d, 1);
    const auto bytes = serialize(m);
    auto back = deserialize_baseline(bytes);
    EXPECT_EQ(serialize(back), bytes) << baseline_name(k);
    for (std::size_t r = 0; r < 30; ++r) {
      const auto& x = d.instances[r].features;
      EXPECT_EQ(predict_baseline(back, x).probability_malware, predict_baseline(m, x).probability_malware);
    }
  }
  EXPECT_EQ(peek_kind(serialize(fit_baseline(KnnSpec{}, d, 1))), ModelKind::KNeighbors);
  EXPECT_THROW(deserialize(serialize(fit_baseline(GaussianNBSpec{}, d, 1))), DecodeError);
}

TEST(Serialize, FileRoundTrip) {
  memshield::testing::TempDir dir("ser");
  auto m = trained(2, 3);
  const auto bytes = serialize(m);
  memshield::testing::spit(dir / "m.mshd", std::string(bytes.begin(), bytes.end()));
  EXPECT_EQ(read_file_bytes((dir / "m.mshd").string()), bytes);
  EXPECT_THROW(read_file_bytes((dir / "none").string()), IoError);
}
