#include <gtest/gtest.h>

#include <sstream>

#include "memshield/dataset.hpp"
#include "memshield/fixture.hpp"
#include "test_util.hpp"

using namespace memshield;
using memshield::testing::TempDir;

namespace {

// Hand-written: 4 benign rows, 6 malware rows over three subtypes.
constexpr const char* kTenRows =
    "Category,fixture.a,fixture.b,Class\n"
    "Benign,1.0,2.0,Benign\n"
    "Trojan-Zeus-aa,3.5,1,Malware\n"
    "Benign,0,0,Benign\n"
    "Spyware-Transponder-bb,7,8,Malware\n"
    "Spyware-Transponder-cc,7.5,8.25,Malware\n"
    "Benign,1e2,-3,Benign\n"
    "Ransomware-Conti-dd,4,4,Malware\n"
    "Trojan-Zeus-ee,2,2,Malware\n"
    "Benign,5,5,Benign\n"
    "Spyware-Gator-ff,9,9,Malware\n";

Dataset parse(const std::string& text, LoadOptions o = {}) {
  std::istringstream in(text);
  return parse_dataset(in, o, "inline");
}

// Full-schema CSV with one row per entry in `categories`, all features 1.
std::string cic_csv(const std::vector<std::string>& categories) {
  const auto& c = FeatureCatalog::cic_malmem();
  std::ostringstream s;
  s << "Category";
  for (const auto& e : c.entries()) s << ',' << e.name;
  s << ",Class\n";
  for (const auto& cat : categories) {
    s << cat;
    for (std::size_t j = 0; j < c.size(); ++j) s << ",1";
    s << ',' << (cat == "Benign" ? "Benign" : "Malware") << '\n';
  }
  return s.str();
}

}  // namespace

TEST(Load, TenRowFixtureCounts) {
  auto d = parse(kTenRows);
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.n_features(), 2u);
  EXPECT_EQ(d.count(Label::Benign), 4u);
  EXPECT_EQ(d.count(Label::Malware), 6u);
  EXPECT_EQ(d.count(Subtype::Zeus), 2u);
  EXPECT_EQ(d.count(Subtype::Transponder), 2u);
  EXPECT_EQ(d.count(Subtype::Conti), 1u);
  EXPECT_EQ(d.count(Subtype::Gator), 1u);
  EXPECT_DOUBLE_EQ(d.instances[5].features[0], 100.0);
  EXPECT_DOUBLE_EQ(d.instances[4].features[1], 8.25);
  EXPECT_EQ(d.instances[9].source_row, 9u);
}

TEST(Load, EmptyFileIsSchemaError) {
  EXPECT_THROW(parse(""), SchemaError);
}

TEST(Load, MissingClassColumnIsSchemaError) {
  EXPECT_THROW(parse("Category,fixture.a\nBenign,1\n"), SchemaError);
}

TEST(Load, UnknownColumnIsSchemaError) {
  EXPECT_THROW(parse("Category,fixture.a,mystery,Class\nBenign,1,2,Benign\n"), SchemaError);
}

TEST(Load, NonNumericCellReportsRow) {
  try {
    parse("Category,fixture.a,Class\nBenign,1,Benign\nBenign,abc,Benign\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Load, ClassMustAgreeWithCategory) {
  EXPECT_THROW(parse("Category,fixture.a,Class\nBenign,1,Malware\n"), ParseError);
}

TEST(Load, RaggedRowIsParseError) {
  EXPECT_THROW(parse("Category,fixture.a,Class\nBenign,1\n"), ParseError);
}

TEST(Load, CicSchemaCountCheck) {
  const auto csv = cic_csv({"Benign", "Spyware-Transponder-x"});
  EXPECT_THROW(parse(csv), ValidationError);
  LoadOptions lenient;
  lenient.count_check = false;
  auto d = parse(csv, lenient);
  EXPECT_EQ(d.n_features(), 55u);
  EXPECT_EQ(d.size(), 2u);
}

TEST(Load, CicSchemaMissingColumnNamed) {
  auto csv = cic_csv({"Benign"});
  const auto pos = csv.find(",svcscan.nservices");
  csv.erase(pos, std::string(",svcscan.nservices").size());
  // Remove one value from the row so the column count still matches.
  csv.erase(csv.rfind(",1"), 2);
  try {
    LoadOptions lenient;
    lenient.count_check = false;
    parse(csv, lenient);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("svcscan.nservices"), std::string::npos);
  }
}

TEST(Load, TypoHeaderIsNormalized) {
  auto csv = cic_csv({"Benign"});
  csv.replace(csv.find("svcscan.nservices"), std::string("svcscan.nservices").size(), "svcsan.nservices");
  LoadOptions lenient;
  lenient.count_check = false;
  auto d = parse(csv, lenient);
  EXPECT_TRUE(d.catalog.contains("svcscan.nservices"));
}

TEST(Load, CicFixtureReproducesPublishedCounts) {
  auto d = make_cic_fixture(1.0, 3);
  EXPECT_NO_THROW(check_published_counts(d));
  EXPECT_EQ(d.count(Label::Benign), 29298u);
  EXPECT_EQ(d.count(Label::Malware), 29298u);
  EXPECT_EQ(d.count(Subtype::Transponder), 2410u);
  EXPECT_EQ(d.count(Subtype::Reconyc), 1570u);
}

TEST(Load, WriteThenLoadRoundTripsExactly) {
  FixtureSpec spec;
  spec.subtypes = all_subtypes();
  spec.n_per_subtype = 3;
  auto d = make_fixture(spec, 11);
  std::ostringstream out;
  write_csv(d, out);
  auto back = parse(out.str());
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.instances[i].features, d.instances[i].features);
    EXPECT_EQ(back.instances[i].label_info.subtype, d.instances[i].label_info.subtype);
  }
}

TEST(Preprocess, DropsInvariantFeaturesIdempotently) {
  auto d = make_cic_fixture(0.01, 5);
  ASSERT_EQ(d.n_features(), 55u);
  auto p = preprocess(d);
  EXPECT_EQ(p.n_features(), 52u);
  EXPECT_FALSE(p.catalog.contains("handles.nport"));
  EXPECT_FALSE(p.catalog.contains("pslist.nprocs64bit"));
  EXPECT_FALSE(p.catalog.contains("svcscan.interactive_process_services"));
  auto pp = preprocess(p);
  EXPECT_EQ(pp.n_features(), 52u);
  EXPECT_EQ(pp.catalog.names(), p.catalog.names());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(pp.instances[i].features, p.instances[i].features);
}

TEST(Preprocess, DoesNotMutateInput) {
  auto d = make_cic_fixture(0.01, 5);
  const auto before = d.instances.front().features;
  (void)preprocess(d);
  EXPECT_EQ(d.n_features(), 55u);
  EXPECT_EQ(d.instances.front().features, before);
}

namespace {

Dataset one_column(std::vector<double> values) {
  Dataset d{FeatureCatalog({{"fixture.x", "Fixture", false}}), {}, "t"};
  for (std::size_t i = 0; i < values.size(); ++i) {
    d.instances.push_back({{values[i]}, i % 2 ? LabelInfo::malware(Subtype::Zeus) : LabelInfo::benign(), i});
  }
  return d;
}

}  // namespace

TEST(MinMax, ScalesTrainingColumnToUnitInterval) {
  auto pair = fit_apply_minmax(one_column({0, 5, 10}), one_column({12}));
  EXPECT_DOUBLE_EQ(pair.train.instances[0].features[0], 0.0);
  EXPECT_DOUBLE_EQ(pair.train.instances[1].features[0], 0.5);
  EXPECT_DOUBLE_EQ(pair.train.instances[2].features[0], 1.0);
  // Test values are not clipped.
  EXPECT_DOUBLE_EQ(pair.test.instances[0].features[0], 1.2);
  EXPECT_TRUE(pair.params.extrapolated[0]);
}

TEST(MinMax, ConstantColumnMapsToZero) {
  auto pair = fit_apply_minmax(one_column({3, 3, 3}), one_column({7}));
  for (const auto& inst : pair.train.instances) EXPECT_EQ(inst.features[0], 0.0);
  EXPECT_EQ(pair.test.instances[0].features[0], 0.0);
  EXPECT_TRUE(pair.params.degenerate[0]);
}

TEST(MinMax, InvertibleOnTrainingValues) {
  auto d = make_cic_fixture(0.01, 9);
  auto p = ScalerParams::fit(d);
  for (const auto& inst : d.instances) {
    for (std::size_t j = 0; j < d.n_features(); ++j) {
      if (p.degenerate[j]) continue;
      const double t = p.transform(j, inst.features[j]);
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
      EXPECT_NEAR(p.min[j] + t * (p.max[j] - p.min[j]), inst.features[j], 1e-9 * (1 + std::abs(inst.features[j])));
    }
  }
}

TEST(Project, SelectsNamedColumns) {
  auto d = make_cic_fixture(0.01, 2);
  auto p = project(d, std::vector<std::string>{"svcscan.nservices", "pslist.nproc"});
  EXPECT_EQ(p.n_features(), 2u);
  const auto j = *d.catalog.index_of("svcscan.nservices");
  EXPECT_EQ(p.instances[3].features[0], d.instances[3].features[j]);
  EXPECT_THROW(project(d, std::vector<std::string>{"nope"}), SchemaError);
}

TEST(Fixture, SameSeedSameBytes) {
  FixtureSpec spec;
  spec.subtypes = all_subtypes();
  spec.n_per_subtype = 20;
  std::ostringstream a, b, c;
  write_csv(make_fixture(spec, 42), a);
  write_csv(make_fixture(spec, 42), b);
  write_csv(make_fixture(spec, 43), c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Fixture, LoadFromDisk) {
  TempDir dir("dataset");
  memshield::testing::spit(dir / "ten.csv", kTenRows);
  auto d = load_dataset((dir / "ten.csv").string());
  EXPECT_EQ(d.size(), 10u);
  EXPECT_THROW(load_dataset((dir / "missing.csv").string()), IoError);
}
