#include <gtest/gtest.h>

#include <set>

#include "memshield/catalog.hpp"

using namespace memshield;

TEST(Category, ParsesSubtypeAndType) {
  auto a = parse_category("Ransomware-Ako-ab4afa5c");
  EXPECT_EQ(a.label, Label::Malware);
  EXPECT_EQ(a.malware_type, MalwareType::Ransomware);
  EXPECT_EQ(a.subtype, Subtype::Ako);

  auto b = parse_category("Spyware-Transponder-0b1c2d");
  EXPECT_EQ(b.subtype, Subtype::Transponder);
  EXPECT_EQ(b.malware_type, MalwareType::Spyware);

  auto c = parse_category("Trojan-Zeus-1");
  EXPECT_EQ(c.subtype, Subtype::Zeus);
  EXPECT_EQ(c.malware_type, MalwareType::TrojanHorse);
}

TEST(Category, BenignHasNoSubtype) {
  auto b = parse_category("Benign");
  EXPECT_EQ(b.label, Label::Benign);
  EXPECT_FALSE(b.subtype.has_value());
  EXPECT_FALSE(b.malware_type.has_value());
  EXPECT_EQ(parse_category("  benign ").label, Label::Benign);
}

TEST(Category, AliasesAndCase) {
  EXPECT_EQ(parse_category("Spyware-CWS-x").subtype, Subtype::CoolWebSearch);
  EXPECT_EQ(parse_category("spyware-180solutions-x").subtype, Subtype::Solutions180);
  EXPECT_EQ(parse_category("RANSOMWARE-Maze-x").subtype, Subtype::MAZE);
}

TEST(Category, RejectsMalformed) {
  EXPECT_THROW(parse_category(""), ParseError);
  EXPECT_THROW(parse_category("Trojan"), ParseError);
  EXPECT_THROW(parse_category("Worm-Zeus-1"), ParseError);
  EXPECT_THROW(parse_category("Trojan-Nosuch-1"), ParseError);
  // Zeus is a trojan, not ransomware.
  EXPECT_THROW(parse_category("Ransomware-Zeus-1"), ParseError);
}

TEST(Catalog, PublishedCountsSumToClassSize) {
  std::size_t sum = 0;
  std::set<std::string_view> names;
  for (const auto& s : kSubtypes) {
    sum += s.count;
    names.insert(s.name);
  }
  EXPECT_EQ(sum, kClassSize);
  EXPECT_EQ(names.size(), kSubtypeCount);
  EXPECT_EQ(info(Subtype::Transponder).count, 2410u);
  EXPECT_EQ(info(Subtype::Reconyc).count, 1570u);
  EXPECT_EQ(info(Subtype::TIBS).count, 1410u);
}

TEST(Catalog, TypeGroupsHaveFiveSubtypesEach) {
  std::size_t per[3] = {0, 0, 0};
  for (const auto& s : kSubtypes) ++per[static_cast<int>(s.type)];
  EXPECT_EQ(per[0], 5u);
  EXPECT_EQ(per[1], 5u);
  EXPECT_EQ(per[2], 5u);
}

TEST(Catalog, SubtypeLookupIsCaseInsensitive) {
  EXPECT_EQ(subtype_from_name("transponder"), Subtype::Transponder);
  EXPECT_EQ(subtype_from_name("MAZE"), Subtype::MAZE);
  EXPECT_FALSE(subtype_from_name("NotASubtype").has_value());
}

TEST(FeatureCatalog, HasFiftyFiveFeaturesAndThreeInvariant) {
  const auto& c = FeatureCatalog::cic_malmem();
  EXPECT_EQ(c.size(), 55u);
  std::size_t invariant = 0;
  for (const auto& e : c.entries()) invariant += e.invariant;
  EXPECT_EQ(invariant, 3u);
  ASSERT_TRUE(c.index_of("pslist.nprocs64bit"));
  EXPECT_TRUE(c[*c.index_of("pslist.nprocs64bit")].invariant);
  EXPECT_TRUE(c[*c.index_of("handles.nport")].invariant);
  EXPECT_TRUE(c[*c.index_of("svcscan.interactive_process_services")].invariant);
  EXPECT_FALSE(c[*c.index_of("svcscan.nservices")].invariant);
}

TEST(FeatureCatalog, NormalizesKnownTypos) {
  EXPECT_EQ(normalize_feature_name("svcsan.nservices"), "svcscan.nservices");
  EXPECT_EQ(normalize_feature_name(" svcs.scan.kernel_drivers "), "svcscan.kernel_drivers");
  EXPECT_EQ(normalize_feature_name("pslist.nproc"), "pslist.nproc");
}

TEST(FeatureCatalog, DuplicateNamesRejected) {
  EXPECT_THROW(FeatureCatalog({{"a", "x", false}, {"a", "y", false}}), SchemaError);
}
