#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memshield/error.hpp"

namespace memshield {

enum class Label : std::uint8_t { Benign = 0, Malware = 1 };

enum class MalwareType : std::uint8_t { TrojanHorse, Spyware, Ransomware };

// The fifteen malware subtypes of CIC-MalMem-2022, in the dataset's
// documentation order (Trojan horses, spyware, ransomware).
enum class Subtype : std::uint8_t {
  Zeus,
  Emotet,
  Refroso,
  Scar,
  Reconyc,
  Solutions180,
  CoolWebSearch,
  Gator,
  Transponder,
  TIBS,
  Conti,
  MAZE,
  Pysa,
  Ako,
  Shade,
};

inline constexpr std::size_t kSubtypeCount = 15;
inline constexpr std::size_t kClassSize = 29298;
inline constexpr std::size_t kFullDatasetSize = 2 * kClassSize;

struct SubtypeInfo {
  Subtype subtype;
  std::string_view name;
  MalwareType type;
  std::size_t count;  // published instance count
};

inline constexpr std::array<SubtypeInfo, kSubtypeCount> kSubtypes{{
    {Subtype::Zeus, "Zeus", MalwareType::TrojanHorse, 1950},
    {Subtype::Emotet, "Emotet", MalwareType::TrojanHorse, 1967},
    {Subtype::Refroso, "Refroso", MalwareType::TrojanHorse, 2000},
    {Subtype::Scar, "Scar", MalwareType::TrojanHorse, 2000},
    {Subtype::Reconyc, "Reconyc", MalwareType::TrojanHorse, 1570},
    {Subtype::Solutions180, "180Solutions", MalwareType::Spyware, 2000},
    {Subtype::CoolWebSearch, "CoolWebSearch", MalwareType::Spyware, 2000},
    {Subtype::Gator, "Gator", MalwareType::Spyware, 2200},
    {Subtype::Transponder, "Transponder", MalwareType::Spyware, 2410},
    {Subtype::TIBS, "TIBS", MalwareType::Spyware, 1410},
    {Subtype::Conti, "Conti", MalwareType::Ransomware, 1988},
    {Subtype::MAZE, "MAZE", MalwareType::Ransomware, 1958},
    {Subtype::Pysa, "Pysa", MalwareType::Ransomware, 1717},
    {Subtype::Ako, "Ako", MalwareType::Ransomware, 2000},
    {Subtype::Shade, "Shade", MalwareType::Ransomware, 2128},
}};

inline const SubtypeInfo& info(Subtype s) { return kSubtypes[static_cast<std::size_t>(s)]; }
inline std::string_view name(Subtype s) { return info(s).name; }
inline std::size_t index(Subtype s) { return static_cast<std::size_t>(s); }

inline std::string_view name(MalwareType t) {
  switch (t) {
    case MalwareType::TrojanHorse: return "TrojanHorse";
    case MalwareType::Spyware: return "Spyware";
    case MalwareType::Ransomware: return "Ransomware";
  }
  return "?";
}

inline std::string_view name(Label l) { return l == Label::Benign ? "Benign" : "Malware"; }

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Case-insensitive lookup of a canonical subtype name ("transponder" works).
inline std::optional<Subtype> subtype_from_name(std::string_view text) {
  const std::string key = detail::lower(detail::trim(text));
  for (const auto& s : kSubtypes) {
    if (detail::lower(s.name) == key) return s.subtype;
  }
  return std::nullopt;
}

struct LabelInfo {
  Label label = Label::Benign;
  std::optional<MalwareType> malware_type;
  std::optional<Subtype> subtype;

  static LabelInfo benign() { return {}; }
  static LabelInfo malware(Subtype s) { return {Label::Malware, info(s).type, s}; }

  bool is_malware() const { return label == Label::Malware; }
  friend bool operator==(const LabelInfo&, const LabelInfo&) = default;
};

// Maps the dataset's combined category field ("Spyware-Transponder-<hash>-1.raw",
// "Benign") onto a LabelInfo. Subtype tokens go through an alias table; the
// dataset abbreviates some names (CWS) and uses different capitalisation.
inline LabelInfo parse_category(std::string_view text) {
  const std::string_view trimmed = detail::trim(text);
  if (trimmed.empty()) throw ParseError("empty category");
  if (detail::lower(trimmed) == "benign") return LabelInfo::benign();

  const auto dash = trimmed.find('-');
  if (dash == std::string_view::npos) {
    throw ParseError("unrecognised category '" + std::string(text) + "'");
  }
  const std::string type_token = detail::lower(trimmed.substr(0, dash));
  std::string_view rest = trimmed.substr(dash + 1);
  const std::string subtype_token = detail::lower(rest.substr(0, rest.find('-')));

  static const std::unordered_map<std::string, MalwareType> types{
      {"trojan", MalwareType::TrojanHorse},
      {"trojanhorse", MalwareType::TrojanHorse},
      {"trojan horse", MalwareType::TrojanHorse},
      {"spyware", MalwareType::Spyware},
      {"ransomware", MalwareType::Ransomware},
  };
  static const std::unordered_map<std::string, Subtype> aliases{
      {"zeus", Subtype::Zeus},
      {"emotet", Subtype::Emotet},
      {"refroso", Subtype::Refroso},
      {"scar", Subtype::Scar},
      {"reconyc", Subtype::Reconyc},
      {"180solutions", Subtype::Solutions180},
      {"180solution", Subtype::Solutions180},
      {"coolwebsearch", Subtype::CoolWebSearch},
      {"cws", Subtype::CoolWebSearch},
      {"gator", Subtype::Gator},
      {"transponder", Subtype::Transponder},
      {"tibs", Subtype::TIBS},
      {"conti", Subtype::Conti},
      {"maze", Subtype::MAZE},
      {"pysa", Subtype::Pysa},
      {"ako", Subtype::Ako},
      {"shade", Subtype::Shade},
  };

  const auto t = types.find(type_token);
  if (t == types.end()) {
    throw ParseError("unknown malware type in category '" + std::string(text) + "'");
  }
  const auto s = aliases.find(subtype_token);
  if (s == aliases.end()) {
    throw ParseError("unknown malware subtype in category '" + std::string(text) + "'");
  }
  if (info(s->second).type != t->second) {
    throw ParseError("subtype/type mismatch in category '" + std::string(text) + "'");
  }
  return LabelInfo::malware(s->second);
}

// Canonicalises feature-name spellings. Published tables write the service
// scan prefix as "svcsan." or "svcs.scan."; the CSV header uses "svcscan.".
inline std::string normalize_feature_name(std::string_view raw) {
  std::string n(detail::trim(raw));
  for (std::string_view bad : {"svcs.scan.", "svcsan."}) {
    if (n.rfind(bad, 0) == 0) {
      n = "svcscan." + n.substr(bad.size());
      break;
    }
  }
  return n;
}

struct FeatureEntry {
  std::string name;
  std::string category;
  bool invariant = false;

  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  explicit FeatureCatalog(std::vector<FeatureEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].name, i).second) {
        throw SchemaError("duplicate feature name '" + entries_[i].name + "'");
      }
    }
  }

  // The 55 memory-forensics features in dataset CSV column order.
  static const FeatureCatalog& cic_malmem();

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const FeatureEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<FeatureEntry>& entries() const { return entries_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(normalize_feature_name(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  FeatureCatalog subset(const std::vector<std::size_t>& indices) const {
    std::vector<FeatureEntry> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(entries_.at(i));
    return FeatureCatalog(std::move(out));
  }

  friend bool operator==(const FeatureCatalog& a, const FeatureCatalog& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<FeatureEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline const FeatureCatalog& FeatureCatalog::cic_malmem() {
  static const FeatureCatalog catalog = [] {
    struct Row {
      const char* name;
      const char* category;
      bool invariant;
    };
    static constexpr Row rows[] = {
        {"pslist.nproc", "PsList", false},
        {"pslist.nppid", "PsList", false},
        {"pslist.avg_threads", "PsList", false},
        {"pslist.nprocs64bit", "PsList", true},
        {"pslist.avg_handlers", "PsList", false},
        {"dlllist.ndlls", "DLLlist", false},
        {"dlllist.avg_dlls_per_proc", "DLLlist", false},
        {"handles.nhandles", "Handles", false},
        {"handles.avg_handles_per_proc", "Handles", false},
        {"handles.nport", "Handles", true},
        {"handles.nfile", "Handles", false},
        {"handles.nevent", "Handles", false},
        {"handles.ndesktop", "Handles", false},
        {"handles.nkey", "Handles", false},
        {"handles.nthread", "Handles", false},
        {"handles.ndirectory", "Handles", false},
        {"handles.nsemaphore", "Handles", false},
        {"handles.ntimer", "Handles", false},
        {"handles.nsection", "Handles", false},
        {"handles.nmutant", "Handles", false},
        {"ldrmodules.not_in_load", "LDR modules", false},
        {"ldrmodules.not_in_init", "LDR modules", false},
        {"ldrmodules.not_in_mem", "LDR modules", false},
        {"ldrmodules.not_in_load_avg", "LDR modules", false},
        {"ldrmodules.not_in_init_avg", "LDR modules", false},
        {"ldrmodules.not_in_mem_avg", "LDR modules", false},
        {"malfind.ninjections", "MalFind", false},
        {"malfind.commitCharge", "MalFind", false},
        {"malfind.protection", "MalFind", false},
        {"malfind.uniqueInjections", "MalFind", false},
        {"psxview.not_in_pslist", "Psxview", false},
        {"psxview.not_in_eprocess_pool", "Psxview", false},
        {"psxview.not_in_ethread_pool", "Psxview", false},
        {"psxview.not_in_pspcid_list", "Psxview", false},
        {"psxview.not_in_csrss_handles", "Psxview", false},
        {"psxview.not_in_session", "Psxview", false},
        {"psxview.not_in_deskthrd", "Psxview", false},
        {"psxview.not_in_pslist_false_avg", "Psxview", false},
        {"psxview.not_in_eprocess_pool_false_avg", "Psxview", false},
        {"psxview.not_in_ethread_pool_false_avg", "Psxview", false},
        {"psxview.not_in_pspcid_list_false_avg", "Psxview", false},
        {"psxview.not_in_csrss_handles_false_avg", "Psxview", false},
        {"psxview.not_in_session_false_avg", "Psxview", false},
        {"psxview.not_in_deskthrd_false_avg", "Psxview", false},
        {"modules.nmodules", "Modules", false},
        {"svcscan.nservices", "SVCscan", false},
        {"svcscan.kernel_drivers", "SVCscan", false},
        {"svcscan.fs_drivers", "SVCscan", false},
        {"svcscan.process_services", "SVCscan", false},
        {"svcscan.shared_process_services", "SVCscan", false},
        {"svcscan.interactive_process_services", "SVCscan", true},
        {"svcscan.nactive", "SVCscan", false},
        {"callbacks.ncallbacks", "Callbacks", false},
        {"callbacks.nanonymous", "Callbacks", false},
        {"callbacks.ngeneric", "Callbacks", false},
    };
    std::vector<FeatureEntry> entries;
    for (const auto& r : rows) entries.push_back({r.name, r.category, r.invariant});
    return FeatureCatalog(std::move(entries));
  }();
  return catalog;
}

// Prefix used for synthetic fixture columns; the loader accepts either the
// full memory-forensics catalog or a catalog made entirely of these.
inline constexpr std::string_view kFixtureFeaturePrefix = "fixture.";

}  // namespace memshield
