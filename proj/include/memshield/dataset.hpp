#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memshield/catalog.hpp"
#include "memshield/error.hpp"

namespace memshield {

struct Instance {
  std::vector<double> features;
  LabelInfo label_info;
  std::size_t source_row = 0;

  Label label() const { return label_info.label; }
  friend bool operator==(const Instance&, const Instance&) = default;
};

// Per-stratum counts. Index 0 is benign, 1 + index(subtype) the subtypes.
using StratumCounts = std::array<std::size_t, kSubtypeCount + 1>;

inline std::size_t stratum_of(const LabelInfo& l) {
  return l.subtype ? 1 + index(*l.subtype) : 0;
}

inline std::string stratum_name(std::size_t stratum) {
  return stratum == 0 ? std::string("Benign") : std::string(name(kSubtypes[stratum - 1].subtype));
}

struct Dataset {
  FeatureCatalog catalog;
  std::vector<Instance> instances;
  std::string provenance;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  std::size_t n_features() const { return catalog.size(); }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const auto& i : instances) n += i.label() == l;
    return n;
  }

  StratumCounts stratum_counts() const {
    StratumCounts c{};
    for (const auto& i : instances) ++c[stratum_of(i.label_info)];
    return c;
  }

  std::size_t count(Subtype s) const { return stratum_counts()[1 + index(s)]; }

  // Copy with the same catalog and no instances.
  Dataset empty_like(std::string prov) const { return Dataset{catalog, {}, std::move(prov)}; }

  void check_invariants() const {
    for (const auto& i : instances) {
      if (i.features.size() != catalog.size()) {
        throw DimensionError("instance from row " + std::to_string(i.source_row) + " has " +
                             std::to_string(i.features.size()) + " features, catalog has " +
                             std::to_string(catalog.size()));
      }
      for (double v : i.features) {
        if (!std::isfinite(v)) {
          throw ValidationError("non-finite feature in row " + std::to_string(i.source_row));
        }
      }
    }
  }
};

struct LoadOptions {
  // Compare per-subtype and per-class counts against the published totals.
  // Turn off for partial files. Fixture-catalog files are never count-checked.
  bool count_check = true;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i < line.size() && line[i] == '"') quoted = !quoted;
    if (i == line.size() || (line[i] == ',' && !quoted)) {
      std::string_view cell = trim(line.substr(start, i - start));
      if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') {
        cell = cell.substr(1, cell.size() - 2);
      }
      out.push_back(cell);
      start = i + 1;
    }
  }
  return out;
}

inline double parse_double(std::string_view cell, std::size_t row, std::string_view column) {
  double v = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError("non-numeric value '" + std::string(cell) + "' in column '" +
                     std::string(column) + "'",
                     row);
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline bool iequals(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

}  // namespace detail

// Throws ValidationError listing every stratum whose count differs from the
// published table.
inline void check_published_counts(const Dataset& d) {
  const auto counts = d.stratum_counts();
  std::string problems;
  if (counts[0] != kClassSize) {
    problems += " Benign=" + std::to_string(counts[0]) + " (expected " +
                std::to_string(kClassSize) + ")";
  }
  for (const auto& s : kSubtypes) {
    const auto got = counts[1 + index(s.subtype)];
    if (got != s.count) {
      problems += " " + std::string(s.name) + "=" + std::to_string(got) + " (expected " +
                  std::to_string(s.count) + ")";
    }
  }
  if (!problems.empty()) throw ValidationError("count mismatch against published totals:" + problems);
}

inline Dataset parse_dataset(std::istream& in, const LoadOptions& options = {},
                             std::string provenance = "stream") {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty input: no header row");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3) throw SchemaError("header has too few columns");

  std::optional<std::size_t> category_col, class_col;
  std::vector<std::pair<std::size_t, std::string>> feature_cols;
  bool any_catalog = false, any_fixture = false;
  std::vector<std::string> unknown;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = header[c];
    if (detail::iequals(h, "category")) {
      category_col = c;
    } else if (detail::iequals(h, "class")) {
      class_col = c;
    } else {
      const std::string n = normalize_feature_name(h);
      if (FeatureCatalog::cic_malmem().contains(n)) {
        any_catalog = true;
      } else if (n.rfind(kFixtureFeaturePrefix, 0) == 0 && n.size() > kFixtureFeaturePrefix.size()) {
        any_fixture = true;
      } else {
        unknown.push_back(std::string(h));
      }
      feature_cols.emplace_back(c, n);
    }
  }
  if (!category_col) throw SchemaError("missing 'Category' column");
  if (!class_col) throw SchemaError("missing 'Class' column");
  if (!unknown.empty()) {
    std::string msg = "unknown columns:";
    for (const auto& u : unknown) msg += " '" + u + "'";
    throw SchemaError(msg);
  }
  if (any_catalog && any_fixture) throw SchemaError("header mixes catalog and fixture columns");

  FeatureCatalog catalog;
  if (any_catalog) {
    catalog = FeatureCatalog::cic_malmem();
    std::string missing;
    for (const auto& e : catalog.entries()) {
      bool found = false;
      for (const auto& [c, n] : feature_cols) found |= n == e.name;
      if (!found) missing += " '" + e.name + "'";
    }
    if (!missing.empty()) throw SchemaError("missing feature columns:" + missing);
  } else {
    std::vector<FeatureEntry> entries;
    for (const auto& [c, n] : feature_cols) entries.push_back({n, "Fixture", false});
    catalog = FeatureCatalog(std::move(entries));
  }
  // Column position of each catalog feature.
  std::vector<std::size_t> column_of(catalog.size());
  {
    std::vector<bool> seen(catalog.size(), false);
    for (const auto& [c, n] : feature_cols) {
      const auto i = *catalog.index_of(n);
      if (seen[i]) throw SchemaError("duplicate column '" + n + "'");
      seen[i] = true;
      column_of[i] = c;
    }
  }

  Dataset d{catalog, {}, std::move(provenance)};
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    }
    Instance inst;
    inst.source_row = row - 1;
    try {
      inst.label_info = parse_category(cells[*category_col]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), row);
    }
    const auto cls = detail::lower(cells[*class_col]);
    const bool malware_class = cls == "malware" || cls == "1";
    if (!malware_class && cls != "benign" && cls != "0") {
      throw ParseError("unknown class '" + std::string(cells[*class_col]) + "'", row);
    }
    if (malware_class != inst.label_info.is_malware()) {
      throw ParseError("class column disagrees with category '" +
                           std::string(cells[*category_col]) + "'",
                       row);
    }
    inst.features.resize(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      inst.features[i] = detail::parse_double(cells[column_of[i]], row, catalog[i].name);
    }
    d.instances.push_back(std::move(inst));
  }
  if (any_catalog && options.count_check) check_published_counts(d);
  return d;
}

inline Dataset load_dataset(const std::string& path, const LoadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_dataset(in, options, path);
}

inline std::string category_string(const Instance& inst) {
  if (!inst.label_info.is_malware()) return "Benign";
  const auto s = *inst.label_info.subtype;
  std::string_view type_token = info(s).type == MalwareType::TrojanHorse ? "Trojan"
                                : info(s).type == MalwareType::Spyware   ? "Spyware"
                                                                         : "Ransomware";
  return std::string(type_token) + "-" + std::string(name(s)) + "-row" +
         std::to_string(inst.source_row);
}

// Writes the loader's CSV schema; values use shortest round-trip formatting so
// write -> load reproduces every double exactly.
inline void write_csv(const Dataset& d, std::ostream& out) {
  out << "Category";
  for (const auto& e : d.catalog.entries()) out << ',' << e.name;
  out << ",Class\n";
  for (const auto& inst : d.instances) {
    out << category_string(inst);
    for (double v : inst.features) out << ',' << detail::format_double(v);
    out << ',' << name(inst.label()) << '\n';
  }
}

// Drops invariant-flagged features. Idempotent: a reduced catalog has no
// flagged entries left.
inline Dataset preprocess(const Dataset& d) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.catalog.size(); ++i) {
    if (!d.catalog[i].invariant) keep.push_back(i);
  }
  if (keep.size() == d.catalog.size()) return d;
  Dataset out{d.catalog.subset(keep), {}, d.provenance};
  out.instances.reserve(d.size());
  for (const auto& inst : d.instances) {
    Instance r{{}, inst.label_info, inst.source_row};
    r.features.reserve(keep.size());
    for (auto i : keep) r.features.push_back(inst.features[i]);
    out.instances.push_back(std::move(r));
  }
  return out;
}

// Restricts a dataset to the given catalog indices, in the given order.
inline Dataset project(const Dataset& d, const std::vector<std::size_t>& indices) {
  for (auto i : indices) {
    if (i >= d.n_features()) throw PreconditionError("feature index out of range");
  }
  Dataset out{d.catalog.subset(indices), {}, d.provenance};
  out.instances.reserve(d.size());
  for (const auto& inst : d.instances) {
    Instance r{{}, inst.label_info, inst.source_row};
    r.features.reserve(indices.size());
    for (auto i : indices) r.features.push_back(inst.features[i]);
    out.instances.push_back(std::move(r));
  }
  return out;
}

inline Dataset project(const Dataset& d, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto i = d.catalog.index_of(n);
    if (!i) throw SchemaError("dataset has no feature '" + n + "'");
    idx.push_back(*i);
  }
  return project(d, idx);
}

struct ScalerParams {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;    // min == max on the fitting set
  std::vector<bool> extrapolated;  // some transformed value fell outside [0, 1]

  std::size_t size() const { return min.size(); }

  static ScalerParams fit(const Dataset& train) {
    if (train.empty()) throw PreconditionError("cannot fit a scaler on an empty dataset");
    const auto n = train.n_features();
    ScalerParams p{std::vector<double>(n), std::vector<double>(n), std::vector<bool>(n),
                   std::vector<bool>(n, false)};
    for (std::size_t j = 0; j < n; ++j) {
      p.min[j] = p.max[j] = train.instances.front().features[j];
    }
    for (const auto& inst : train.instances) {
      for (std::size_t j = 0; j < n; ++j) {
        p.min[j] = std::min(p.min[j], inst.features[j]);
        p.max[j] = std::max(p.max[j], inst.features[j]);
      }
    }
    for (std::size_t j = 0; j < n; ++j) p.degenerate[j] = p.min[j] == p.max[j];
    return p;
  }

  double transform(std::size_t j, double x) const {
    return degenerate[j] ? 0.0 : (x - min[j]) / (max[j] - min[j]);
  }

  void transform_in_place(std::span<double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = transform(j, x[j]);
  }

  // Applies the map to every instance and records which features
  // extrapolated. Values are never clamped.
  Dataset apply(const Dataset& d) {
    if (d.n_features() != size()) throw DimensionError("scaler/dataset feature count mismatch");
    Dataset out = d;
    for (auto& inst : out.instances) {
      for (std::size_t j = 0; j < size(); ++j) {
        const double v = transform(j, inst.features[j]);
        if (v < 0.0 || v > 1.0) extrapolated[j] = true;
        inst.features[j] = v;
      }
    }
    return out;
  }
};

struct ScaledPair {
  Dataset train;
  Dataset test;
  ScalerParams params;
};

// Fits min-max on train only and applies it to both sides.
inline ScaledPair fit_apply_minmax(const Dataset& train, const Dataset& test) {
  if (!(train.catalog == test.catalog)) throw PreconditionError("train/test catalogs differ");
  ScalerParams p = ScalerParams::fit(train);
  Dataset tr = p.apply(train);
  Dataset te = p.apply(test);
  return {std::move(tr), std::move(te), std::move(p)};
}

}  // namespace memshield
