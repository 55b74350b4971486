#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "memshield/dataset.hpp"
#include "memshield/rng.hpp"

namespace memshield {

struct FixtureSpec {
  std::size_t n_benign = 100;
  std::size_t n_per_subtype = 100;
  std::vector<Subtype> subtypes{Subtype::Transponder};
  std::size_t n_features = 5;
  // Features [0, n_informative) carry class signal; the rest are pure noise.
  // Defaults to all features when left at npos.
  std::size_t n_informative = static_cast<std::size_t>(-1);
  // Distance between the benign and malware cluster means, in noise standard
  // deviations. Zero makes features independent of the label.
  double separation = 4.0;
};

inline std::vector<Subtype> all_subtypes() {
  std::vector<Subtype> out;
  for (const auto& s : kSubtypes) out.push_back(s.subtype);
  return out;
}

namespace detail {

// Per-(subtype, feature) multiplier in [0.75, 1.25]: subtypes differ in how
// strongly they shift each feature but always shift in the same direction.
inline double subtype_strength(std::size_t subtype, std::size_t feature) {
  return 0.75 + 0.5 * static_cast<double>((subtype * 7 + feature * 3) % 5) / 4.0;
}

inline Dataset finalize_rows(FeatureCatalog catalog, std::vector<Instance> rows, Rng& rng,
                             std::string provenance) {
  rng.shuffle(std::span(rows));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].source_row = i;
  return Dataset{std::move(catalog), std::move(rows), std::move(provenance)};
}

}  // namespace detail

// Synthetic dataset with Gaussian class clusters. Malware of every subtype is
// shifted in the same direction on informative features, so models trained on
// one subtype transfer to the others when separation is large.
inline Dataset make_fixture(const FixtureSpec& spec, std::uint64_t seed) {
  if (spec.n_features == 0 || spec.n_benign == 0 || spec.n_per_subtype == 0 || spec.subtypes.empty()) {
    throw PreconditionError("fixture counts must be positive");
  }
  const std::size_t informative = std::min(spec.n_informative, spec.n_features);
  std::vector<FeatureEntry> entries;
  for (std::size_t j = 0; j < spec.n_features; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%02zu", j);
    entries.push_back({std::string(kFixtureFeaturePrefix) + buf, "Fixture", false});
  }
  Rng rng(seed);
  std::vector<Instance> rows;
  rows.reserve(spec.n_benign + spec.n_per_subtype * spec.subtypes.size());
  for (std::size_t i = 0; i < spec.n_benign; ++i) {
    Instance inst{std::vector<double>(spec.n_features), LabelInfo::benign(), 0};
    for (auto& v : inst.features) v = rng.normal();
    rows.push_back(std::move(inst));
  }
  for (auto s : spec.subtypes) {
    for (std::size_t i = 0; i < spec.n_per_subtype; ++i) {
      Instance inst{std::vector<double>(spec.n_features), LabelInfo::malware(s), 0};
      for (std::size_t j = 0; j < spec.n_features; ++j) {
        const double shift = j < informative
                                 ? spec.separation * detail::subtype_strength(index(s), j)
                                 : 0.0;
        inst.features[j] = shift + rng.normal();
      }
      rows.push_back(std::move(inst));
    }
  }
  return detail::finalize_rows(FeatureCatalog(std::move(entries)), std::move(rows), rng,
                               "fixture seed=" + std::to_string(seed));
}

// Surrogate with the full 55-column memory-forensics schema and per-subtype
// counts of scale * published count (scale 1 reproduces the published
// totals). A handful of service and handle features carry the class signal;
// the three invariant features are constant. Used to exercise the real-schema
// code paths without the dataset.
inline Dataset make_cic_fixture(double scale, std::uint64_t seed) {
  if (!(scale > 0.0)) throw PreconditionError("scale must be positive");
  const auto& catalog = FeatureCatalog::cic_malmem();
  struct Signal {
    const char* name;
    double benign_mean;
    double sd;
    double shift;  // malware mean shift in sd units
  };
  static constexpr Signal signals[] = {
      {"svcscan.nservices", 390.0, 3.0, -3.5},
      {"svcscan.shared_process_services", 216.0, 2.0, -3.0},
      {"handles.avg_handles_per_proc", 220.0, 15.0, -2.0},
      {"pslist.avg_handlers", 215.0, 15.0, -1.5},
      {"svcscan.kernel_drivers", 221.0, 1.5, 1.0},
  };
  std::vector<int> signal_of(catalog.size(), -1);
  for (int s = 0; s < static_cast<int>(std::size(signals)); ++s) {
    signal_of[*catalog.index_of(signals[s].name)] = s;
  }
  Rng rng(seed);
  auto draw = [&](std::size_t j, std::optional<Subtype> sub) {
    if (catalog[j].invariant) return 0.0;
    if (signal_of[j] >= 0) {
      const auto& sig = signals[signal_of[j]];
      const double shift = sub ? sig.shift * detail::subtype_strength(index(*sub), j) : 0.0;
      return std::round((sig.benign_mean + sig.sd * (shift + rng.normal())) * 100.0) / 100.0;
    }
    return std::round(std::abs(50.0 + 10.0 * rng.normal()));
  };
  std::vector<Instance> rows;
  std::size_t n_malware = 0;
  for (const auto& s : kSubtypes) {
    const auto n = static_cast<std::size_t>(std::llround(scale * static_cast<double>(s.count)));
    for (std::size_t i = 0; i < n; ++i) {
      Instance inst{std::vector<double>(catalog.size()), LabelInfo::malware(s.subtype), 0};
      for (std::size_t j = 0; j < catalog.size(); ++j) inst.features[j] = draw(j, s.subtype);
      rows.push_back(std::move(inst));
    }
    n_malware += n;
  }
  for (std::size_t i = 0; i < n_malware; ++i) {
    Instance inst{std::vector<double>(catalog.size()), LabelInfo::benign(), 0};
    for (std::size_t j = 0; j < catalog.size(); ++j) inst.features[j] = draw(j, std::nullopt);
    rows.push_back(std::move(inst));
  }
  return detail::finalize_rows(catalog, std::move(rows), rng,
                               "cic-shaped fixture seed=" + std::to_string(seed));
}

}  // namespace memshield
