#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "memshield/dataset.hpp"
#include "memshield/rng.hpp"

namespace memshield {

struct Split {
  Dataset train;
  Dataset test;
  std::string description;
  std::uint64_t seed = 0;
};

namespace detail {

// Instance positions grouped by stratum, each group in source order.
inline std::vector<std::vector<std::size_t>> strata_members(const Dataset& d) {
  std::vector<std::vector<std::size_t>> members(kSubtypeCount + 1);
  for (std::size_t i = 0; i < d.size(); ++i) members[stratum_of(d.instances[i].label_info)].push_back(i);
  return members;
}

inline Split assemble(const Dataset& d, const std::vector<bool>& in_test, std::string description,
                      std::uint64_t seed) {
  Split s{d.empty_like(d.provenance), d.empty_like(d.provenance), std::move(description), seed};
  for (std::size_t i = 0; i < d.size(); ++i) {
    (in_test[i] ? s.test : s.train).instances.push_back(d.instances[i]);
  }
  return s;
}

inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace detail

// Stratified train/test split over sixteen strata (benign plus each subtype).
// Each stratum contributes round(test_fraction * size) test instances; any
// difference from the rounded global target is reconciled by moving single
// instances in strata with the largest rounding residue.
inline Split stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw PreconditionError("test_fraction must lie in (0, 1)");
  }
  auto members = detail::strata_members(d);
  std::vector<std::size_t> take(members.size(), 0);
  std::vector<double> residue(members.size(), 0.0);
  std::size_t total = 0;
  for (std::size_t s = 0; s < members.size(); ++s) {
    const auto n = members[s].size();
    if (n == 0) continue;
    if (n < 2) throw StratificationError("stratum " + stratum_name(s) + " has fewer than 2 instances");
    const double exact = test_fraction * static_cast<double>(n);
    take[s] = detail::round_half_up(exact);
    residue[s] = exact - static_cast<double>(take[s]);
    total += take[s];
  }
  const std::size_t target = detail::round_half_up(test_fraction * static_cast<double>(d.size()));
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  while (total != target) {
    const bool grow = total < target;
    // Largest residue first when growing, smallest when shrinking; ties by stratum index.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return grow ? residue[a] > residue[b] : residue[a] < residue[b];
    });
    bool moved = false;
    for (auto s : order) {
      const auto n = members[s].size();
      if (n == 0) continue;
      if (grow && take[s] < n) {
        ++take[s];
        residue[s] -= 1.0;
        ++total;
        moved = true;
        break;
      }
      if (!grow && take[s] > 0) {
        --take[s];
        residue[s] += 1.0;
        --total;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }

  std::vector<bool> in_test(d.size(), false);
  for (std::size_t s = 0; s < members.size(); ++s) {
    Rng rng(derive_seed(seed, s));
    auto m = members[s];
    rng.shuffle(std::span(m));
    for (std::size_t i = 0; i < take[s]; ++i) in_test[m[i]] = true;
  }
  return detail::assemble(d, in_test,
                          "stratified test_fraction=" + detail::format_double(test_fraction), seed);
}

// Stratified k-fold. Strata are shuffled independently, then dealt round-robin
// into folds with one running counter across strata, so every stratum and
// every fold size stays within one of its exact share.
inline std::vector<Split> stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("k-fold requires k >= 2");
  auto members = detail::strata_members(d);
  for (std::size_t s = 0; s < members.size(); ++s) {
    if (!members[s].empty() && members[s].size() < k) {
      throw StratificationError("stratum " + stratum_name(s) + " has " +
                                std::to_string(members[s].size()) + " instances, fewer than k=" +
                                std::to_string(k));
    }
  }
  std::vector<std::size_t> fold_of(d.size(), 0);
  std::size_t counter = 0;
  for (std::size_t s = 0; s < members.size(); ++s) {
    Rng rng(derive_seed(seed, s));
    auto m = members[s];
    rng.shuffle(std::span(m));
    for (auto i : m) fold_of[i] = counter++ % k;
  }
  std::vector<Split> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<bool> in_test(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) in_test[i] = fold_of[i] == f;
    folds.push_back(detail::assemble(
        d, in_test, "fold " + std::to_string(f + 1) + " of " + std::to_string(k), seed));
  }
  return folds;
}

// Single-subtype training split: floor(train_fraction * n_subtype) instances of
// the subtype plus the same number of benign instances drawn without
// replacement. Everything else, including every instance of the other
// subtypes, goes to test.
inline Split subtype_partition(const Dataset& d, Subtype subtype, double train_fraction,
                               std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw PreconditionError("train_fraction must lie in (0, 1)");
  }
  auto members = detail::strata_members(d);
  auto mal = members[1 + index(subtype)];
  auto ben = members[0];
  if (mal.empty()) throw PreconditionError("dataset has no " + std::string(name(subtype)) + " instances");
  // The small epsilon keeps exact products such as 0.8 * 2410 from flooring down.
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(mal.size()) + 1e-9));
  if (n_train == 0) throw PreconditionError("train_fraction leaves no training malware");
  if (ben.size() < n_train) {
    throw PreconditionError("not enough benign instances to balance " + std::string(name(subtype)));
  }
  Rng mal_rng(derive_seed(seed, 1));
  Rng ben_rng(derive_seed(seed, 2));
  mal_rng.shuffle(std::span(mal));
  ben_rng.shuffle(std::span(ben));
  std::vector<bool> in_test(d.size(), true);
  for (std::size_t i = 0; i < n_train; ++i) {
    in_test[mal[i]] = false;
    in_test[ben[i]] = false;
  }
  return detail::assemble(d, in_test,
                          "subtype=" + std::string(name(subtype)) +
                              " train_fraction=" + detail::format_double(train_fraction),
                          seed);
}

inline Split subtype_partition(const Dataset& d, const std::string& subtype, double train_fraction,
                               std::uint64_t seed) {
  auto s = subtype_from_name(subtype);
  if (!s) throw PreconditionError("unknown subtype '" + subtype + "'");
  return subtype_partition(d, *s, train_fraction, seed);
}

}  // namespace memshield
