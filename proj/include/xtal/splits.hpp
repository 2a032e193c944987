#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "xtal/structure.hpp"

namespace xtal {

enum class SplitMode { random, polymorph, polymorph_stratified, n_ordered };
enum class SplitDirection { low_to_high, high_to_low };

inline const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::random: return "random";
    case SplitMode::polymorph: return "polymorph";
    case SplitMode::polymorph_stratified: return "polymorph-stratified";
    case SplitMode::n_ordered: return "n-ordered";
  }
  return "?";
}

inline const char* to_string(SplitDirection d) {
  return d == SplitDirection::low_to_high ? "low-to-high" : "high-to-low";
}

struct SplitSpec {
  std::array<double, 3> ratios{0.6, 0.2, 0.2};  // train, val, test
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::random;
  SplitDirection direction = SplitDirection::low_to_high;

  void validate() const {
    for (double r : ratios)
      if (!(r > 0)) throw ContractError("split ratios must be positive");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ContractError("split ratios must sum to 1");
  }
};

/// Structure ids per split, each list in dataset order.
struct SplitAssignment {
  std::array<std::vector<std::string>, 3> parts;
  std::vector<std::string> warnings;

  const std::vector<std::string>& train() const { return parts[0]; }
  const std::vector<std::string>& val() const { return parts[1]; }
  const std::vector<std::string>& test() const { return parts[2]; }
};

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

/// Split sizes for n items: cuts at floor of the cumulative ratios, so the
/// three sizes always add up to n.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  const double nd = static_cast<double>(n);
  const auto c1 = static_cast<std::size_t>(std::floor(ratios[0] * nd + 1e-9));
  const auto c2 = static_cast<std::size_t>(std::floor((ratios[0] + ratios[1]) * nd + 1e-9));
  const std::size_t a = std::min(c1, n), b = std::min(std::max(c2, a), n);
  return {a, b - a, n - b};
}

namespace detail {

inline void require_splittable(const std::vector<Structure>& dataset) {
  if (dataset.empty()) throw ContractError("cannot split an empty dataset");
  std::set<std::string> seen;
  for (const auto& s : dataset)
    if (!seen.insert(s.id()).second) throw ContractError("duplicate structure id '" + s.id() + "'");
}

// Lists of dataset indices per split -> ids in dataset order.
inline SplitAssignment to_assignment(const std::vector<Structure>& dataset, std::array<std::vector<std::size_t>, 3> idx) {
  SplitAssignment out;
  for (std::size_t k = 0; k < 3; ++k) {
    std::sort(idx[k].begin(), idx[k].end());
    for (auto i : idx[k]) out.parts[k].push_back(dataset[i].id());
  }
  return out;
}

// Groups of indices sharing a reduced composition, in first-seen order.
inline std::vector<std::vector<std::size_t>> composition_groups(const std::vector<Structure>& dataset) {
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto key = reduced_composition(dataset[i]).formula();
    const auto [it, fresh] = slot.emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

// Greedy packing: each group goes to the split with the largest remaining
// deficit (first split on ties).
inline void pack_groups(const std::vector<std::vector<std::size_t>>& groups, std::array<std::size_t, 3> targets,
                        std::array<std::vector<std::size_t>, 3>& out) {
  std::array<long long, 3> deficit{};
  for (std::size_t k = 0; k < 3; ++k) deficit[k] = static_cast<long long>(targets[k]);
  for (const auto& g : groups) {
    const auto k = static_cast<std::size_t>(std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
    deficit[k] -= static_cast<long long>(g.size());
    out[k].insert(out[k].end(), g.begin(), g.end());
  }
}

}  // namespace detail

/// Seeded shuffle, then contiguous cuts.
inline SplitAssignment random_split(const std::vector<Structure>& dataset, const SplitSpec& spec) {
  spec.validate();
  detail::require_splittable(dataset);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto sizes = split_sizes(dataset.size(), spec.ratios);
  std::array<std::vector<std::size_t>, 3> idx;
  idx[0].assign(order.begin(), order.begin() + static_cast<long>(sizes[0]));
  idx[1].assign(order.begin() + static_cast<long>(sizes[0]), order.begin() + static_cast<long>(sizes[0] + sizes[1]));
  idx[2].assign(order.begin() + static_cast<long>(sizes[0] + sizes[1]), order.end());
  return detail::to_assignment(dataset, std::move(idx));
}

/// Structures of equal reduced composition stay together. Groups are shuffled
/// by seed and packed greedily toward the target sizes.
inline SplitAssignment polymorph_split(const std::vector<Structure>& dataset, const SplitSpec& spec) {
  spec.validate();
  detail::require_splittable(dataset);
  auto groups = detail::composition_groups(dataset);
  const auto targets = split_sizes(dataset.size(), spec.ratios);
  const std::size_t largest_target = *std::max_element(targets.begin(), targets.end());
  for (const auto& g : groups)
    if (g.size() > largest_target)
      throw ContractError("composition " + reduced_composition(dataset[g.front()]).formula() + " has " +
                          std::to_string(g.size()) + " structures, more than any target split (" +
                          std::to_string(largest_target) + ")");
  std::mt19937_64 rng(spec.seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  std::array<std::vector<std::size_t>, 3> idx;
  detail::pack_groups(groups, targets, idx);
  return detail::to_assignment(dataset, std::move(idx));
}

/// Fraction of structures per n-arity among `ids`.
inline std::map<std::size_t, double> n_arity_distribution(const std::vector<Structure>& dataset,
                                                          const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> arity;
  for (const auto& s : dataset) arity[s.id()] = reduced_composition(s).n_arity();
  std::map<std::size_t, double> out;
  for (const auto& id : ids) out[arity.at(id)] += 1.0;
  for (auto& [k, v] : out) v /= static_cast<double>(ids.size());
  return out;
}

inline double l1_distance(const std::map<std::size_t, double>& p, const std::map<std::size_t, double>& q) {
  std::set<std::size_t> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  double d = 0;
  for (auto k : keys) d += std::abs((p.count(k) ? p.at(k) : 0.0) - (q.count(k) ? q.at(k) : 0.0));
  return d;
}

inline constexpr double kStratifiedL1Tolerance = 0.05;

/// Polymorph split run separately inside each n-arity stratum, so every split
/// inherits the dataset's n-arity distribution. Strata too small for the
/// ratios are packed best-effort and reported in `warnings`.
inline SplitAssignment stratified_polymorph_split(const std::vector<Structure>& dataset, const SplitSpec& spec) {
  spec.validate();
  detail::require_splittable(dataset);
  std::map<std::size_t, std::vector<std::vector<std::size_t>>> strata;
  for (auto& g : detail::composition_groups(dataset))
    strata[reduced_composition(dataset[g.front()]).n_arity()].push_back(std::move(g));

  std::mt19937_64 rng(spec.seed);
  std::array<std::vector<std::size_t>, 3> idx;
  std::vector<std::string> warnings;
  for (auto& [arity, groups] : strata) {
    std::size_t size = 0, largest = 0;
    for (const auto& g : groups) size += g.size(), largest = std::max(largest, g.size());
    const auto targets = split_sizes(size, spec.ratios);
    const std::size_t smallest = *std::min_element(targets.begin(), targets.end());
    if (smallest == 0 || largest > smallest)
      warnings.push_back("n-arity " + std::to_string(arity) + " stratum (" + std::to_string(size) + " structures, " +
                         "largest group " + std::to_string(largest) + ") cannot meet the ratios exactly");
    std::shuffle(groups.begin(), groups.end(), rng);
    detail::pack_groups(groups, targets, idx);
  }
  auto out = detail::to_assignment(dataset, std::move(idx));
  std::vector<std::string> all;
  for (const auto& s : dataset) all.push_back(s.id());
  const auto full = n_arity_distribution(dataset, all);
  for (std::size_t k = 0; k < 3; ++k) {
    if (out.parts[k].empty()) continue;
    const double d = l1_distance(full, n_arity_distribution(dataset, out.parts[k]));
    if (d > kStratifiedL1Tolerance)
      warnings.push_back(std::string(kSplitNames[k]) + " n-arity distribution is " + std::to_string(d) +
                         " (L1) from the dataset's");
  }
  out.warnings = std::move(warnings);
  return out;
}

/// Buckets by atom count, ordered ascending or descending; the two cuts sit on
/// bucket boundaries whose cumulative counts are closest to the cumulative
/// targets, so equal atom counts never straddle splits.
inline SplitAssignment n_ordered_split(const std::vector<Structure>& dataset, const SplitSpec& spec) {
  spec.validate();
  detail::require_splittable(dataset);
  std::map<std::size_t, std::vector<std::size_t>> by_n;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_n[dataset[i].size()].push_back(i);
  if (by_n.size() < 3) throw ContractError("n-ordered split needs at least 3 distinct atom counts");
  std::vector<std::vector<std::size_t>> buckets;
  for (auto& [n, members] : by_n) buckets.push_back(std::move(members));
  if (spec.direction == SplitDirection::high_to_low) std::reverse(buckets.begin(), buckets.end());

  std::vector<double> cum{0.0};
  for (const auto& b : buckets) cum.push_back(cum.back() + static_cast<double>(b.size()));
  const double n = cum.back();
  // closest cumulative count to `target` among boundaries lo..hi
  auto closest = [&](double target, std::size_t lo, std::size_t hi) {
    std::size_t best = lo;
    for (std::size_t b = lo; b <= hi; ++b)
      if (std::abs(cum[b] - target) < std::abs(cum[best] - target)) best = b;
    return best;
  };
  const std::size_t nb = buckets.size();
  const std::size_t cut1 = closest(spec.ratios[0] * n, 1, nb - 2);
  const std::size_t cut2 = closest((spec.ratios[0] + spec.ratios[1]) * n, cut1 + 1, nb - 1);

  std::array<std::vector<std::size_t>, 3> idx;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t k = b < cut1 ? 0 : (b < cut2 ? 1 : 2);
    idx[k].insert(idx[k].end(), buckets[b].begin(), buckets[b].end());
  }
  return detail::to_assignment(dataset, std::move(idx));
}

inline SplitAssignment split_dataset(const std::vector<Structure>& dataset, const SplitSpec& spec) {
  switch (spec.mode) {
    case SplitMode::random: return random_split(dataset, spec);
    case SplitMode::polymorph: return polymorph_split(dataset, spec);
    case SplitMode::polymorph_stratified: return stratified_polymorph_split(dataset, spec);
    case SplitMode::n_ordered: return n_ordered_split(dataset, spec);
  }
  throw ContractError("unknown split mode");
}

}  // namespace xtal
