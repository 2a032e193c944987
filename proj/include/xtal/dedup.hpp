#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xtal/matcher.hpp"
#include "xtal/parallel.hpp"
#include "xtal/union_find.hpp"

namespace xtal {

enum class TolParam { stol, ltol, angle_tol };

inline const char* to_string(TolParam p) {
  switch (p) {
    case TolParam::stol: return "stol";
    case TolParam::ltol: return "ltol";
    case TolParam::angle_tol: return "angle_tol";
  }
  return "?";
}

/// Loose tolerances bounding every boundary search.
inline constexpr MatchTolerances kBoundaryCeiling{0.3, 0.5, 10.0};
inline constexpr double kBoundaryThresh = 1e-4;

inline double ceiling_of(TolParam p) {
  switch (p) {
    case TolParam::stol: return kBoundaryCeiling.stol;
    case TolParam::ltol: return kBoundaryCeiling.ltol;
    case TolParam::angle_tol: return kBoundaryCeiling.angle_tol;
  }
  return 0.0;
}

/// Match-boundary tolerances of one pair; absent values mean "no-match" even
/// at the ceiling tolerances.
struct BoundaryRecord {
  std::string id1, id2;
  std::optional<double> b_stol, b_ltol, b_angle;

  bool matched() const noexcept { return b_stol.has_value(); }
  std::optional<double> get(TolParam p) const {
    switch (p) {
      case TolParam::stol: return b_stol;
      case TolParam::ltol: return b_ltol;
      case TolParam::angle_tol: return b_angle;
    }
    return std::nullopt;
  }
  bool operator==(const BoundaryRecord&) const = default;
};

struct DedupThresholds {
  double t_stol = 0.025;
  double t_ltol = 0.002;
  double t_angle = 0.4;

  void validate() const {
    if (!(t_stol > 0 && t_ltol > 0 && t_angle > 0)) throw ContractError("dedup thresholds must be positive");
  }
};

struct DuplicateCluster {
  std::vector<std::string> member_ids;  // sorted
  std::string representative_id;
};

using IdPair = std::pair<std::string, std::string>;

namespace detail {

// Smallest value in (0, hi] that still matches, to within thresh. The right
// end is returned once the bracket is narrow enough.
template <class Matches>
double bisect_boundary(double hi, double thresh, Matches&& matches) {
  double lo = 0.0;
  while (hi - lo > thresh) {
    const double mid = 0.5 * (lo + hi);
    if (matches(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

inline std::optional<double> session_boundary(MatchSession& session, TolParam which, double thresh) {
  const auto at_ceiling = session.query(kBoundaryCeiling);
  if (!at_ceiling) return std::nullopt;
  switch (which) {
    case TolParam::stol: return at_ceiling->rmse;
    case TolParam::ltol:
      return bisect_boundary(kBoundaryCeiling.ltol, thresh, [&](double x) {
        return session.query({x, kBoundaryCeiling.stol, kBoundaryCeiling.angle_tol}).has_value();
      });
    case TolParam::angle_tol:
      return bisect_boundary(kBoundaryCeiling.angle_tol, thresh, [&](double x) {
        return session.query({kBoundaryCeiling.ltol, kBoundaryCeiling.stol, x}).has_value();
      });
  }
  return std::nullopt;
}

}  // namespace detail

/// Tolerance at which the pair stops matching, with the other two parameters
/// at the ceiling. The stol boundary is the rmse itself; ltol and angle_tol are
/// bisected on [0, ceiling]. Absent when the pair fails at the ceiling.
inline std::optional<double> boundary_tolerance(const Structure& s1, const Structure& s2, TolParam which,
                                                double thresh = kBoundaryThresh) {
  if (!(thresh > 0)) throw ContractError("thresh must be positive");
  if (!reduced_composition(s1).same_reduced(reduced_composition(s2))) return std::nullopt;
  const PreparedStructure a(s1), b(s2);
  MatchSession session(a, b, kBoundaryCeiling.ltol, kBoundaryCeiling.angle_tol);
  return detail::session_boundary(session, which, thresh);
}

/// All three boundaries of a prepared pair, sharing one session.
inline BoundaryRecord pair_boundaries(const PreparedStructure& a, const PreparedStructure& b,
                                      double thresh = kBoundaryThresh) {
  BoundaryRecord r{a.id(), b.id(), std::nullopt, std::nullopt, std::nullopt};
  MatchSession session(a, b, kBoundaryCeiling.ltol, kBoundaryCeiling.angle_tol);
  r.b_stol = detail::session_boundary(session, TolParam::stol, thresh);
  if (!r.b_stol) return r;
  r.b_ltol = detail::session_boundary(session, TolParam::ltol, thresh);
  r.b_angle = detail::session_boundary(session, TolParam::angle_tol, thresh);
  return r;
}

namespace detail {

inline void require_unique_ids(const std::vector<Structure>& dataset) {
  std::set<std::string> seen;
  for (const auto& s : dataset)
    if (!seen.insert(s.id()).second) throw ContractError("duplicate structure id '" + s.id() + "'");
}

}  // namespace detail

/// Boundaries of every unordered pair with equal reduced composition, handed
/// to `sink` in (id1, id2) order with id1 < id2. Rows are computed in parallel
/// in bounded batches, so memory stays proportional to the batch.
inline std::size_t all_pairs_boundaries(const std::vector<Structure>& dataset,
                                        const std::function<void(const BoundaryRecord&)>& sink,
                                        double thresh = kBoundaryThresh, std::size_t jobs = 0) {
  if (!(thresh > 0)) throw ContractError("thresh must be positive");
  detail::require_unique_ids(dataset);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return dataset[x].id() < dataset[y].id(); });

  std::vector<std::unique_ptr<PreparedStructure>> prep(dataset.size());
  parallel_for(dataset.size(), jobs,
               [&](std::size_t i) { prep[i] = std::make_unique<PreparedStructure>(dataset[order[i]]); });

  // partners[i]: later positions (in id order) of the same composition
  std::map<std::string, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < prep.size(); ++i) buckets[prep[i]->composition().formula()].push_back(i);
  std::vector<std::vector<std::size_t>> partners(prep.size());
  for (const auto& [formula, members] : buckets)
    for (std::size_t k = 0; k < members.size(); ++k)
      partners[members[k]].assign(members.begin() + static_cast<long>(k) + 1, members.end());

  const std::size_t batch = std::max<std::size_t>(64, 4 * resolve_jobs(jobs));
  std::size_t emitted = 0;
  for (std::size_t start = 0; start < prep.size(); start += batch) {
    const std::size_t stop = std::min(prep.size(), start + batch);
    std::vector<std::vector<BoundaryRecord>> rows(stop - start);
    parallel_for(stop - start, jobs, [&](std::size_t k) {
      const std::size_t i = start + k;
      for (std::size_t j : partners[i]) rows[k].push_back(pair_boundaries(*prep[i], *prep[j], thresh));
    });
    for (const auto& row : rows)
      for (const auto& rec : row) sink(rec), ++emitted;
  }
  return emitted;
}

inline std::vector<BoundaryRecord> all_pairs_boundaries(const std::vector<Structure>& dataset,
                                                        double thresh = kBoundaryThresh, std::size_t jobs = 0) {
  std::vector<BoundaryRecord> out;
  all_pairs_boundaries(dataset, [&](const BoundaryRecord& r) { out.push_back(r); }, thresh, jobs);
  return out;
}

/// Pairs whose three boundaries all fall at or below the thresholds.
inline std::vector<IdPair> duplicate_pairs(const std::vector<BoundaryRecord>& records,
                                           const DedupThresholds& th = {}) {
  th.validate();
  std::vector<IdPair> out;
  for (const auto& r : records)
    if (r.matched() && *r.b_stol <= th.t_stol && *r.b_ltol <= th.t_ltol && *r.b_angle <= th.t_angle)
      out.emplace_back(r.id1, r.id2);
  return out;
}

struct DedupResult {
  std::vector<Structure> unique;           // input order, one structure per cluster
  std::vector<DuplicateCluster> clusters;  // components with at least two members, sorted by representative
};

/// Connected components of the duplicate graph. Each cluster keeps its lowest
/// id; untouched structures pass through.
inline DedupResult cluster_and_deduplicate(const std::vector<Structure>& dataset, const std::vector<IdPair>& pairs) {
  detail::require_unique_ids(dataset);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i) index.emplace(dataset[i].id(), i);
  UnionFind uf(dataset.size());
  for (const auto& [a, b] : pairs) {
    const auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      throw ContractError("duplicate pair references unknown id '" + (ia == index.end() ? a : b) + "'");
    uf.unite(ia->second, ib->second);
  }
  std::map<std::size_t, std::vector<std::string>> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) members[uf.find(i)].push_back(dataset[i].id());

  DedupResult out;
  std::set<std::string> keep;
  for (auto& [root, ids] : members) {
    std::sort(ids.begin(), ids.end());
    keep.insert(ids.front());
    if (ids.size() > 1) out.clusters.push_back({ids, ids.front()});
  }
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const auto& x, const auto& y) { return x.representative_id < y.representative_id; });
  for (const auto& s : dataset)
    if (keep.count(s.id())) out.unique.push_back(s);
  return out;
}

/// Values below this are treated as exact zeros by the enantiomorph rule.
inline constexpr double kRmseZeroFloor = 1e-9;

struct EnantiomorphCheck {
  IdPair pair;
  std::optional<double> rmse_improper;     // reflections allowed
  std::optional<double> rmse_proper_only;  // absent: no proper-only match
  bool flagged = false;
};

/// Tenfold rule: flagged when rmse_proper_only >= 10 * rmse_improper, with a
/// failed proper-only match counting as infinite. Both zero is not a pair.
inline bool enantiomorph_rule(std::optional<double> rmse_improper, std::optional<double> rmse_proper_only) {
  if (!rmse_improper) return false;
  if (!rmse_proper_only) return true;
  const double imp = *rmse_improper < kRmseZeroFloor ? 0.0 : *rmse_improper;
  const double pro = *rmse_proper_only < kRmseZeroFloor ? 0.0 : *rmse_proper_only;
  if (imp == 0.0 && pro == 0.0) return false;
  return pro >= 10.0 * imp;
}

/// Re-matches candidate pairs at the ceiling tolerances with and without
/// improper motions and applies the tenfold rule.
inline std::vector<EnantiomorphCheck> enantiomorph_screen(const std::vector<IdPair>& candidate_pairs,
                                                          const std::vector<Structure>& dataset,
                                                          std::size_t jobs = 0) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i) index.emplace(dataset[i].id(), i);
  for (const auto& [a, b] : candidate_pairs)
    if (!index.count(a) || !index.count(b)) throw ContractError("candidate pair references unknown id");
  std::vector<EnantiomorphCheck> out(candidate_pairs.size());
  parallel_for(candidate_pairs.size(), jobs, [&](std::size_t k) {
    const auto& [a, b] = candidate_pairs[k];
    const Structure& s1 = dataset[index.at(a)];
    const Structure& s2 = dataset[index.at(b)];
    auto& c = out[k];
    c.pair = candidate_pairs[k];
    if (!reduced_composition(s1).same_reduced(reduced_composition(s2))) return;
    const PreparedStructure p1(s1), p2(s2);
    MatchSession session(p1, p2, kBoundaryCeiling.ltol, kBoundaryCeiling.angle_tol);
    if (const auto m = session.query(kBoundaryCeiling, {.allow_improper = true})) c.rmse_improper = m->rmse;
    if (const auto m = session.query(kBoundaryCeiling, {.allow_improper = false})) c.rmse_proper_only = m->rmse;
    c.flagged = enantiomorph_rule(c.rmse_improper, c.rmse_proper_only);
  });
  return out;
}

struct DedupReport {
  DedupResult result;
  std::vector<IdPair> duplicate_pairs;
  std::vector<EnantiomorphCheck> enantiomorphs;  // only with screening enabled
  std::size_t n_records = 0;
};

/// Full pipeline: boundaries, threshold intersection, optional enantiomorph
/// screen of the duplicate candidates, clustering.
inline DedupReport deduplicate(const std::vector<Structure>& dataset, const DedupThresholds& th = {},
                               bool screen_enantiomorphs = false, std::size_t jobs = 0,
                               const std::function<void(const BoundaryRecord&)>& record_sink = {}) {
  th.validate();
  DedupReport rep;
  all_pairs_boundaries(
      dataset,
      [&](const BoundaryRecord& r) {
        ++rep.n_records;
        if (record_sink) record_sink(r);
        if (r.matched() && *r.b_stol <= th.t_stol && *r.b_ltol <= th.t_ltol && *r.b_angle <= th.t_angle)
          rep.duplicate_pairs.emplace_back(r.id1, r.id2);
      },
      kBoundaryThresh, jobs);
  std::vector<IdPair> keep = rep.duplicate_pairs;
  if (screen_enantiomorphs) {
    rep.enantiomorphs = enantiomorph_screen(rep.duplicate_pairs, dataset, jobs);
    keep.clear();
    for (const auto& c : rep.enantiomorphs)
      if (!c.flagged) keep.push_back(c.pair);
  }
  rep.result = cluster_and_deduplicate(dataset, keep);
  return rep;
}

struct CurveRow {
  TolParam parameter = TolParam::stol;
  double tolerance = 0;
  double fraction_unique = 1;
  double density = 0;  // tophat estimate over matching pairs
};

/// Fraction of structures left unique when only `param` is thresholded at each
/// grid value (the others at their ceilings), and the tophat density of the
/// boundary values of matching pairs. `bandwidth` defaults to the grid step.
inline std::vector<CurveRow> uniqueness_curve(const std::vector<BoundaryRecord>& records, std::size_t n_structures,
                                              TolParam param, const std::vector<double>& grid,
                                              std::optional<double> bandwidth = std::nullopt) {
  if (grid.empty()) throw ContractError("empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ContractError("grid must be ascending");
  double h = 0;
  if (bandwidth) {
    h = *bandwidth;
  } else if (grid.size() > 1) {
    h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  }
  if (!(h > 0)) throw ContractError("bandwidth must be positive");

  std::unordered_map<std::string, std::size_t> index;
  auto id_of = [&](const std::string& id) { return index.emplace(id, index.size()).first->second; };
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (const auto& r : records)
    if (const auto b = r.get(param)) edges.emplace_back(*b, id_of(r.id1), id_of(r.id2));
  if (index.size() > n_structures) throw ContractError("records name more structures than n_structures");
  std::sort(edges.begin(), edges.end());
  std::vector<double> values;
  for (const auto& e : edges) values.push_back(std::get<0>(e));

  UnionFind uf(n_structures);
  std::size_t next = 0;
  std::vector<CurveRow> out;
  for (double t : grid) {
    while (next < edges.size() && std::get<0>(edges[next]) <= t) {
      uf.unite(std::get<1>(edges[next]), std::get<2>(edges[next]));
      ++next;
    }
    CurveRow row;
    row.parameter = param;
    row.tolerance = t;
    row.fraction_unique = n_structures ? static_cast<double>(uf.components()) / static_cast<double>(n_structures) : 1.0;
    if (!values.empty()) {
      const auto lo = std::lower_bound(values.begin(), values.end(), t - h / 2);
      const auto hi = std::lower_bound(values.begin(), values.end(), t + h / 2);
      row.density = static_cast<double>(hi - lo) / (static_cast<double>(values.size()) * h);
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace xtal
