#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "xtal/matcher.hpp"
#include "xtal/parallel.hpp"

namespace xtal {

/// Mean rmse with unmatched references charged `stol`:
/// rate * (mean_rmse - stol) + stol.
inline double crmse_combine(double match_rate, double mean_rmse, double stol) {
  if (!(stol > 0)) throw ContractError("stol must be positive");
  if (!(match_rate >= 0 && match_rate <= 1)) throw ContractError("match rate must lie in [0, 1]");
  if (match_rate == 0) return stol;
  if (!(mean_rmse >= 0 && mean_rmse <= stol)) throw ContractError("mean rmse must lie in [0, stol]");
  return match_rate * (mean_rmse - stol) + stol;
}

struct RefBest {
  std::string ref_id;
  std::optional<std::string> gen_id;
  std::optional<double> rmse;

  bool operator==(const RefBest&) const = default;
};

/// Outcome of a benchmark run. `per_ref` keeps the best match of every
/// reference so cRMSE can be re-derived at a smaller stol without matching
/// again (see `rescored`).
struct MetreReport {
  std::string metric = "metre";
  MatchTolerances tolerances;
  std::size_t n_test = 0;
  std::size_t n_ref_match = 0;
  std::vector<RefBest> per_ref;
  double metre_rate = 0.0;
  std::optional<double> mean_rmse;  // over matched references only
  double mean_crmse = 0.0;

  double stol_used() const noexcept { return tolerances.stol; }
};

namespace detail {

inline void finalize(MetreReport& r) {
  r.n_test = r.per_ref.size();
  r.n_ref_match = 0;
  double sum = 0.0;
  for (const auto& b : r.per_ref)
    if (b.rmse) ++r.n_ref_match, sum += *b.rmse;
  r.metre_rate = r.n_test ? static_cast<double>(r.n_ref_match) / static_cast<double>(r.n_test) : 0.0;
  r.mean_rmse.reset();
  if (r.n_ref_match) r.mean_rmse = sum / static_cast<double>(r.n_ref_match);
  r.mean_crmse = crmse_combine(r.metre_rate, r.mean_rmse.value_or(0.0), r.tolerances.stol);
}

inline std::vector<std::unique_ptr<PreparedStructure>> prepare_all(const std::vector<Structure>& xs,
                                                                   std::size_t jobs) {
  std::vector<std::unique_ptr<PreparedStructure>> out(xs.size());
  parallel_for(xs.size(), jobs, [&](std::size_t i) { out[i] = std::make_unique<PreparedStructure>(xs[i]); });
  return out;
}

// Reference indices keyed by reduced formula.
inline std::map<std::string, std::vector<std::size_t>> bucket_by_formula(
    const std::vector<std::unique_ptr<PreparedStructure>>& xs) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out[xs[i]->composition().formula()].push_back(i);
  return out;
}

// Keep the lower rmse; equal rmse goes to the smaller generated id.
inline void offer(RefBest& best, const std::string& gen_id, double rmse) {
  if (!best.rmse || rmse < *best.rmse || (rmse == *best.rmse && gen_id < *best.gen_id)) {
    best.rmse = rmse;
    best.gen_id = gen_id;
  }
}

}  // namespace detail

/// Recomputes a report as if matching had used `stol`. Only valid for
/// stol <= the stol the report was produced with.
inline MetreReport rescored(MetreReport r, double stol) {
  if (!(stol > 0) || stol > r.tolerances.stol) throw ContractError("rescoring needs 0 < stol <= stol_used");
  r.tolerances.stol = stol;
  for (auto& b : r.per_ref)
    if (b.rmse && *b.rmse > stol) b.rmse.reset(), b.gen_id.reset();
  detail::finalize(r);
  return r;
}

/// One-to-one rate: gen[i] is compared with ref[i] only.
inline MetreReport standard_match_rate(const std::vector<Structure>& gen, const std::vector<Structure>& ref,
                                       const MatchTolerances& tol = {}, std::size_t jobs = 0) {
  tol.validate();
  if (gen.size() != ref.size()) throw ContractError("generated and reference lists differ in length");
  if (ref.empty()) throw ContractError("empty reference list");
  MetreReport r;
  r.metric = "match_rate";
  r.tolerances = tol;
  r.per_ref.resize(ref.size());
  parallel_for(ref.size(), jobs, [&](std::size_t i) {
    r.per_ref[i].ref_id = ref[i].id();
    if (const auto m = match_structures(ref[i], gen[i], tol)) {
      r.per_ref[i].rmse = m->rmse;
      r.per_ref[i].gen_id = gen[i].id();
    }
  });
  detail::finalize(r);
  return r;
}

/// Match everyone to reference: every generated structure is compared with
/// every reference of equal reduced composition and each reference keeps its
/// best match.
inline MetreReport metre(const std::vector<Structure>& gen, const std::vector<Structure>& ref,
                         const MatchTolerances& tol = {}, std::size_t jobs = 0) {
  tol.validate();
  if (ref.empty()) throw ContractError("empty reference list");
  const auto pg = detail::prepare_all(gen, jobs);
  const auto pr = detail::prepare_all(ref, jobs);
  const auto buckets = detail::bucket_by_formula(pr);

  std::vector<std::vector<std::pair<std::size_t, double>>> hits(gen.size());
  parallel_for(gen.size(), jobs, [&](std::size_t g) {
    const auto it = buckets.find(pg[g]->composition().formula());
    if (it == buckets.end()) return;
    for (std::size_t r : it->second)
      if (const auto m = match_prepared(*pr[r], *pg[g], tol)) hits[g].emplace_back(r, m->rmse);
  });

  MetreReport rep;
  rep.tolerances = tol;
  rep.per_ref.resize(ref.size());
  for (std::size_t r = 0; r < ref.size(); ++r) rep.per_ref[r].ref_id = ref[r].id();
  for (std::size_t g = 0; g < gen.size(); ++g)
    for (const auto& [r, rmse] : hits[g]) detail::offer(rep.per_ref[r], gen[g].id(), rmse);
  detail::finalize(rep);
  return rep;
}

struct KMatchConfig {
  std::size_t k = 1;
};

/// Per reference, success if any of its k generated candidates matches; the
/// lowest rmse is kept.
inline MetreReport k_match_rate(const std::vector<std::vector<Structure>>& gen_groups,
                                const std::vector<Structure>& ref, const KMatchConfig& cfg,
                                const MatchTolerances& tol = {}, std::size_t jobs = 0) {
  tol.validate();
  if (cfg.k < 1) throw ContractError("k must be >= 1");
  if (gen_groups.size() != ref.size()) throw ContractError("generated groups and references differ in length");
  if (ref.empty()) throw ContractError("empty reference list");
  for (const auto& g : gen_groups)
    if (g.size() != cfg.k) throw ContractError("every group must hold exactly k structures");
  MetreReport r;
  r.metric = "k_match";
  r.tolerances = tol;
  r.per_ref.resize(ref.size());
  parallel_for(ref.size(), jobs, [&](std::size_t i) {
    auto& best = r.per_ref[i];
    best.ref_id = ref[i].id();
    for (const auto& g : gen_groups[i]) {
      const auto m = match_structures(ref[i], g, tol);
      if (m && (!best.rmse || m->rmse < *best.rmse)) best.rmse = m->rmse, best.gen_id = g.id();
    }
  });
  detail::finalize(r);
  return r;
}

struct SweepGrid {
  std::vector<double> ltol;
  std::vector<double> stol;
  std::vector<double> angle_tol;
};

struct SweepRow {
  double ltol = 0, stol = 0, angle_tol = 0;
  double metre_rate = 0;
  std::optional<double> mean_rmse;
  double mean_crmse = 0;
};

/// METRe at every grid point, sorted by (stol, ltol, angle_tol). Lattice
/// candidates and site assignments are computed once per pair and reused.
inline std::vector<SweepRow> tolerance_sweep(const std::vector<Structure>& gen, const std::vector<Structure>& ref,
                                             const SweepGrid& grid, std::size_t jobs = 0) {
  if (grid.ltol.empty() || grid.stol.empty() || grid.angle_tol.empty()) throw ContractError("empty sweep grid");
  if (ref.empty()) throw ContractError("empty reference list");
  std::vector<MatchTolerances> points;
  for (double s : grid.stol)
    for (double l : grid.ltol)
      for (double a : grid.angle_tol) {
        const MatchTolerances t{l, s, a};
        t.validate();
        points.push_back(t);
      }
  std::sort(points.begin(), points.end(), [](const auto& x, const auto& y) {
    return std::tie(x.stol, x.ltol, x.angle_tol) < std::tie(y.stol, y.ltol, y.angle_tol);
  });
  const double ltol_max = *std::max_element(grid.ltol.begin(), grid.ltol.end());
  const double angle_max = *std::max_element(grid.angle_tol.begin(), grid.angle_tol.end());

  const auto pg = detail::prepare_all(gen, jobs);
  const auto pr = detail::prepare_all(ref, jobs);
  const auto buckets = detail::bucket_by_formula(pr);

  struct Hit {
    std::size_t ref;
    std::vector<std::optional<double>> rmse;  // per grid point
  };
  std::vector<std::vector<Hit>> hits(gen.size());
  parallel_for(gen.size(), jobs, [&](std::size_t g) {
    const auto it = buckets.find(pg[g]->composition().formula());
    if (it == buckets.end()) return;
    for (std::size_t r : it->second) {
      MatchSession session(*pr[r], *pg[g], ltol_max, angle_max);
      Hit h{r, {}};
      h.rmse.reserve(points.size());
      bool any = false;
      for (const auto& p : points) {
        const auto m = session.query(p);
        h.rmse.push_back(m ? std::optional<double>(m->rmse) : std::nullopt);
        any = any || m.has_value();
      }
      if (any) hits[g].push_back(std::move(h));
    }
  });

  std::vector<SweepRow> rows;
  rows.reserve(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    MetreReport rep;
    rep.tolerances = points[p];
    rep.per_ref.resize(ref.size());
    for (std::size_t g = 0; g < gen.size(); ++g)
      for (const auto& h : hits[g])
        if (h.rmse[p]) detail::offer(rep.per_ref[h.ref], gen[g].id(), *h.rmse[p]);
    detail::finalize(rep);
    rows.push_back({points[p].ltol, points[p].stol, points[p].angle_tol, rep.metre_rate, rep.mean_rmse,
                    rep.mean_crmse});
  }
  return rows;
}

}  // namespace xtal
