#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "xtal/assignment.hpp"
#include "xtal/primitive.hpp"

namespace xtal {

/// Tolerances gating a structure match.
///   ltol      fractional lattice-length mismatch
///   stol      site RMS displacement in units of (V/N)^(1/3)
///   angle_tol lattice-angle mismatch in degrees
struct MatchTolerances {
  double ltol = 0.3;
  double stol = 0.5;
  double angle_tol = 10.0;

  void validate() const {
    if (!(ltol > 0 && stol > 0 && angle_tol > 0)) throw ContractError("match tolerances must be strictly positive");
  }
  bool operator==(const MatchTolerances&) const = default;
};

struct MatchOptions {
  bool allow_improper = true;
};

struct MatchResult {
  double rmse = 0;      // normalized RMS displacement
  double max_dist = 0;  // normalized largest single-site displacement
  /// site_mapping[j] = site of the first structure matched to site j of the
  /// second; indices refer to the reduced primitive cells.
  std::vector<std::size_t> site_mapping;
  /// Maps the second reduced lattice onto the first: M * L2 ~ L1.
  UnimodularTransform lattice_map;
  bool proper = true;
};

struct NormalizedRmsd {
  double rmse;
  double max_dist;
};

/// RMS and maximum displacement, both divided by the free length per atom (V/n)^(1/3).
inline NormalizedRmsd normalized_rmsd(std::span<const Vec3> cart_disp, double volume, std::size_t n) {
  if (n == 0) throw ContractError("normalized_rmsd needs n >= 1");
  if (!(volume > 0)) throw ContractError("normalized_rmsd needs a positive volume");
  if (cart_disp.empty()) return {0.0, 0.0};
  double sum = 0, mx = 0;
  for (const auto& d : cart_disp) {
    const double d2 = d.squaredNorm();
    sum += d2;
    mx = std::max(mx, d2);
  }
  const double norm = std::cbrt(volume / static_cast<double>(n));
  return {std::sqrt(sum / static_cast<double>(cart_disp.size())) / norm, std::sqrt(mx) / norm};
}

/// One admissible lattice correspondence.
struct LatticeMapping {
  UnimodularTransform transform;  // M with M * L2 ~ L1
  Lattice aligned;                // M * L2 rotated onto L1's Cartesian frame
  bool proper;                    // orientation parity of that rotation
};

namespace detail {

/// Smallest (ltol, angle_tol) at which a candidate passes, for one direction of the test.
struct Requirement {
  double ltol;
  double angle;
};

struct LatticeCandidate {
  IntMat3 m;
  std::vector<Requirement> routes;  // passes if any route is within tolerance
  bool proper;

  bool admitted(double ltol, double angle_tol) const {
    return std::any_of(routes.begin(), routes.end(),
                       [&](const Requirement& r) { return r.ltol <= ltol && r.angle <= angle_tol; });
  }
};

inline double vec_angle_deg(const Vec3& u, const Vec3& v) {
  return deg(std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
}

inline double length_mismatch(double len, double target) {
  return std::abs(len - target) / std::max(len, target);
}

inline int entry_bound(const Lattice& l1, const Lattice& l2) {
  double ratio = 1.0;
  for (const Lattice* l : {&l1, &l2}) {
    const auto p = l->parameters();
    const double lo = std::min({p.a, p.b, p.c}), hi = std::max({p.a, p.b, p.c});
    ratio = std::max(ratio, hi / lo);
  }
  return std::min(3, static_cast<int>(std::ceil(ratio - 1e-12)) + 1);
}

// All integer M (entries in [-bound, bound], det +-1) with M * source ~ target
// within the given ceilings, with their exact requirements.
inline std::vector<std::pair<IntMat3, Requirement>> one_way_candidates(const Lattice& target, const Lattice& source,
                                                                       int bound, double ltol_max,
                                                                       double angle_max) {
  struct Vec {
    Eigen::Matrix<std::int64_t, 1, 3> idx;
    Vec3 cart;
    double len;
    double mismatch;
  };
  std::array<Vec3, 3> tv{target.vector(0), target.vector(1), target.vector(2)};
  std::array<double, 3> tlen{tv[0].norm(), tv[1].norm(), tv[2].norm()};
  std::array<std::vector<Vec>, 3> lists;
  for (int i = -bound; i <= bound; ++i)
    for (int j = -bound; j <= bound; ++j)
      for (int k = -bound; k <= bound; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        const Vec3 c = source.basis().transpose() * Vec3(i, j, k);
        const double len = c.norm();
        for (int t = 0; t < 3; ++t) {
          const double mm = length_mismatch(len, tlen[t]);
          if (mm <= ltol_max) lists[t].push_back({{i, j, k}, c, len, mm});
        }
      }
  const double ang01 = vec_angle_deg(tv[0], tv[1]);
  const double ang02 = vec_angle_deg(tv[0], tv[2]);
  const double ang12 = vec_angle_deg(tv[1], tv[2]);

  std::vector<std::pair<IntMat3, Requirement>> out;
  for (const auto& a : lists[0])
    for (const auto& b : lists[1]) {
      const double d01 = std::abs(vec_angle_deg(a.cart, b.cart) - ang01);
      if (d01 > angle_max) continue;
      for (const auto& c : lists[2]) {
        const double d02 = std::abs(vec_angle_deg(a.cart, c.cart) - ang02);
        if (d02 > angle_max) continue;
        const double d12 = std::abs(vec_angle_deg(b.cart, c.cart) - ang12);
        if (d12 > angle_max) continue;
        IntMat3 m;
        m.row(0) = a.idx;
        m.row(1) = b.idx;
        m.row(2) = c.idx;
        const auto d = det(m);
        if (d != 1 && d != -1) continue;
        out.push_back({m, {std::max({a.mismatch, b.mismatch, c.mismatch}), std::max({d01, d02, d12})}});
      }
    }
  return out;
}

// Candidate set closed under argument swap: forward maps plus the inverses of
// reverse maps, sorted lexicographically by matrix entries.
inline std::vector<LatticeCandidate> lattice_candidates(const Lattice& l1, const Lattice& l2, double ltol_max,
                                                        double angle_max) {
  const int bound = entry_bound(l1, l2);
  auto cmp = [](const IntMat3& a, const IntMat3& b) { return lex_less(a, b); };
  std::map<IntMat3, std::vector<Requirement>, decltype(cmp)> merged(cmp);
  for (auto& [m, req] : one_way_candidates(l1, l2, bound, ltol_max, angle_max)) merged[m].push_back(req);
  for (auto& [n, req] : one_way_candidates(l2, l1, bound, ltol_max, angle_max))
    merged[unimodular_inverse(n)].push_back(req);

  const bool lattices_same_hand = (l1.signed_volume() > 0) == (l2.signed_volume() > 0);
  std::vector<LatticeCandidate> out;
  out.reserve(merged.size());
  for (auto& [m, routes] : merged) {
    const bool proper = lattices_same_hand == (det(m) > 0);
    out.push_back({m, std::move(routes), proper});
  }
  return out;
}

/// Closest orthogonal matrix (polar factor) to f.
inline Mat3 polar_orthogonal(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace detail

/// Every lattice correspondence M * l2 ~ l1 within (ltol, angle_tol),
/// deterministic and sorted by the entries of M. Only equal-size cells
/// (n_ratio == 1) are supported.
inline std::vector<LatticeMapping> fit_lattices(const Lattice& l1, const Lattice& l2, int n_ratio, double ltol,
                                                double angle_tol) {
  if (n_ratio != 1) throw ContractError("fit_lattices supports only equal-size cells (n_ratio = 1)");
  if (!(ltol > 0 && angle_tol > 0)) throw ContractError("fit_lattices tolerances must be positive");
  std::vector<LatticeMapping> out;
  for (const auto& c : detail::lattice_candidates(l1, l2, ltol, angle_tol)) {
    if (!c.admitted(ltol, angle_tol)) continue;
    const Mat3 t = c.m.cast<double>() * l2.basis();
    const Mat3 q = detail::polar_orthogonal(t.inverse() * l1.basis());
    out.push_back({UnimodularTransform(c.m), Lattice(t * q), c.proper});
  }
  return out;
}

/// A structure reduced to its Niggli primitive cell, with the bookkeeping the
/// matcher needs. Build once and reuse across many comparisons.
class PreparedStructure {
 public:
  explicit PreparedStructure(const Structure& s, double symprec = kDefaultSymprec)
      : original_id_(s.id()), reduced_(primitive_cell(s, symprec)), composition_(reduced_composition(s)) {
    // primitive_cell returns its input untouched when already primitive
    reduced_ = niggli_reduce(reduced_);
    anchor_species_ = detail::least_frequent_species(reduced_.species());
    for (std::size_t i = 0; i < reduced_.size(); ++i)
      if (reduced_.species()[i] == anchor_species_) anchor_sites_.push_back(i);
  }

  const std::string& id() const noexcept { return original_id_; }
  const Structure& reduced() const noexcept { return reduced_; }
  const Composition& composition() const noexcept { return composition_; }
  const std::string& anchor_species() const noexcept { return anchor_species_; }
  const std::vector<std::size_t>& anchor_sites() const noexcept { return anchor_sites_; }

 private:
  std::string original_id_;
  Structure reduced_;
  Composition composition_;
  std::string anchor_species_;
  std::vector<std::size_t> anchor_sites_;
};

/// Pairwise comparison state. Lattice candidates are enumerated once at the
/// ceiling tolerances and each candidate's optimal site assignment is cached,
/// so repeated queries at smaller tolerances (boundary searches, sweeps) are
/// cheap. A query returns exactly what a fresh match at those tolerances would.
class MatchSession {
 public:
  MatchSession(const PreparedStructure& s1, const PreparedStructure& s2, double ltol_ceiling = 0.3,
               double angle_ceiling = 10.0)
      : s1_(s1), s2_(s2), ltol_ceiling_(ltol_ceiling), angle_ceiling_(angle_ceiling) {
    comparable_ = s1.composition().same_reduced(s2.composition()) && s1.reduced().size() == s2.reduced().size();
    if (comparable_) {
      candidates_ = detail::lattice_candidates(s1.reduced().lattice(), s2.reduced().lattice(), ltol_ceiling,
                                               angle_ceiling);
      evals_.resize(candidates_.size());
    }
  }

  bool comparable() const noexcept { return comparable_; }

  std::optional<MatchResult> query(const MatchTolerances& tol, const MatchOptions& opts = {}) {
    tol.validate();
    if (!comparable_) return std::nullopt;
    if (tol.ltol > ltol_ceiling_ || tol.angle_tol > angle_ceiling_)
      throw ContractError("query tolerances exceed the session ceilings");
    const Eval* best = nullptr;
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < candidates_.size(); ++c) {
      const auto& cand = candidates_[c];
      if (!opts.allow_improper && !cand.proper) continue;
      if (!cand.admitted(tol.ltol, tol.angle_tol)) continue;
      const Eval& e = evaluate(c);
      // ties prefer a proper motion, then the lexicographically first candidate
      const bool better = !best || e.rmse < best->rmse - kTieEps ||
                          (e.rmse <= best->rmse + kTieEps && cand.proper && !candidates_[best_idx].proper);
      if (better) best = &e, best_idx = c;
    }
    if (!best || !(best->rmse <= tol.stol)) return std::nullopt;
    return MatchResult{best->rmse, best->max_dist, best->mapping, UnimodularTransform(candidates_[best_idx].m),
                       candidates_[best_idx].proper};
  }

 private:
  struct Eval {
    double rmse = std::numeric_limits<double>::infinity();
    double max_dist = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> mapping;
  };

  static constexpr double kTieEps = 1e-12;

  const Eval& evaluate(std::size_t c) {
    if (!evals_[c]) evals_[c] = compute(candidates_[c].m);
    return *evals_[c];
  }

  // Best site assignment for one lattice correspondence.
  Eval compute(const IntMat3& m) const {
    const Structure& a = s1_.reduced();
    const Structure& b = s2_.reduced();
    const std::size_t n = a.size();
    const Mat3 l1 = a.lattice().basis();
    const Mat3 t = m.cast<double>() * b.lattice().basis();
    const Mat3 q = detail::polar_orthogonal(t.inverse() * l1);
    const Mat3 avg = 0.5 * (l1 + t * q);
    const Mat3 avg_t = avg.transpose();
    const double volume = std::abs(avg.determinant());

    // Second structure's fractional coordinates on the M * L2 basis.
    const Mat3 minv_t = unimodular_inverse(m).cast<double>().transpose();
    std::vector<Vec3> fb(n);
    for (std::size_t j = 0; j < n; ++j) fb[j] = minv_t * b.frac_coords()[j];
    const auto& fa = a.frac_coords();

    // Species blocks.
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> blocks;
    for (std::size_t i = 0; i < n; ++i) blocks[a.species()[i]].first.push_back(i);
    for (std::size_t j = 0; j < n; ++j) blocks[b.species()[j]].second.push_back(j);

    // Translations placing an anchor of one structure on each same-species
    // site of the other, in both directions.
    std::vector<Vec3> shifts;
    const std::size_t anchor_b = s2_.anchor_sites().front();
    const std::size_t anchor_a = s1_.anchor_sites().front();
    for (std::size_t i : s1_.anchor_sites()) shifts.push_back(fa[i] - fb[anchor_b]);
    for (std::size_t j : s2_.anchor_sites()) shifts.push_back(fa[anchor_a] - fb[j]);

    // Shortest image of a fractional displacement on the averaged lattice.
    auto shortest = [&](const Vec3& d0) {
      const Vec3 d = min_image_frac(d0);
      Vec3 best = d;
      double best2 = (avg_t * d).squaredNorm();
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
          for (int k = -1; k <= 1; ++k) {
            if (!i && !j && !k) continue;
            const Vec3 e = d + Vec3(i, j, k);
            const double e2 = (avg_t * e).squaredNorm();
            if (e2 < best2) best2 = e2, best = e;
          }
      return best;
    };

    Eval best;
    std::vector<Vec3> frac_disp(n), cart(n);
    std::vector<std::size_t> mapping(n);
    for (Vec3 shift : shifts) {
      double prev = std::numeric_limits<double>::infinity();
      for (int iter = 0; iter < 4; ++iter) {
        for (const auto& [el, blk] : blocks) {
          const auto& [rows, cols] = blk;
          const std::size_t k = rows.size();
          std::vector<double> cost(k * k);
          std::vector<Vec3> disp(k * k);
          for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) {
              const Vec3 d = shortest(fb[cols[c]] + shift - fa[rows[r]]);
              disp[r * k + c] = d;
              cost[r * k + c] = (avg_t * d).squaredNorm();
            }
          const auto assign = solve_assignment(cost, k);
          for (std::size_t r = 0; r < k; ++r) {
            const std::size_t c = assign[r];
            mapping[cols[c]] = rows[r];
            frac_disp[cols[c]] = disp[r * k + c];
          }
        }
        Vec3 mean = Vec3::Zero();
        for (const auto& d : frac_disp) mean += d;
        mean /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) cart[j] = avg_t * (frac_disp[j] - mean);
        const auto r = normalized_rmsd(cart, volume, n);
        if (r.rmse < best.rmse) best = {r.rmse, r.max_dist, mapping};
        if (!(r.rmse < prev - 1e-15)) break;
        prev = r.rmse;
        shift -= mean;
      }
    }
    return best;
  }

  const PreparedStructure& s1_;
  const PreparedStructure& s2_;
  double ltol_ceiling_;
  double angle_ceiling_;
  bool comparable_ = false;
  std::vector<detail::LatticeCandidate> candidates_;
  std::vector<std::optional<Eval>> evals_;
};

/// Match two prepared structures. Absent result means "not matching".
inline std::optional<MatchResult> match_prepared(const PreparedStructure& s1, const PreparedStructure& s2,
                                                 const MatchTolerances& tol = {}, const MatchOptions& opts = {}) {
  tol.validate();
  MatchSession session(s1, s2, tol.ltol, tol.angle_tol);
  return session.query(tol, opts);
}

/// Reduces both inputs to Niggli primitive cells, then searches lattice
/// correspondences within (ltol, angle_tol) and site assignments, returning the
/// minimum-rmse alignment if it is within stol.
inline std::optional<MatchResult> match_structures(const Structure& s1, const Structure& s2,
                                                   const MatchTolerances& tol = {}, const MatchOptions& opts = {}) {
  tol.validate();
  if (!reduced_composition(s1).same_reduced(reduced_composition(s2))) return std::nullopt;
  return match_prepared(PreparedStructure(s1), PreparedStructure(s2), tol, opts);
}

}  // namespace xtal
