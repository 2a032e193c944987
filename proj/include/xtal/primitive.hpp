#pragma once

#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "xtal/niggli.hpp"

namespace xtal {

namespace detail {

/// Smallest Cartesian length of d + n over the 27 neighbouring images, for a
/// fractional displacement d on a (reasonably reduced) lattice.
inline double min_image_distance(const Vec3& frac_delta, const Mat3& basis) {
  const Vec3 d = min_image_frac(frac_delta);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        const Vec3 c = basis.transpose() * (d + Vec3(i, j, k));
        best = std::min(best, c.squaredNorm());
      }
  return std::sqrt(best);
}

/// Row echelon basis of the integer row lattice spanned by `rows` (rank 3).
inline std::optional<IntMat3> integer_row_basis(std::vector<Eigen::Matrix<std::int64_t, 1, 3>> rows) {
  const std::size_t m = rows.size();
  for (std::size_t c = 0; c < 3; ++c) {
    for (;;) {
      std::size_t pivot = m;
      for (std::size_t r = c; r < m; ++r)
        if (rows[r](c) != 0 && (pivot == m || std::llabs(rows[r](c)) < std::llabs(rows[pivot](c)))) pivot = r;
      if (pivot == m) return std::nullopt;  // rank deficient
      std::swap(rows[c], rows[pivot]);
      bool done = true;
      for (std::size_t r = c + 1; r < m; ++r) {
        if (rows[r](c) == 0) continue;
        const std::int64_t q = rows[r](c) / rows[c](c);
        rows[r] -= q * rows[c];
        if (rows[r](c) != 0) done = false;
      }
      if (done) break;
    }
  }
  IntMat3 out;
  for (int i = 0; i < 3; ++i) out.row(i) = rows[static_cast<std::size_t>(i)];
  return out;
}

/// Least frequent species symbol, ties broken alphabetically.
inline std::string least_frequent_species(const std::vector<std::string>& species) {
  std::map<std::string, int> counts;
  for (const auto& s : species) ++counts[s];
  std::string best;
  int best_n = std::numeric_limits<int>::max();
  for (const auto& [el, n] : counts)
    if (n < best_n) best = el, best_n = n;
  return best;
}

}  // namespace detail

/// Default symmetry precision for primitive-cell search (Angstrom).
inline constexpr double kDefaultSymprec = 1e-3;

/// Smallest cell generating the same crystal. Candidate pure translations are
/// inter-site vectors of the least frequent species, each validated against
/// every site within `symprec`. The result is Niggli reduced; an input with no
/// internal translation is returned unchanged.
inline Structure primitive_cell(const Structure& input, double symprec = kDefaultSymprec) {
  if (!(symprec > 0)) throw ContractError("symprec must be positive");
  const std::size_t n = input.size();
  if (n == 1) return input;

  const Structure s = niggli_reduce(input);
  const Mat3& basis = s.lattice().basis();
  const auto& f = s.frac_coords();
  const auto& sp = s.species();

  const std::string anchor_species = detail::least_frequent_species(sp);
  std::size_t anchor = 0;
  while (sp[anchor] != anchor_species) ++anchor;

  // For each accepted translation, the site permutation it induces.
  std::vector<Vec3> translations{Vec3::Zero()};
  std::vector<std::vector<std::size_t>> perms;
  {
    std::vector<std::size_t> id(n);
    for (std::size_t i = 0; i < n; ++i) id[i] = i;
    perms.push_back(std::move(id));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (j == anchor || sp[j] != anchor_species) continue;
    const Vec3 t = min_image_frac(f[j] - f[anchor]);
    std::vector<std::size_t> perm(n);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      ok = false;
      for (std::size_t k = 0; k < n; ++k) {
        if (sp[k] != sp[i]) continue;
        if (detail::min_image_distance(f[i] + t - f[k], basis) <= symprec) {
          perm[i] = k;
          ok = true;
          break;
        }
      }
    }
    if (ok) {
      translations.push_back(t);
      perms.push_back(std::move(perm));
    }
  }

  const std::size_t k = translations.size();
  if (k == 1 || n % k != 0) return input;

  // k * (superlattice) is an integer lattice generated by k*e_i and k*t.
  std::vector<Eigen::Matrix<std::int64_t, 1, 3>> gens;
  const auto kk = static_cast<std::int64_t>(k);
  for (int i = 0; i < 3; ++i) {
    Eigen::Matrix<std::int64_t, 1, 3> e = Eigen::Matrix<std::int64_t, 1, 3>::Zero();
    e(i) = kk;
    gens.push_back(e);
  }
  for (const auto& t : translations) {
    Eigen::Matrix<std::int64_t, 1, 3> g;
    for (int c = 0; c < 3; ++c) {
      const double x = t[c] * static_cast<double>(k);
      if (std::abs(x - std::round(x)) > 0.05) return input;  // not a finite translation group
      g(c) = std::llround(x);
    }
    gens.push_back(g);
  }
  const auto h = detail::integer_row_basis(gens);
  if (!h || std::llabs(det(*h)) != kk * kk) return input;

  const Mat3 p = h->cast<double>() / static_cast<double>(k);  // new basis in old fractional units
  const Mat3 new_basis = p * basis;
  const Mat3 p_inv_t = p.inverse().transpose();

  // Orbits of sites under the translation group; one averaged site per orbit.
  std::vector<bool> seen(n, false);
  std::vector<std::string> species;
  std::vector<Vec3> frac;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    Vec3 acc = Vec3::Zero();
    for (std::size_t g = 0; g < k; ++g) {
      const std::size_t m = perms[g][i];
      if (seen[m]) return input;
      seen[m] = true;
      acc += f[i] + min_image_frac(f[m] - translations[g] - f[i]);
    }
    species.push_back(sp[i]);
    frac.push_back(p_inv_t * (acc / static_cast<double>(k)));
  }
  if (species.size() * k != n) return input;

  Structure prim(Lattice(new_basis), std::move(species), std::move(frac), input.id(), input.energy(), input.tags());
  return niggli_reduce(prim);
}

}  // namespace xtal
