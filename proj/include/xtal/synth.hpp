#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>

#include "xtal/structure.hpp"

namespace xtal {

struct SynthOptions {
  bool proper_only = true;  // forbid a Cartesian reflection
  bool translate = true;
  bool rotate = true;
  bool permute = true;
  int supercell_max = 1;    // replicate along one axis by 1..supercell_max
  double noise_std = 0.0;   // Gaussian Cartesian noise per component (Angstrom)
};

/// Product of at most `max_ops` elementary shears and swaps. With `proper`,
/// the determinant is forced to +1.
template <class Rng>
UnimodularTransform random_unimodular(Rng& rng, bool proper, int max_ops = 6) {
  std::uniform_int_distribution<int> count(1, max_ops), axis(0, 2), kind(0, 2), sign(0, 1);
  IntMat3 m = IntMat3::Identity();
  const int ops = count(rng);
  for (int o = 0; o < ops; ++o) {
    const int i = axis(rng);
    int j = axis(rng);
    if (j == i) j = (i + 1) % 3;
    IntMat3 e = IntMat3::Identity();
    if (kind(rng) == 0) {
      e.row(i).swap(e.row(j));
    } else {
      e(i, j) = sign(rng) ? 1 : -1;
    }
    m = e * m;
  }
  if (proper && det(m) < 0) m = -m;
  return UnimodularTransform(m);
}

/// Haar-random rotation; `improper` composes it with a reflection.
template <class Rng>
Mat3 random_orthogonal(Rng& rng, bool improper) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  Mat3 r = q.toRotationMatrix();
  if (improper) r.row(0) = -r.row(0);
  return r;
}

/// Another unit-cell representation of the same crystal: optional supercell,
/// random basis change, rigid motion, origin shift, site permutation and noise.
/// Deterministic in (seed, opts). With noise_std = 0 the output is the same
/// crystal. The tag "synth_parity" records whether a reflection was applied.
inline Structure synth_equivalent_cell(const Structure& s, std::uint64_t seed, const SynthOptions& opts = {}) {
  if (opts.supercell_max < 1) throw ContractError("supercell_max must be >= 1");
  if (!(opts.noise_std >= 0)) throw ContractError("noise_std must be >= 0");
  std::mt19937_64 rng(seed);

  std::uniform_int_distribution<int> mult(1, opts.supercell_max), axis(0, 2), coin(0, 1);
  const int k = mult(rng);
  const int ax = axis(rng);
  Structure out = make_supercell(s, ax == 0 ? k : 1, ax == 1 ? k : 1, ax == 2 ? k : 1);

  out = apply_unimodular(out, random_unimodular(rng, opts.proper_only));

  bool improper = false;
  if (opts.rotate || !opts.proper_only) {
    improper = !opts.proper_only && coin(rng) == 1;
    Mat3 op = opts.rotate ? random_orthogonal(rng, improper) : Mat3::Identity();
    if (!opts.rotate && improper) op(0, 0) = -1;
    out = apply_orthogonal(out, op);
  }

  std::vector<std::string> species = out.species();
  std::vector<Vec3> frac = out.frac_coords();
  if (opts.translate) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 shift(u(rng), u(rng), u(rng));
    for (auto& f : frac) f += shift;
  }
  if (opts.noise_std > 0) {
    std::normal_distribution<double> g(0.0, opts.noise_std);
    const Eigen::PartialPivLU<Mat3> lu(out.lattice().basis().transpose());
    for (auto& f : frac) f += lu.solve(Vec3(g(rng), g(rng), g(rng)));
  }
  if (opts.permute) {
    std::vector<std::size_t> order(species.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> sp2;
    std::vector<Vec3> f2;
    for (auto i : order) sp2.push_back(species[i]), f2.push_back(frac[i]);
    species = std::move(sp2);
    frac = std::move(f2);
  }

  auto tags = s.tags();
  tags["synth_parity"] = improper ? "improper" : "proper";
  return Structure(out.lattice(), std::move(species), std::move(frac), s.id(), s.energy(), std::move(tags));
}

}  // namespace xtal
