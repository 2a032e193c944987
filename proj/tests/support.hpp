#pragma once

#include <random>
#include <string>
#include <vector>

#include "xtal/structure.hpp"

namespace xtal::testing {

/// Random valid lattice: lengths in [lo, hi] Angstrom, angles in [60, 120] degrees.
template <class Rng>
Lattice random_lattice(Rng& rng, double lo = 3.0, double hi = 7.0) {
  std::uniform_real_distribution<double> len(lo, hi), ang(60.0, 120.0);
  for (;;) {
    const double a = len(rng), b = len(rng), c = len(rng);
    const double al = ang(rng), be = ang(rng), ga = ang(rng);
    try {
      Lattice l = Lattice::from_parameters(a, b, c, al, be, ga);
      // keep reasonably conditioned cells
      if (l.volume() > 0.35 * a * b * c) return l;
    } catch (const ContractError&) {
    }
  }
}

/// Random structure on the given species list. Sites are kept at least
/// min_sep Angstrom apart.
template <class Rng>
Structure random_structure_of(Rng& rng, std::vector<std::string> species, std::string id = "s",
                              double min_sep = 1.0) {
  const double vol_per_atom = 12.0;
  const std::size_t n_atoms = species.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    Lattice lat = random_lattice(rng);
    const double scale = std::cbrt(vol_per_atom * static_cast<double>(n_atoms) / lat.volume());
    lat = Lattice(lat.basis() * scale);
    std::vector<Vec3> frac;
    bool ok = true;
    for (std::size_t i = 0; i < n_atoms && ok; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const Vec3 f(u(rng), u(rng), u(rng));
        placed = true;
        for (const auto& g : frac) {
          Vec3 d = min_image_frac(f - g);
          double best = 1e300;
          for (int a = -1; a <= 1; ++a)
            for (int b = -1; b <= 1; ++b)
              for (int c = -1; c <= 1; ++c)
                best = std::min(best, (lat.basis().transpose() * (d + Vec3(a, b, c))).norm());
          if (best < min_sep) {
            placed = false;
            break;
          }
        }
        if (placed) frac.push_back(f);
      }
      ok = placed;
    }
    if (ok) return Structure(lat, species, std::move(frac), id);
  }
}

/// Random structure with n_atoms sites drawn from the first n_species of `pool`.
template <class Rng>
Structure random_structure(Rng& rng, std::size_t n_atoms, std::size_t n_species, std::string id = "s",
                           const std::vector<std::string>& pool = {"C", "O", "Si", "N", "Ti", "Fe"},
                           double min_sep = 1.0) {
  std::vector<std::string> species;
  for (std::size_t i = 0; i < n_atoms; ++i) species.push_back(pool[i < n_species ? i : i % n_species]);
  return random_structure_of(rng, std::move(species), std::move(id), min_sep);
}

/// Species list Si O_i; distinct i give distinct reduced compositions.
inline std::vector<std::string> silicon_oxide(std::size_t i) {
  std::vector<std::string> out{"Si"};
  out.insert(out.end(), i, "O");
  return out;
}

/// Same composition, unrelated geometry.
template <class Rng>
Structure polymorph_of(Rng& rng, const Structure& s, std::string id) {
  return random_structure_of(rng, s.species(), std::move(id));
}

/// Lattice strain applied on top of an existing structure.
inline Structure strained(const Structure& s, const Mat3& strain) {
  return Structure(Lattice(s.lattice().basis() * strain), s.species(), s.frac_coords(), s.id(), s.energy(),
                   s.tags());
}

/// Right-handed four-fold screw of four atoms in a tetragonal cell (chiral).
inline Structure chiral_helix(std::string id = "helix") {
  const double a = 3.2, c = 7.5;
  const double r = 1.0, phase = 0.3;
  std::vector<Vec3> cart;
  for (int k = 0; k < 4; ++k) {
    const double th = phase + k * std::numbers::pi / 2.0;
    cart.push_back({a / 2 + r * std::cos(th), a / 2 + r * std::sin(th), c * k / 4.0});
  }
  Mat3 basis = Mat3::Zero();
  basis(0, 0) = a;
  basis(1, 1) = a;
  basis(2, 2) = c;
  return Structure::from_cartesian(Lattice(basis), {"C", "C", "C", "C"}, cart, std::move(id));
}

/// Layered structure with a mirror plane z -> -z, hence achiral.
inline Structure achiral_layer(std::string id = "layer") {
  Mat3 basis;
  basis << 3.1, 0, 0, 0.7, 3.6, 0, 0, 0, 5.0;
  return Structure(Lattice(basis), {"C", "C", "O"}, {{0.1, 0.2, 0.0}, {0.55, 0.3, 0.0}, {0.3, 0.75, 0.5}},
                   std::move(id));
}

}  // namespace xtal::testing
