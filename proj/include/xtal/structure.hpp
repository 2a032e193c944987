#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "xtal/lattice.hpp"

namespace xtal {

/// A periodic crystal: lattice plus a basis of atoms in fractional
/// coordinates. Coordinates are stored wrapped into [0, 1).
class Structure {
 public:
  Structure(Lattice lattice, std::vector<std::string> species, std::vector<Vec3> frac_coords, std::string id = {},
            std::optional<double> energy = std::nullopt, std::map<std::string, std::string> tags = {})
      : lattice_(std::move(lattice)),
        species_(std::move(species)),
        frac_(std::move(frac_coords)),
        id_(std::move(id)),
        energy_(energy),
        tags_(std::move(tags)) {
    if (species_.empty()) throw ContractError("structure needs at least one site");
    if (species_.size() != frac_.size())
      throw ContractError("species count (" + std::to_string(species_.size()) + ") != coordinate count (" +
                          std::to_string(frac_.size()) + ")");
    for (auto& f : frac_) {
      if (!f.allFinite()) throw ContractError("non-finite fractional coordinate");
      f = wrap_unit(f);
    }
  }

  static Structure from_cartesian(Lattice lattice, std::vector<std::string> species, const std::vector<Vec3>& cart,
                                  std::string id = {}) {
    std::vector<Vec3> frac;
    frac.reserve(cart.size());
    const Eigen::PartialPivLU<Mat3> lu(lattice.basis().transpose());
    for (const auto& c : cart) frac.push_back(lu.solve(c));
    return Structure(std::move(lattice), std::move(species), std::move(frac), std::move(id));
  }

  const Lattice& lattice() const noexcept { return lattice_; }
  const std::vector<std::string>& species() const noexcept { return species_; }
  const std::vector<Vec3>& frac_coords() const noexcept { return frac_; }
  const std::string& id() const noexcept { return id_; }
  const std::optional<double>& energy() const noexcept { return energy_; }
  const std::map<std::string, std::string>& tags() const noexcept { return tags_; }
  std::size_t size() const noexcept { return species_.size(); }

  Vec3 cartesian(std::size_t i) const { return lattice_.to_cartesian(frac_[i]); }
  std::vector<Vec3> cartesian_coords() const {
    std::vector<Vec3> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(cartesian(i));
    return out;
  }

  Structure with_id(std::string id) const {
    Structure s = *this;
    s.id_ = std::move(id);
    return s;
  }
  Structure with_tags(std::map<std::string, std::string> tags) const {
    Structure s = *this;
    s.tags_ = std::move(tags);
    return s;
  }
  Structure with_energy(std::optional<double> e) const {
    Structure s = *this;
    s.energy_ = e;
    return s;
  }

 private:
  Lattice lattice_;
  std::vector<std::string> species_;
  std::vector<Vec3> frac_;
  std::string id_;
  std::optional<double> energy_;
  std::map<std::string, std::string> tags_;
};

/// Same atoms, new lattice basis M * basis. Cartesian positions are unchanged.
inline Structure apply_unimodular(const Structure& s, const UnimodularTransform& m) {
  const Lattice lattice = s.lattice().transformed(m.matrix());
  // f_old * B = f_new * (M B)  =>  f_new = f_old * M^-1
  const Mat3 inv = unimodular_inverse(m.matrix()).cast<double>();
  std::vector<Vec3> frac;
  frac.reserve(s.size());
  for (const auto& f : s.frac_coords()) frac.push_back(inv.transpose() * f);
  return Structure(lattice, s.species(), std::move(frac), s.id(), s.energy(), s.tags());
}

/// Rigid Cartesian transform x -> x * op (op orthogonal, possibly improper).
/// Fractional coordinates are unchanged; only the lattice embedding moves.
inline Structure apply_orthogonal(const Structure& s, const Mat3& op) {
  return Structure(Lattice(s.lattice().basis() * op), s.species(), s.frac_coords(), s.id(), s.energy(), s.tags());
}

/// Mirror image through the yz-plane.
inline Structure mirror(const Structure& s) {
  return apply_orthogonal(s, Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal().toDenseMatrix());
}

inline Structure translate_frac(const Structure& s, const Vec3& shift) {
  std::vector<Vec3> frac;
  frac.reserve(s.size());
  for (const auto& f : s.frac_coords()) frac.push_back(f + shift);
  return Structure(s.lattice(), s.species(), std::move(frac), s.id(), s.energy(), s.tags());
}

/// Diagonal supercell replication n0 x n1 x n2.
inline Structure make_supercell(const Structure& s, int n0, int n1, int n2) {
  if (n0 < 1 || n1 < 1 || n2 < 1) throw ContractError("supercell multipliers must be >= 1");
  Mat3 basis = s.lattice().basis();
  basis.row(0) *= n0;
  basis.row(1) *= n1;
  basis.row(2) *= n2;
  std::vector<std::string> species;
  std::vector<Vec3> frac;
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j)
      for (int k = 0; k < n2; ++k)
        for (std::size_t a = 0; a < s.size(); ++a) {
          const Vec3& f = s.frac_coords()[a];
          species.push_back(s.species()[a]);
          frac.push_back({(f[0] + i) / n0, (f[1] + j) / n1, (f[2] + k) / n2});
        }
  return Structure(Lattice(basis), std::move(species), std::move(frac), s.id(), s.energy(), s.tags());
}

/// Element counts and their gcd-reduced form.
struct Composition {
  std::map<std::string, int> counts;
  std::map<std::string, int> reduced;

  std::size_t n_arity() const noexcept { return counts.size(); }

  /// Reduced formula with elements in alphabetical order, e.g. "HfN3Nb".
  std::string formula() const {
    std::string out;
    for (const auto& [el, n] : reduced) {
      out += el;
      if (n != 1) out += std::to_string(n);
    }
    return out;
  }

  bool same_reduced(const Composition& o) const { return reduced == o.reduced; }
};

inline Composition composition_of(const std::vector<std::string>& species) {
  Composition c;
  for (const auto& s : species) ++c.counts[s];
  int g = 0;
  for (const auto& [el, n] : c.counts) g = std::gcd(g, n);
  for (const auto& [el, n] : c.counts) c.reduced[el] = n / g;
  return c;
}

inline Composition reduced_composition(const Structure& s) { return composition_of(s.species()); }

}  // namespace xtal
