#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "xtal/structure.hpp"

namespace xtal {

struct NiggliResult {
  Lattice reduced;
  UnimodularTransform transform;  // reduced.basis == transform * input.basis
};

namespace detail {

// Reduction state: basis rows plus the accumulated integer transform.
struct NiggliState {
  std::array<Vec3, 3> v;
  IntMat3 t;

  double A() const { return v[0].squaredNorm(); }
  double B() const { return v[1].squaredNorm(); }
  double C() const { return v[2].squaredNorm(); }
  double xi() const { return 2.0 * v[1].dot(v[2]); }
  double eta() const { return 2.0 * v[0].dot(v[2]); }
  double zeta() const { return 2.0 * v[0].dot(v[1]); }

  void swap_rows(int i, int j) {
    std::swap(v[i], v[j]);
    t.row(i).swap(t.row(j));
  }
  void negate(int i) {
    v[i] = -v[i];
    t.row(i) = -t.row(i);
  }
  // row i += k * row j
  void add(int i, int j, std::int64_t k) {
    v[i] += static_cast<double>(k) * v[j];
    t.row(i) += k * t.row(j);
  }
};

inline int sign_eps(double x, double eps) { return x > eps ? 1 : (x < -eps ? -1 : 0); }

// Flip row signs (with even parity, so det stays +1) until every product
// pattern in `want` holds: want = +1 requires the off-diagonal term > eps,
// want = -1 requires it <= eps.
inline bool apply_sign_pattern(NiggliState& s, int want, double eps) {
  static constexpr std::array<std::array<int, 3>, 4> kFlips{{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}};
  const double xi = s.xi(), eta = s.eta(), zeta = s.zeta();
  for (const auto& f : kFlips) {
    const double nxi = f[1] * f[2] * xi, neta = f[0] * f[2] * eta, nzeta = f[0] * f[1] * zeta;
    const bool ok = want > 0 ? (nxi > eps && neta > eps && nzeta > eps) : (nxi <= eps && neta <= eps && nzeta <= eps);
    if (ok) {
      for (int i = 0; i < 3; ++i)
        if (f[i] < 0) s.negate(i);
      return true;
    }
  }
  return false;
}

// Size reduction by nearest-integer projections. Cheap unimodular
// pre-conditioning so skewed inputs need few Niggli iterations.
inline void size_reduce(NiggliState& s) {
  for (int pass = 0; pass < 64; ++pass) {
    bool changed = false;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        const double k = std::round(s.v[i].dot(s.v[j]) / s.v[j].squaredNorm());
        if (k != 0.0 && (s.v[i] - k * s.v[j]).squaredNorm() < s.v[i].squaredNorm() * (1.0 - 1e-12)) {
          s.add(i, j, -static_cast<std::int64_t>(k));
          changed = true;
        }
      }
    if (!changed) return;
  }
}

}  // namespace detail

/// Default stabilization epsilon for niggli_reduce: 1e-5 * V^(1/3).
inline double niggli_default_eps(const Lattice& lattice) { return 1e-5 * std::cbrt(lattice.volume()); }

/// Krivy-Gruber reduction with epsilon-stabilized comparisons.
/// Throws ConvergenceError if the main loop exceeds `max_iter` passes.
inline NiggliResult niggli_reduce(const Lattice& lattice, std::optional<double> eps_opt = std::nullopt,
                                  int max_iter = 100) {
  const double eps = eps_opt.value_or(niggli_default_eps(lattice));
  if (!(eps > 0)) throw ContractError("niggli eps must be positive");

  detail::NiggliState s{{lattice.vector(0), lattice.vector(1), lattice.vector(2)}, IntMat3::Identity()};
  detail::size_reduce(s);
  // Work with a right-handed basis; the sign is restored at the end.
  const bool left_handed = Mat3(lattice.basis()).determinant() < 0;
  if (left_handed) s.negate(2);

  using detail::sign_eps;
  int iter = 0;
  for (;; ++iter) {
    if (iter >= max_iter) throw ConvergenceError("Niggli reduction did not converge (degenerate lattice?)");

    // A1
    if (s.A() > s.B() + eps || (std::abs(s.A() - s.B()) <= eps && std::abs(s.xi()) > std::abs(s.eta()) + eps)) {
      s.swap_rows(0, 1);
      s.negate(2);  // keep det +1
    }
    // A2
    if (s.B() > s.C() + eps || (std::abs(s.B() - s.C()) <= eps && std::abs(s.eta()) > std::abs(s.zeta()) + eps)) {
      s.swap_rows(1, 2);
      s.negate(0);
      continue;
    }
    // A3 / A4
    const int l = sign_eps(s.xi(), eps), m = sign_eps(s.eta(), eps), n = sign_eps(s.zeta(), eps);
    if (l * m * n > 0) {
      detail::apply_sign_pattern(s, +1, eps);
    } else {
      // an even-parity pattern always exists when l*m*n <= 0
      detail::apply_sign_pattern(s, -1, eps);
    }

    const double A = s.A(), B = s.B(), xi = s.xi(), eta = s.eta(), zeta = s.zeta();
    // A5
    if (std::abs(xi) > B + eps || (std::abs(xi - B) <= eps && 2 * eta < zeta - eps) ||
        (std::abs(xi + B) <= eps && zeta < -eps)) {
      s.add(2, 1, xi > 0 ? -1 : 1);
      continue;
    }
    // A6
    if (std::abs(eta) > A + eps || (std::abs(eta - A) <= eps && 2 * xi < zeta - eps) ||
        (std::abs(eta + A) <= eps && zeta < -eps)) {
      s.add(2, 0, eta > 0 ? -1 : 1);
      continue;
    }
    // A7
    if (std::abs(zeta) > A + eps || (std::abs(zeta - A) <= eps && 2 * xi < eta - eps) ||
        (std::abs(zeta + A) <= eps && eta < -eps)) {
      s.add(1, 0, zeta > 0 ? -1 : 1);
      continue;
    }
    // A8
    const double sum = xi + eta + zeta + A + B;
    if (sum < -eps || (std::abs(sum) <= eps && 2 * (A + eta) + zeta > eps)) {
      s.add(2, 0, 1);
      s.add(2, 1, 1);
      continue;
    }
    break;
  }

  if (left_handed) {
    for (int i = 0; i < 3; ++i) s.negate(i);
  }
  // Rebuild from the exact integer transform so reduced == T * input holds to rounding.
  return {Lattice(s.t.cast<double>() * lattice.basis()), UnimodularTransform(s.t)};
}

/// Structure re-expressed on its Niggli-reduced lattice.
inline Structure niggli_reduce(const Structure& s, std::optional<double> eps = std::nullopt) {
  return apply_unimodular(s, niggli_reduce(s.lattice(), eps).transform);
}

}  // namespace xtal
