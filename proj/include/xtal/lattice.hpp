#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "xtal/error.hpp"

namespace xtal {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using IntMat3 = Eigen::Matrix<std::int64_t, 3, 3>;

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Wraps a fractional coordinate into [0, 1).
inline double wrap_unit(double x) {
  double w = x - std::floor(x);
  // x = -1e-17 lands on exactly 1.0 after the subtraction
  if (w >= 1.0) w = 0.0;
  return w;
}

inline Vec3 wrap_unit(const Vec3& f) { return {wrap_unit(f[0]), wrap_unit(f[1]), wrap_unit(f[2])}; }

/// Nearest-integer offset, giving a displacement in [-0.5, 0.5].
inline Vec3 min_image_frac(const Vec3& d) {
  return {d[0] - std::round(d[0]), d[1] - std::round(d[1]), d[2] - std::round(d[2])};
}

inline std::int64_t det(const IntMat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// Exact inverse of an integer matrix with determinant +-1.
inline IntMat3 unimodular_inverse(const IntMat3& m) {
  const std::int64_t d = det(m);
  if (d != 1 && d != -1) throw ContractError("matrix is not unimodular");
  IntMat3 adj;
  adj(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  adj(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  adj(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  adj(1, 0) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
  adj(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  adj(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  adj(2, 0) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
  adj(2, 1) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
  adj(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return adj * d;
}

/// Lexicographic order on matrix entries (row-major).
inline bool lex_less(const IntMat3& a, const IntMat3& b) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (a(i, j) != b(i, j)) return a(i, j) < b(i, j);
  return false;
}

/// Integer basis change with determinant +-1.
class UnimodularTransform {
 public:
  UnimodularTransform() : m_(IntMat3::Identity()) {}
  explicit UnimodularTransform(const IntMat3& m) : m_(m) {
    const auto d = xtal::det(m);
    if (d != 1 && d != -1) throw ContractError("unimodular transform requires det = +-1, got " + std::to_string(d));
  }

  static UnimodularTransform identity() { return {}; }

  const IntMat3& matrix() const noexcept { return m_; }
  int det() const noexcept { return static_cast<int>(xtal::det(m_)); }
  UnimodularTransform inverse() const { return UnimodularTransform(unimodular_inverse(m_)); }
  UnimodularTransform operator*(const UnimodularTransform& o) const { return UnimodularTransform(m_ * o.m_); }
  bool operator==(const UnimodularTransform& o) const { return m_ == o.m_; }

 private:
  IntMat3 m_;
};

struct CellParameters {
  double a, b, c;             // Angstrom
  double alpha, beta, gamma;  // degrees

  std::array<double, 6> as_array() const { return {a, b, c, alpha, beta, gamma}; }
};

/// Three lattice vectors stored as the rows of a 3x3 matrix (Angstrom).
/// Cartesian position of fractional coordinate f (row vector) is f * basis.
class Lattice {
 public:
  explicit Lattice(const Mat3& basis) : basis_(basis) {
    if (!basis_.allFinite()) throw ContractError("lattice basis contains non-finite entries");
    const double v = std::abs(basis_.determinant());
    const double scale = basis_.row(0).norm() * basis_.row(1).norm() * basis_.row(2).norm();
    if (!(v > 1e-12 * scale) || !(v > 0.0)) throw ContractError("degenerate lattice basis (zero volume)");
  }

  static Lattice cubic(double a) { return Lattice(Mat3::Identity() * a); }

  /// Canonical embedding: a along x, b in the xy-plane.
  static Lattice from_parameters(double a, double b, double c, double alpha_deg, double beta_deg, double gamma_deg) {
    if (!(a > 0 && b > 0 && c > 0)) throw ContractError("cell lengths must be positive");
    const double ca = std::cos(rad(alpha_deg)), cb = std::cos(rad(beta_deg));
    const double cg = std::cos(rad(gamma_deg)), sg = std::sin(rad(gamma_deg));
    const double cx = c * cb;
    const double cy = c * (ca - cb * cg) / sg;
    const double cz2 = c * c - cx * cx - cy * cy;
    if (!(cz2 > 0)) throw ContractError("cell angles do not form a valid lattice");
    Mat3 m;
    m << a, 0, 0, b * cg, b * sg, 0, cx, cy, std::sqrt(cz2);
    return Lattice(m);
  }

  const Mat3& basis() const noexcept { return basis_; }
  Vec3 vector(int i) const { return basis_.row(i).transpose(); }
  double signed_volume() const { return basis_.determinant(); }
  double volume() const { return std::abs(basis_.determinant()); }
  Mat3 metric() const { return basis_ * basis_.transpose(); }

  Vec3 to_cartesian(const Vec3& frac) const { return basis_.transpose() * frac; }
  Vec3 to_fractional(const Vec3& cart) const { return basis_.transpose().partialPivLu().solve(cart); }

  CellParameters parameters() const {
    const Vec3 a = vector(0), b = vector(1), c = vector(2);
    auto angle = [](const Vec3& u, const Vec3& v) {
      return deg(std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
    };
    return {a.norm(), b.norm(), c.norm(), angle(b, c), angle(a, c), angle(a, b)};
  }

  /// New basis = M * basis.
  Lattice transformed(const IntMat3& m) const { return Lattice(m.cast<double>() * basis_); }

 private:
  Mat3 basis_;
};

inline CellParameters cell_parameters(const Lattice& lattice) { return lattice.parameters(); }

}  // namespace xtal
