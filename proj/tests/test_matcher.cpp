#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "support.hpp"
#include "xtal/matcher.hpp"
#include "xtal/synth.hpp"

using namespace xtal;
using Catch::Approx;

namespace {

// Oracle: every M with entries in [-bound, bound] mapping l2 onto a cell
// congruent to l1 (equal metric tensors).
std::vector<IntMat3> exact_correspondences(const Lattice& l1, const Lattice& l2, int bound) {
  const Mat3 g1 = l1.metric();
  std::array<std::vector<Eigen::Matrix<std::int64_t, 1, 3>>, 3> lists;
  for (int i = -bound; i <= bound; ++i)
    for (int j = -bound; j <= bound; ++j)
      for (int k = -bound; k <= bound; ++k) {
        const Vec3 v = l2.basis().transpose() * Vec3(i, j, k);
        for (int r = 0; r < 3; ++r)
          if (std::abs(v.squaredNorm() - g1(r, r)) < 1e-8) lists[r].push_back({i, j, k});
      }
  std::vector<IntMat3> out;
  for (const auto& a : lists[0])
    for (const auto& b : lists[1])
      for (const auto& c : lists[2]) {
        IntMat3 m;
        m.row(0) = a, m.row(1) = b, m.row(2) = c;
        const auto d = det(m);
        if (d != 1 && d != -1) continue;
        const Mat3 g2 = m.cast<double>() * l2.metric() * m.cast<double>().transpose();
        if ((g2 - g1).cwiseAbs().maxCoeff() < 1e-8) out.push_back(m);
      }
  return out;
}

Structure noisy_copy(const Structure& s, std::uint64_t seed, double noise) {
  SynthOptions o;
  o.noise_std = noise;
  return synth_equivalent_cell(s, seed, o);
}

}  // namespace

TEST_CASE("normalized_rmsd", "[matcher]") {
  SECTION("zero displacements") {
    const std::vector<Vec3> d(3, Vec3::Zero());
    const auto r = normalized_rmsd(d, 10.0, 3);
    REQUIRE(r.rmse == 0.0);
    REQUIRE(r.max_dist == 0.0);
  }
  SECTION("one free length is 1.0") {
    const double v = 27.0;
    const std::vector<Vec3> d{Vec3(std::cbrt(v), 0, 0)};
    const auto r = normalized_rmsd(d, v, 1);
    REQUIRE(r.rmse == Approx(1.0));
    REQUIRE(r.max_dist == Approx(1.0));
  }
  SECTION("hand arithmetic") {
    const std::vector<Vec3> d{{0.1, 0, 0}, {0, 0.2, 0}};
    const auto r = normalized_rmsd(d, 8.0, 2);
    REQUIRE(r.rmse == Approx(std::sqrt((0.01 + 0.04) / 2) / std::cbrt(4.0)).epsilon(1e-14));
    REQUIRE(r.max_dist == Approx(0.2 / std::cbrt(4.0)).epsilon(1e-14));
  }
  SECTION("invalid inputs") {
    const std::vector<Vec3> d{{0.1, 0, 0}};
    REQUIRE_THROWS_AS(normalized_rmsd(d, 8.0, 0), ContractError);
    REQUIRE_THROWS_AS(normalized_rmsd(d, 0.0, 1), ContractError);
  }
}

TEST_CASE("fit_lattices", "[matcher]") {
  SECTION("identical cubic lattices include the identity") {
    const auto l = Lattice::cubic(3.0);
    const auto maps = fit_lattices(l, l, 1, 0.3, 10.0);
    REQUIRE_FALSE(maps.empty());
    REQUIRE(std::any_of(maps.begin(), maps.end(),
                        [](const LatticeMapping& m) { return m.transform.matrix() == IntMat3::Identity(); }));
    for (std::size_t i = 1; i < maps.size(); ++i)
      REQUIRE(lex_less(maps[i - 1].transform.matrix(), maps[i].transform.matrix()));
  }
  SECTION("l2 = M0 l1 is inverted, matching an enumeration oracle") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 25; ++t) {
      const Lattice l1 = niggli_reduce(testing::random_lattice(rng)).reduced;
      const auto m0 = random_unimodular(rng, t % 2 == 0, 2);
      const Lattice l2 = l1.transformed(m0.matrix());
      const auto maps = fit_lattices(l1, l2, 1, 0.3, 10.0);
      std::set<std::vector<std::int64_t>> got;
      for (const auto& m : maps) got.insert({m.transform.matrix().data(), m.transform.matrix().data() + 9});
      const auto oracle = exact_correspondences(l1, l2, 3);
      REQUIRE_FALSE(oracle.empty());
      for (const auto& m : oracle) REQUIRE(got.count({m.data(), m.data() + 9}) == 1);
      const IntMat3 inv = unimodular_inverse(m0.matrix());
      if (inv.cwiseAbs().maxCoeff() <= 3) REQUIRE(got.count({inv.data(), inv.data() + 9}) == 1);
      // aligned lattices are congruent to l1 for exact correspondences
      for (const auto& m : maps) {
        const Mat3 g = m.aligned.metric();
        if ((g - l1.metric()).norm() < 1e-8) REQUIRE((m.aligned.basis() - l1.basis()).norm() < 1e-8);
      }
    }
  }
  SECTION("lengths scaled beyond ltol give an empty stream") {
    const double ltol = 0.3;
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
      const Lattice l1 = niggli_reduce(testing::random_lattice(rng)).reduced;
      const Lattice l2(l1.basis() * (1 + 2 * ltol));
      REQUIRE(fit_lattices(l1, l2, 1, ltol, 10.0).empty());
    }
  }
  SECTION("unsupported ratio") {
    REQUIRE_THROWS_AS(fit_lattices(Lattice::cubic(1), Lattice::cubic(1), 2, 0.3, 10), ContractError);
  }
}

TEST_CASE("match_structures basics", "[matcher]") {
  std::mt19937_64 rng(23);
  const auto s = testing::random_structure(rng, 7, 3);
  SECTION("self match is exact") {
    const auto r = match_structures(s, s);
    REQUIRE(r);
    REQUIRE(r->rmse == 0.0);
    REQUIRE(r->max_dist == 0.0);
    REQUIRE(r->proper);
    std::vector<std::size_t> sorted = r->site_mapping;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) REQUIRE(sorted[i] == i);
  }
  SECTION("proper equivalent cell") {
    SynthOptions o;
    o.supercell_max = 2;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = match_structures(s, synth_equivalent_cell(s, seed, o));
      REQUIRE(r);
      REQUIRE(r->rmse <= 1e-6);
    }
  }
  SECTION("different reduced composition never matches") {
    auto species = s.species();
    species[0] = "Xe";
    const Structure other(s.lattice(), species, s.frac_coords());
    REQUIRE_FALSE(match_structures(s, other, {0.3, 0.5, 10.0}));
    REQUIRE_FALSE(match_structures(s, other, {5.0, 100.0, 90.0}));
  }
  SECTION("uniform shift of fractional coordinates") {
    const auto t = translate_frac(s, Vec3(0.31, -0.12, 0.77));
    const auto r = match_structures(s, t);
    REQUIRE(r);
    REQUIRE(r->rmse <= 1e-6);
  }
  SECTION("stol gates the returned rmse") {
    const auto t = noisy_copy(s, 3, 0.1);
    const auto loose = match_structures(s, t, {0.3, 0.5, 10.0});
    REQUIRE(loose);
    REQUIRE(loose->rmse > 0.0);
    REQUIRE(loose->rmse <= loose->max_dist);
    REQUIRE_FALSE(match_structures(s, t, {0.3, loose->rmse * 0.999, 10.0}));
    REQUIRE(match_structures(s, t, {0.3, loose->rmse * 1.001, 10.0}));
  }
  SECTION("non-positive tolerances rejected") {
    REQUIRE_THROWS_AS(match_structures(s, s, {0.0, 0.5, 10.0}), ContractError);
  }
}

TEST_CASE("matcher symmetry in argument order", "[matcher][property]") {
  std::mt19937_64 rng(31);
  int matched = 0;
  for (int t = 0; t < 60; ++t) {
    const auto s = testing::random_structure(rng, 2 + t % 6, 1 + t % 3);
    const Structure other =
        (t % 3 == 0) ? testing::random_structure(rng, 2 + t % 6, 1 + t % 3) : noisy_copy(s, t, 0.05 + 0.05 * (t % 4));
    const auto ab = match_structures(s, other);
    const auto ba = match_structures(other, s);
    REQUIRE(ab.has_value() == ba.has_value());
    if (ab) {
      ++matched;
      REQUIRE(std::abs(ab->rmse - ba->rmse) <= 1e-8);
      REQUIRE(ab->proper == ba->proper);
    }
  }
  REQUIRE(matched > 20);
}

TEST_CASE("matcher monotonicity in tolerances", "[matcher][property]") {
  std::mt19937_64 rng(37);
  const std::vector<double> ltols{0.02, 0.1, 0.2, 0.3}, stols{0.05, 0.1, 0.2, 0.5}, angles{1.0, 3.0, 5.0, 10.0};
  for (int t = 0; t < 15; ++t) {
    const auto s = testing::random_structure(rng, 3 + t % 4, 1 + t % 2);
    auto other = noisy_copy(s, 100 + t, 0.1);
    // mild strain so lattice tolerances matter
    Mat3 strain = Mat3::Identity();
    strain(0, 1) = 0.03 * (t % 3);
    strain(2, 2) = 1.0 + 0.02 * (t % 4);
    other = Structure(Lattice(other.lattice().basis() * strain), other.species(), other.frac_coords());
    PreparedStructure a(s), b(other);
    MatchSession session(a, b);
    for (double l : ltols)
      for (double st : stols)
        for (double an : angles) {
          const auto base = session.query({l, st, an});
          if (!base) continue;
          for (double l2 : ltols)
            for (double st2 : stols)
              for (double an2 : angles) {
                if (l2 < l || st2 < st || an2 < an) continue;
                const auto bigger = session.query({l2, st2, an2});
                REQUIRE(bigger);
                REQUIRE(bigger->rmse <= base->rmse);
              }
        }
  }
}

TEST_CASE("session queries agree with fresh matches", "[matcher]") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 10; ++t) {
    const auto s = testing::random_structure(rng, 4, 2);
    const auto other = noisy_copy(s, t, 0.08);
    PreparedStructure a(s), b(other);
    MatchSession session(a, b);
    for (const MatchTolerances tol : {MatchTolerances{0.3, 0.5, 10.0}, MatchTolerances{0.05, 0.2, 2.0},
                                      MatchTolerances{0.001, 0.5, 0.5}}) {
      const auto fresh = match_prepared(a, b, tol);
      const auto cached = session.query(tol);
      REQUIRE(fresh.has_value() == cached.has_value());
      if (fresh) REQUIRE(fresh->rmse == cached->rmse);
    }
  }
}

TEST_CASE("proper-only matching", "[matcher][chirality]") {
  SECTION("chiral helix vs its mirror") {
    const auto helix = testing::chiral_helix();
    const auto mirrored = mirror(helix);
    const auto loose = match_structures(helix, mirrored, {}, {.allow_improper = true});
    REQUIRE(loose);
    REQUIRE(loose->rmse <= 1e-6);
    REQUIRE_FALSE(loose->proper);
    const auto strict = match_structures(helix, mirrored, {}, {.allow_improper = false});
    if (strict) REQUIRE(strict->rmse > loose->rmse);
    if (strict) REQUIRE(strict->proper);
  }
  SECTION("achiral structure vs its mirror matches with proper motions") {
    const auto layer = testing::achiral_layer();
    const auto strict = match_structures(layer, mirror(layer), {}, {.allow_improper = false});
    REQUIRE(strict);
    REQUIRE(strict->rmse <= 1e-6);
    REQUIRE(strict->proper);
  }
  SECTION("any structure matches its mirror when improper motions are allowed") {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 20; ++t) {
      const auto s = testing::random_structure(rng, 3 + t % 5, 1 + t % 3);
      const auto r = match_structures(s, mirror(s), {}, {.allow_improper = true});
      REQUIRE(r);
      REQUIRE(r->rmse <= 1e-6);
    }
  }
}

TEST_CASE("rmse grows with synthetic noise", "[matcher][property]") {
  std::mt19937_64 rng(47);
  const auto s = testing::random_structure(rng, 6, 2);
  const std::vector<double> noise{0.0, 0.01, 0.03, 0.06, 0.1};
  std::vector<double> mean(noise.size(), 0.0);
  for (std::size_t k = 0; k < noise.size(); ++k) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto r = match_structures(s, noisy_copy(s, seed, noise[k]));
      REQUIRE(r);
      mean[k] += r->rmse / 100.0;
    }
  }
  for (std::size_t k = 1; k < noise.size(); ++k) REQUIRE(mean[k] >= mean[k - 1]);
}
