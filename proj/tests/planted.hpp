#pragma once

#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "xtal/synth.hpp"

namespace xtal::testing {

struct PlantedCorpus {
  std::vector<Structure> structures;
  std::vector<std::set<std::string>> clusters;  // planted groups of size >= 2
  std::size_t n_bases = 0;
};

inline std::string planted_id(std::size_t base, std::size_t copy) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "b%03zu-%zu", base, copy);
  return buf;
}

/// `n_bases` distinct structures, each expanded into 1..max_size equivalent
/// cells by synth. Compositions cycle through a few Si-O ratios so that many
/// unrelated pairs share a composition.
inline PlantedCorpus planted_corpus(std::uint64_t seed, std::size_t n_bases, std::size_t max_size = 4,
                                    double noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size(1, max_size);
  PlantedCorpus out;
  out.n_bases = n_bases;
  SynthOptions opts;
  opts.supercell_max = noise > 0 ? 1 : 2;  // noisy supercells are not primitive-reducible
  opts.noise_std = noise;
  for (std::size_t b = 0; b < n_bases; ++b) {
    const auto base = random_structure_of(rng, silicon_oxide(1 + b % 3), planted_id(b, 0));
    const std::size_t k = size(rng);
    std::set<std::string> members{base.id()};
    out.structures.push_back(base);
    for (std::size_t c = 1; c < k; ++c) {
      out.structures.push_back(synth_equivalent_cell(base, rng(), opts).with_id(planted_id(b, c)));
      members.insert(planted_id(b, c));
    }
    if (k > 1) out.clusters.push_back(members);
  }
  std::shuffle(out.structures.begin(), out.structures.end(), rng);
  return out;
}

}  // namespace xtal::testing
