// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Walker alias table: O(1) draws from the unigram noise distribution.
// Draws are i.i.d.; collisions between noise samples and with the positive
// target are permitted.

#pragma once

#include "pmilm/corpus.hpp"
#include "pmilm/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pmilm {

struct AliasTable {
  std::vector<double> prob;  // acceptance threshold per cell, in [0,1]
  std::vector<int> alias;

  int size() const { return static_cast<int>(prob.size()); }
};

inline AliasTable build_alias(const UnigramDistribution& dist) {
  const int n = dist.size();
  if (n == 0) {
    throw std::invalid_argument("build_alias: empty distribution");
  }
  AliasTable t;
  t.prob.assign(static_cast<std::size_t>(n), 0.0);
  t.alias.assign(static_cast<std::size_t>(n), 0);

  std::vector<double> scaled(static_cast<std::size_t>(n));
  std::vector<int> small, large;
  small.reserve(static_cast<std::size_t>(n));
  large.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    scaled[static_cast<std::size_t>(i)] = dist.probs[static_cast<std::size_t>(i)] * n;
    (scaled[static_cast<std::size_t>(i)] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const int s = small.back();
    const int l = large.back();
    small.pop_back();
    large.pop_back();
    t.prob[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    t.alias[static_cast<std::size_t>(s)] = l;
    scaled[static_cast<std::size_t>(l)] -= 1.0 - scaled[static_cast<std::size_t>(s)];
    (scaled[static_cast<std::size_t>(l)] < 1.0 ? small : large).push_back(l);
  }
  // Leftovers are 1 up to rounding; zero-probability cells stay at 0 and
  // always defer to their alias, so they are never sampled.
  for (int l : large) {
    t.prob[static_cast<std::size_t>(l)] = 1.0;
    t.alias[static_cast<std::size_t>(l)] = l;
  }
  for (int s : small) {
    if (dist.probs[static_cast<std::size_t>(s)] > 0.0) {
      t.prob[static_cast<std::size_t>(s)] = 1.0;
      t.alias[static_cast<std::size_t>(s)] = s;
    }
  }
  return t;
}

inline int draw(const AliasTable& t, Rng& rng) {
  const auto cell =
      static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(t.size())));
  return rng.next_double() < t.prob[cell] ? static_cast<int>(cell)
                                          : t.alias[cell];
}

inline std::vector<int> draw(const AliasTable& t, Rng& rng, std::int64_t n) {
  if (n < 1) {
    throw std::invalid_argument("draw: n must be >= 1");
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& id : out) {
    id = draw(t, rng);
  }
  return out;
}

// log p(w) for the NCE score; undefined on zero-probability words.
inline double log_prob(const UnigramDistribution& dist, int id) {
  if (id < 0 || id >= dist.size()) {
    throw std::out_of_range("log_prob: id out of range");
  }
  const double p = dist.probs[static_cast<std::size_t>(id)];
  if (p <= 0.0) {
    throw std::domain_error("log_prob: zero-probability word " +
                            std::to_string(id));
  }
  return std::log(p);
}

// Noise block for one BPTT step, laid out (t*B + b)*k + i. With
// share_per_step one k-set is drawn and replicated across all positions.
inline std::vector<int> draw_noise(const AliasTable& t, Rng& rng, int batch,
                                   int bptt, int k, bool share_per_step) {
  const std::size_t positions =
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(bptt);
  std::vector<int> out(positions * static_cast<std::size_t>(k));
  if (share_per_step) {
    std::vector<int> shared = draw(t, rng, k);
    for (std::size_t p = 0; p < positions; ++p) {
      std::copy(shared.begin(), shared.end(),
                out.begin() + static_cast<std::ptrdiff_t>(p * shared.size()));
    }
  } else {
    for (auto& id : out) {
      id = draw(t, rng);
    }
  }
  return out;
}

}  // namespace pmilm
