// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic first-order Markov corpus with a known transition matrix, so
// tests can compare learned perplexity against the exact optimum and
// against a count-based unigram baseline.
//
// The chain has 49 states: state 0 renders as a line break (the encoder
// turns line ends back into the sentence boundary token, so the encoded
// stream reproduces the chain exactly), states 1..48 render as words
// "w1".."w48". Transition logits have rank kEmbedDim, well under the
// model dimension used in tests, so the true conditional is inside the
// model family and the perplexity gap measures optimization alone.

#pragma once

#include "pmilm/rng.hpp"
#include "pmilm/util.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmilm_test {

struct MarkovFixture {
  static constexpr int kStates = 49;
  static constexpr int kEmbedDim = 8;
  static constexpr double kLogitScale = 1.6;
  static constexpr std::uint64_t kSeed = 20260814;

  pmilm::RowMatrixXd transitions;       // row-stochastic kStates x kStates
  std::vector<int> train, valid, test;  // state streams, each ends at state 0

  static MarkovFixture make(std::uint64_t seed = kSeed) {
    MarkovFixture f;
    pmilm::Rng rng(seed);

    pmilm::RowMatrixXd u(kStates, kEmbedDim), v(kStates, kEmbedDim);
    for (int s = 0; s < kStates; ++s) {
      for (int j = 0; j < kEmbedDim; ++j) {
        u(s, j) = rng.uniform(-kLogitScale, kLogitScale);
        v(s, j) = rng.uniform(-kLogitScale, kLogitScale);
      }
    }
    const pmilm::RowMatrixXd logits = u * v.transpose();
    f.transitions.resize(kStates, kStates);
    for (int s = 0; s < kStates; ++s) {
      const double m = logits.row(s).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(s).array() - m).exp();
      f.transitions.row(s) = e / e.sum();
    }

    int cur = 0;
    auto draw_segment = [&](std::size_t min_len) {
      std::vector<int> seg;
      seg.reserve(min_len + 64);
      while (seg.size() < min_len || seg.back() != 0) {
        const double coin = rng.next_double();
        double acc = 0.0;
        int next = kStates - 1;
        for (int s = 0; s < kStates; ++s) {
          acc += f.transitions(cur, s);
          if (coin < acc) {
            next = s;
            break;
          }
        }
        seg.push_back(next);
        cur = next;
      }
      return seg;
    };
    f.train = draw_segment(50000);
    f.valid = draw_segment(5000);
    f.test = draw_segment(5000);
    return f;
  }

  // Renders a state stream as corpus text; state 0 becomes a line break.
  static std::string to_text(const std::vector<int>& states) {
    std::string out;
    out.reserve(states.size() * 4);
    bool line_open = false;
    for (const int s : states) {
      if (s == 0) {
        out += '\n';
        line_open = false;
      } else {
        if (line_open) out += ' ';
        out += 'w';
        out += std::to_string(s);
        line_open = true;
      }
    }
    if (line_open) {
      throw std::logic_error("fixture stream must end at state 0");
    }
    return out;
  }

  // Cross entropy of a split under the generating chain, as perplexity.
  // The first token is conditioned on state 0, matching both how splits
  // are cut and how the scorer bootstraps from the boundary token.
  double true_perplexity(const std::vector<int>& states) const {
    if (states.empty()) {
      throw std::invalid_argument("true_perplexity: empty split");
    }
    double lp = 0.0;
    int prev = 0;
    for (const int s : states) {
      lp += std::log(transitions(prev, s));
      prev = s;
    }
    return std::exp(-lp / static_cast<double>(states.size()));
  }

  // Count-based unigram baseline: probabilities from the train split,
  // perplexity on the eval split.
  double unigram_perplexity(const std::vector<int>& eval_states) const {
    std::vector<double> counts(kStates, 0.0);
    for (const int s : train) counts[static_cast<std::size_t>(s)] += 1.0;
    const double total = static_cast<double>(train.size());
    double lp = 0.0;
    for (const int s : eval_states) {
      const double c = counts[static_cast<std::size_t>(s)];
      if (c <= 0.0) {
        throw std::runtime_error("unigram_perplexity: unseen state in eval");
      }
      lp += std::log(c / total);
    }
    return std::exp(-lp / static_cast<double>(eval_states.size()));
  }
};

}  // namespace pmilm_test
