// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-time scoring: normalized conditional word distributions, sequence
// log-probability with carried LSTM state, perplexity, and top-k next-word
// inspection. PMI mode renormalizes exp(w.c) p(w) over the vocabulary; NCE
// mode renormalizes exp(w.c + b_w). Evaluation always runs with dropout
// off. The first token of a sequence is scored with <eos> as the bootstrap
// input (sentence-boundary semantics).
//
// Zero-count vocabulary entries (specials that never occurred) get a
// test-time probability floor of 1/(N+|V|) inside p(w) so PMI-mode scoring
// stays finite; words seen in training keep their exact noise probability.

#pragma once

#include "pmilm/corpus.hpp"
#include "pmilm/model.hpp"
#include "pmilm/util.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace pmilm {

struct ConditionalDist {
  Eigen::VectorXd log_probs;  // logsumexp == 0 within 1e-6
};

// log p(w) used at test time only: floored for zero-probability entries.
inline Eigen::VectorXd test_time_log_noise(const UnigramDistribution& dist) {
  Eigen::VectorXd out(dist.size());
  const double floor_log =
      -std::log(static_cast<double>(dist.total_count + dist.size()));
  for (int i = 0; i < dist.size(); ++i) {
    const double p = dist.probs[static_cast<std::size_t>(i)];
    out(i) = p > 0.0 ? std::log(p) : floor_log;
  }
  return out;
}

// Normalized conditional over the vocabulary for one context vector.
// log_noise is test_time_log_noise(dist); it is ignored in NCE mode.
inline ConditionalDist conditional_distribution(const ModelParams& params,
                                                const Eigen::VectorXd& c,
                                                const Eigen::VectorXd& log_noise) {
  ConditionalDist out;
  out.log_probs = params.output_embed * c;
  if (params.config.mode == Mode::kPmi) {
    out.log_probs += log_noise;
  } else {
    out.log_probs += params.nce_bias;
  }
  out.log_probs.array() -= logsumexp(out.log_probs);
  return out;
}

// Stateful scorer: feeds tokens one at a time, carrying LSTM state and the
// previous token across calls so that scoring a sequence in pieces equals
// scoring it whole.
class SequenceScorer {
 public:
  SequenceScorer(const ModelParams& params, const UnigramDistribution& dist,
                 int bootstrap_token)
      : params_(&params),
        log_noise_(test_time_log_noise(dist)),
        state_(zero_state(params.config, 1)),
        prev_(bootstrap_token) {}

  // log p(id | context so far); advances the state.
  double score_next(int id) {
    Eigen::MatrixXi input(1, 1);
    input(0, 0) = prev_;
    ForwardResult fwd = forward(*params_, input, state_, /*train_mode=*/false);
    const Eigen::VectorXd c = fwd.context.row(0).transpose();
    prev_ = id;
    return conditional_distribution(*params_, c, log_noise_).log_probs(id);
  }

  // Chunked variant: one forward over up to chunk_len tokens, then a
  // vectorized log-softmax per position. Matches score_next token by token.
  double score_sequence(const std::vector<int>& ids, int chunk_len = 64) {
    double total = 0.0;
    std::size_t done = 0;
    Eigen::MatrixXi input;
    while (done < ids.size()) {
      const int n = static_cast<int>(
          std::min<std::size_t>(static_cast<std::size_t>(chunk_len),
                                ids.size() - done));
      input.resize(1, n);
      input(0, 0) = prev_;
      for (int t = 1; t < n; ++t) {
        input(0, t) = ids[done + static_cast<std::size_t>(t) - 1];
      }
      ForwardResult fwd =
          forward(*params_, input, state_, /*train_mode=*/false);
      for (int t = 0; t < n; ++t) {
        const Eigen::VectorXd c = fwd.context.row(t).transpose();
        total += conditional_distribution(*params_, c, log_noise_)
                     .log_probs(ids[done + static_cast<std::size_t>(t)]);
      }
      done += static_cast<std::size_t>(n);
      prev_ = ids[done - 1];
    }
    return total;
  }

  // Context after everything consumed so far (runs the pending input).
  Eigen::VectorXd current_context() {
    Eigen::MatrixXi input(1, 1);
    input(0, 0) = prev_;
    LstmState probe = state_;
    ForwardResult fwd = forward(*params_, input, probe, /*train_mode=*/false);
    return fwd.context.row(0).transpose();
  }

  const Eigen::VectorXd& log_noise() const { return log_noise_; }

 private:
  const ModelParams* params_;
  Eigen::VectorXd log_noise_;
  LstmState state_;
  int prev_;
};

// Sum of log p(id_t | prefix) over the whole sequence, state carried
// throughout; <eos> tokens are scored like any other word.
inline double sequence_log_prob(const ModelParams& params,
                                const std::vector<int>& ids, int eos_id,
                                const UnigramDistribution& dist) {
  SequenceScorer scorer(params, dist, eos_id);
  return scorer.score_sequence(ids);
}

inline double perplexity(const ModelParams& params, const std::vector<int>& ids,
                         int eos_id, const UnigramDistribution& dist) {
  if (ids.empty()) {
    throw std::invalid_argument("perplexity: empty id stream");
  }
  const double lp = sequence_log_prob(params, ids, eos_id, dist);
  return std::exp(-lp / static_cast<double>(ids.size()));
}

struct Prediction {
  int id;
  double prob;
};

// k highest-probability next words after consuming prefix_ids, descending,
// ties broken by id. k larger than |V| is truncated.
inline std::vector<Prediction> top_k_predictions(const ModelParams& params,
                                                 const std::vector<int>& prefix_ids,
                                                 int eos_id,
                                                 const UnigramDistribution& dist,
                                                 int k) {
  SequenceScorer scorer(params, dist, eos_id);
  if (!prefix_ids.empty()) {
    scorer.score_sequence(prefix_ids);
  }
  const Eigen::VectorXd c = scorer.current_context();
  const ConditionalDist cd = conditional_distribution(params, c, scorer.log_noise());

  const int v = static_cast<int>(cd.log_probs.size());
  const int kk = std::min(k, v);
  std::vector<int> order(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) order[static_cast<std::size_t>(i)] = i;
  std::partial_sort(order.begin(), order.begin() + kk, order.end(),
                    [&cd](int a, int b) {
                      if (cd.log_probs(a) != cd.log_probs(b)) {
                        return cd.log_probs(a) > cd.log_probs(b);
                      }
                      return a < b;
                    });
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(kk));
  for (int i = 0; i < kk; ++i) {
    out.push_back({order[static_cast<std::size_t>(i)],
                   std::exp(cd.log_probs(order[static_cast<std::size_t>(i)]))});
  }
  return out;
}

struct EvalReport {
  std::string dataset;
  Mode mode = Mode::kPmi;
  std::int64_t tokens = 0;
  double total_log_prob = 0.0;
  double perplexity = 0.0;

  std::string to_string() const {
    std::ostringstream ss;
    ss << "dataset: " << dataset << "\n"
       << "mode: " << mode_name(mode) << "\n"
       << "tokens: " << tokens << "\n"
       << "total_log_prob: " << std::setprecision(12) << total_log_prob << "\n"
       << "perplexity: " << std::setprecision(8) << perplexity << "\n";
    return ss.str();
  }
};

// Full evaluation with an optional per-token "token<TAB>log_prob" dump.
inline EvalReport evaluate(const ModelParams& params, const Vocabulary& vocab,
                           const std::vector<int>& ids,
                           const UnigramDistribution& dist,
                           const std::string& dataset_name,
                           std::string* token_dump = nullptr) {
  EvalReport r;
  r.dataset = dataset_name;
  r.mode = params.config.mode;
  r.tokens = static_cast<std::int64_t>(ids.size());
  if (token_dump == nullptr) {
    r.total_log_prob = sequence_log_prob(params, ids, vocab.eos_id, dist);
  } else {
    SequenceScorer scorer(params, dist, vocab.eos_id);
    std::ostringstream dump;
    dump << std::setprecision(12);
    for (int id : ids) {
      const double lp = scorer.score_next(id);
      r.total_log_prob += lp;
      dump << vocab.id_to_token[static_cast<std::size_t>(id)] << '\t' << lp
           << '\n';
    }
    *token_dump = dump.str();
  }
  r.perplexity =
      std::exp(-r.total_log_prob / static_cast<double>(std::max<std::int64_t>(
                                       1, r.tokens)));
  return r;
}

}  // namespace pmilm
