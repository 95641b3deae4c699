// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force verification on enumerable instances. Contexts here are
// single previous words, so joint distributions, PMI matrices, expected
// objectives, and partition functions can all be computed exactly and
// compared against the sampled, LSTM-backed implementation's claims.

#pragma once

#include "pmilm/rng.hpp"
#include "pmilm/util.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pmilm {

// Joint distribution of (word, context) derived from a count matrix.
// Rows index words, columns index contexts.
struct JointCounts {
  RowMatrixXd counts;   // n(w,c) >= 0
  RowMatrixXd p_wc;     // joint, sums to 1
  Eigen::VectorXd p_w;  // row marginal
  Eigen::VectorXd p_c;  // column marginal

  explicit JointCounts(const RowMatrixXd& n) : counts(n) {
    if (n.rows() < 1 || n.cols() < 1) {
      throw std::invalid_argument("JointCounts: empty count matrix");
    }
    if ((n.array() < 0.0).any()) {
      throw std::invalid_argument("JointCounts: negative count");
    }
    const double total = n.sum();
    if (!(total > 0.0)) {
      throw std::invalid_argument("JointCounts: all counts are zero");
    }
    p_wc = n / total;
    p_w = p_wc.rowwise().sum();
    p_c = p_wc.colwise().sum();
  }

  int words() const { return static_cast<int>(counts.rows()); }
  int contexts() const { return static_cast<int>(counts.cols()); }

  // p(w|c); requires p(c) > 0.
  double cond(int w, int c) const {
    if (!(p_c(c) > 0.0)) {
      throw std::domain_error("JointCounts: conditioning on zero-probability context");
    }
    return p_wc(w, c) / p_c(c);
  }
};

// Dense random joint with all cells bounded away from zero, for
// well-conditioned test instances.
inline JointCounts random_joint(int words, int contexts, Rng& rng) {
  RowMatrixXd n(words, contexts);
  for (int w = 0; w < words; ++w) {
    for (int c = 0; c < contexts; ++c) {
      n(w, c) = rng.uniform(0.2, 1.0);
    }
  }
  return JointCounts(n);
}

// Independent joint p(w,c) = p(w)p(c).
inline JointCounts product_joint(const Eigen::VectorXd& pw,
                                 const Eigen::VectorXd& pc) {
  return JointCounts(RowMatrixXd(pw * pc.transpose()));
}

// pmi_k(w,c) = log(p(w|c) / (k * p(w))). Cells with zero joint count are
// undefined and returned as NaN.
inline RowMatrixXd exact_pmi_matrix(const JointCounts& j, int k) {
  if (k < 1) {
    throw std::invalid_argument("exact_pmi_matrix: k must be >= 1");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  RowMatrixXd pmi(j.words(), j.contexts());
  for (int w = 0; w < j.words(); ++w) {
    for (int c = 0; c < j.contexts(); ++c) {
      if (j.p_wc(w, c) > 0.0 && j.p_w(w) > 0.0 && j.p_c(c) > 0.0) {
        pmi(w, c) = std::log(j.cond(w, c) / (k * j.p_w(w)));
      } else {
        pmi(w, c) = nan;
      }
    }
  }
  return pmi;
}

// Expected value of the negative-sampling objective when pairs are drawn
// from the joint and noise words from the unigram marginal:
//   sum_{w,c} p(w,c) log sigma(w.c) + k sum_{w,c} p(w)p(c) log sigma(-w.c)
inline double expected_neg_objective(const RowMatrixXd& W, const RowMatrixXd& C,
                                     const JointCounts& j, int k) {
  double total = 0.0;
  for (int w = 0; w < j.words(); ++w) {
    for (int c = 0; c < j.contexts(); ++c) {
      const double m = W.row(w).dot(C.row(c));
      total += j.p_wc(w, c) * log_sigmoid(m);
      total += k * j.p_w(w) * j.p_c(c) * log_sigmoid(-m);
    }
  }
  return total;
}

// Analytic gradient of expected_neg_objective. Using d/dx log sigma(x) =
// sigma(-x), the per-cell weight is
//   q(w,c) = p(w,c) sigma(-w.c) - k p(w)p(c) sigma(w.c)
// and grad_W = q C, grad_C = q^T W.
inline void expected_neg_gradients(const RowMatrixXd& W, const RowMatrixXd& C,
                                   const JointCounts& j, int k,
                                   RowMatrixXd* grad_w, RowMatrixXd* grad_c) {
  RowMatrixXd q(j.words(), j.contexts());
  for (int w = 0; w < j.words(); ++w) {
    for (int c = 0; c < j.contexts(); ++c) {
      const double m = W.row(w).dot(C.row(c));
      q(w, c) = j.p_wc(w, c) * sigmoid(-m) - k * j.p_w(w) * j.p_c(c) * sigmoid(m);
    }
  }
  *grad_w = q * C;
  *grad_c = q.transpose() * W;
}

struct PmiOptimumResult {
  double max_deviation = 0.0;  // over cells with positive joint count
  double grad_norm = 0.0;      // at the final iterate
  long iterations = 0;
  bool converged = false;
  RowMatrixXd w, c;
};

// Maximizes the expected objective by full-batch gradient ascent with a
// fixed step, then measures how far each dot product w.c sits from the
// exact pmi_k value. With d >= min(|V|,|Vc|) the factorization is full
// rank and the deviation should vanish up to optimization tolerance.
inline PmiOptimumResult verify_pmi_optimum(const JointCounts& j, int k, int d,
                                           Rng rng, double step = 0.5,
                                           double tol = 1e-7,
                                           long max_iters = 1000000) {
  if (d < 1) {
    throw std::invalid_argument("verify_pmi_optimum: d must be >= 1");
  }
  PmiOptimumResult res;
  res.w.resize(j.words(), d);
  res.c.resize(j.contexts(), d);
  for (int i = 0; i < res.w.rows(); ++i) {
    for (int x = 0; x < d; ++x) res.w(i, x) = rng.uniform(-0.1, 0.1);
  }
  for (int i = 0; i < res.c.rows(); ++i) {
    for (int x = 0; x < d; ++x) res.c(i, x) = rng.uniform(-0.1, 0.1);
  }

  RowMatrixXd gw, gc;
  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    expected_neg_gradients(res.w, res.c, j, k, &gw, &gc);
    res.grad_norm = std::sqrt(gw.squaredNorm() + gc.squaredNorm());
    if (res.grad_norm < tol) {
      res.converged = true;
      break;
    }
    res.w += step * gw;
    res.c += step * gc;
  }

  const RowMatrixXd pmi = exact_pmi_matrix(j, k);
  res.max_deviation = 0.0;
  for (int w = 0; w < j.words(); ++w) {
    for (int c = 0; c < j.contexts(); ++c) {
      if (!(j.p_wc(w, c) > 0.0)) continue;
      const double dev = std::abs(res.w.row(w).dot(res.c.row(c)) - pmi(w, c));
      res.max_deviation = std::max(res.max_deviation, dev);
    }
  }
  return res;
}

// Checks the Bayes-posterior identity behind the NCE objective. Given
// per-word logits s_w = w.c + b_w for one context and a noise
// distribution, the model conditional is p_m(w) = exp(s_w)/Z with Z
// computed exactly. A word at a position is model-generated with prior
// 1/(k+1) against k/(k+1) for noise, so
//   P(model | w) = p_m(w) / (p_m(w) + k p_noise(w))
// which must equal sigma(s_w - log Z - log(k p_noise(w))). Returns the
// max absolute difference over words.
inline double verify_nce_posterior(const Eigen::VectorXd& logits,
                                   const Eigen::VectorXd& noise, int k) {
  if (logits.size() != noise.size() || logits.size() == 0) {
    throw std::invalid_argument("verify_nce_posterior: size mismatch");
  }
  if (k < 1) {
    throw std::invalid_argument("verify_nce_posterior: k must be >= 1");
  }
  if ((noise.array() <= 0.0).any()) {
    throw std::invalid_argument("verify_nce_posterior: noise must be positive");
  }
  const double log_z = logsumexp(logits);
  double max_err = 0.0;
  for (Eigen::Index w = 0; w < logits.size(); ++w) {
    const double lhs = sigmoid(logits(w) - log_z - std::log(k * noise(w)));
    const double p_model = std::exp(logits(w) - log_z);
    const double rhs = p_model / (p_model + k * noise(w));
    max_err = std::max(max_err, std::abs(lhs - rhs));
  }
  return max_err;
}

struct NcePosteriorInstance {
  Eigen::VectorXd logits;
  Eigen::VectorXd noise;
};

inline NcePosteriorInstance random_nce_instance(int vocab_size, Rng& rng) {
  if (vocab_size < 1) {
    throw std::invalid_argument("random_nce_instance: vocab_size must be >= 1");
  }
  NcePosteriorInstance inst;
  inst.logits.resize(vocab_size);
  inst.noise.resize(vocab_size);
  for (int w = 0; w < vocab_size; ++w) {
    inst.logits(w) = rng.uniform(-3.0, 3.0);
    inst.noise(w) = rng.uniform(0.05, 1.0);
  }
  inst.noise /= inst.noise.sum();
  return inst;
}

}  // namespace pmilm
