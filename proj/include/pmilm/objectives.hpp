// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// The shared binary-classification objective over (positive, k noise)
// pairs, instantiated with the two score functions: the plain dot-product
// score (PMI mode) and the noise-corrected biased score (NCE mode). Both
// losses are the same code path; only the logit and its bias flow differ.
//
// Per position with context c, target w, noise u_1..u_k:
//   loss += -[ log sigma(s(w,c)) + sum_i log sigma(-s(u_i,c)) ] / (B*T)
// Repeated noise ids accumulate gradient additively.

#pragma once

#include "pmilm/model.hpp"

#include <Eigen/Dense>

#include <map>
#include <vector>

namespace pmilm {

struct StepLoss {
  double value = 0.0;             // mean per-token loss, >= 0
  Eigen::MatrixXd grad_context;   // (B*T) x d
  std::map<int, Eigen::RowVectorXd> grad_output_embed;  // touched rows
  std::map<int, double> grad_nce_bias;                  // NCE only
};

// Score policies: logit(w, c) and whether d logit / d b_w = 1 exists.
struct PmiScore {
  double logit(const ModelParams& params, int w_id,
               const Eigen::RowVectorXd& c) const {
    return params.output_embed.row(w_id).dot(c);
  }
  static constexpr bool kHasBias = false;
};

struct NceScore {
  const UnigramDistribution* dist;
  int k;
  double logit(const ModelParams& params, int w_id,
               const Eigen::RowVectorXd& c) const {
    return params.output_embed.row(w_id).dot(c) + params.nce_bias(w_id) -
           std::log(static_cast<double>(k)) - log_prob(*dist, w_id);
  }
  static constexpr bool kHasBias = true;
};

// noise is laid out (t*B + b)*k + i, as produced by draw_noise.
// norm_positions overrides the 1/(B*T) normalizer when a caller computes a
// shard of a larger step (defaults to the full batch it was given).
template <class Score>
StepLoss common_form(const ModelParams& params,
                     const Eigen::MatrixXd& context,
                     const Eigen::MatrixXi& targets,
                     const std::vector<int>& noise, int k,
                     const Score& score, std::int64_t norm_positions = 0) {
  const int batch = static_cast<int>(targets.rows());
  const int steps = static_cast<int>(targets.cols());
  const std::size_t positions =
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(steps);
  if (context.rows() != static_cast<Eigen::Index>(positions)) {
    throw std::invalid_argument("common_form: context/targets shape mismatch");
  }
  if (noise.size() != positions * static_cast<std::size_t>(k)) {
    throw std::invalid_argument("common_form: noise block size mismatch");
  }
  if (norm_positions <= 0) {
    norm_positions = static_cast<std::int64_t>(positions);
  }
  const double inv = 1.0 / static_cast<double>(norm_positions);

  StepLoss out;
  out.grad_context = Eigen::MatrixXd::Zero(context.rows(), context.cols());

  auto bump = [&out, &params](int id, double coeff,
                              const Eigen::RowVectorXd& c) {
    auto [it, inserted] =
        out.grad_output_embed.try_emplace(id, Eigen::RowVectorXd::Zero(c.cols()));
    it->second += coeff * c;
    if constexpr (Score::kHasBias) {
      out.grad_nce_bias[id] += coeff;
    }
    (void)params;
  };

  double total = 0.0;
  Eigen::RowVectorXd c;
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const std::size_t pos = static_cast<std::size_t>(t) * batch + b;
      c = context.row(static_cast<Eigen::Index>(pos));

      const int w = targets(b, t);
      const double s_pos = score.logit(params, w, c);
      total -= log_sigmoid(s_pos);
      // d/ds of -log sigma(s) is -sigma(-s).
      const double coeff_pos = -sigmoid(-s_pos) * inv;
      out.grad_context.row(static_cast<Eigen::Index>(pos)) +=
          coeff_pos * params.output_embed.row(w);
      bump(w, coeff_pos, c);

      for (int i = 0; i < k; ++i) {
        const int u = noise[pos * static_cast<std::size_t>(k) +
                            static_cast<std::size_t>(i)];
        const double s_neg = score.logit(params, u, c);
        total -= log_sigmoid(-s_neg);
        // d/ds of -log sigma(-s) is sigma(s).
        const double coeff_neg = sigmoid(s_neg) * inv;
        out.grad_context.row(static_cast<Eigen::Index>(pos)) +=
            coeff_neg * params.output_embed.row(u);
        bump(u, coeff_neg, c);
      }
    }
  }
  out.value = total * inv;
  return out;
}

inline StepLoss neg_loss(const ModelParams& params,
                         const Eigen::MatrixXd& context,
                         const Eigen::MatrixXi& targets,
                         const std::vector<int>& noise, int k,
                         std::int64_t norm_positions = 0) {
  return common_form(params, context, targets, noise, k, PmiScore{},
                     norm_positions);
}

inline StepLoss nce_loss(const ModelParams& params,
                         const Eigen::MatrixXd& context,
                         const Eigen::MatrixXi& targets,
                         const std::vector<int>& noise, int k,
                         const UnigramDistribution& dist,
                         std::int64_t norm_positions = 0) {
  return common_form(params, context, targets, noise, k, NceScore{&dist, k},
                     norm_positions);
}

inline StepLoss step_loss(const ModelParams& params, Mode mode,
                          const Eigen::MatrixXd& context,
                          const Eigen::MatrixXi& targets,
                          const std::vector<int>& noise, int k,
                          const UnigramDistribution& dist,
                          std::int64_t norm_positions = 0) {
  if (mode == Mode::kPmi) {
    return neg_loss(params, context, targets, noise, k, norm_positions);
  }
  return nce_loss(params, context, targets, noise, k, dist, norm_positions);
}

// Folds an objective's output-side gradients into an accumulator.
inline void merge_objective_grads(Gradients& grads, const StepLoss& loss) {
  for (const auto& [id, row] : loss.grad_output_embed) {
    auto [it, inserted] =
        grads.output_embed.try_emplace(id, Eigen::RowVectorXd::Zero(row.cols()));
    it->second += row;
  }
  for (const auto& [id, g] : loss.grad_nce_bias) {
    grads.nce_bias[id] += g;
  }
}

}  // namespace pmilm
