// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent scalar reimplementation of the LSTM forward pass and of the
// contrastive loss, written with plain loops and no shared code paths, to
// cross-check the vectorized implementations.

#pragma once

#include "pmilm/model.hpp"
#include "pmilm/objectives.hpp"

#include <cmath>
#include <vector>

namespace pmilm_test {

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Evaluation-mode forward (no dropout). Returns the (B*T) x d context
// matrix with row t*B + b and advances the state copy.
inline pmilm::RowMatrixXd reference_forward(const pmilm::ModelParams& params,
                                            const Eigen::MatrixXi& inputs,
                                            pmilm::LstmState state) {
  const int batch = static_cast<int>(inputs.rows());
  const int steps = static_cast<int>(inputs.cols());
  const int h = params.config.hidden;
  const int layers = params.config.layers;
  pmilm::RowMatrixXd context(batch * steps, params.config.d);

  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      std::vector<double> x(params.input_embed.cols());
      for (int i = 0; i < params.config.d; ++i) {
        x[static_cast<std::size_t>(i)] = params.input_embed(inputs(b, t), i);
      }
      for (int l = 0; l < layers; ++l) {
        const auto& w = params.lstm[static_cast<std::size_t>(l)].w;
        const auto& bias = params.lstm[static_cast<std::size_t>(l)].b;
        const int in_dim = static_cast<int>(w.rows()) - h;
        std::vector<double> z(static_cast<std::size_t>(4 * h));
        for (int j = 0; j < 4 * h; ++j) {
          double acc = bias(j);
          for (int i = 0; i < in_dim; ++i) {
            acc += x[static_cast<std::size_t>(i)] * w(i, j);
          }
          for (int i = 0; i < h; ++i) {
            acc += state.h[static_cast<std::size_t>(l)](b, i) * w(in_dim + i, j);
          }
          z[static_cast<std::size_t>(j)] = acc;
        }
        std::vector<double> hh(static_cast<std::size_t>(h));
        for (int i = 0; i < h; ++i) {
          const double gi = ref_sigmoid(z[static_cast<std::size_t>(i)]);
          const double gf = ref_sigmoid(z[static_cast<std::size_t>(h + i)]);
          const double gg = std::tanh(z[static_cast<std::size_t>(2 * h + i)]);
          const double go = ref_sigmoid(z[static_cast<std::size_t>(3 * h + i)]);
          const double c =
              gf * state.c[static_cast<std::size_t>(l)](b, i) + gi * gg;
          state.c[static_cast<std::size_t>(l)](b, i) = c;
          hh[static_cast<std::size_t>(i)] = go * std::tanh(c);
          state.h[static_cast<std::size_t>(l)](b, i) =
              hh[static_cast<std::size_t>(i)];
        }
        x = hh;
      }
      for (int i = 0; i < params.config.d; ++i) {
        context(t * batch + b, i) = x[static_cast<std::size_t>(i)];
      }
    }
  }
  return context;
}

// Scalar recomputation of the contrastive loss over a context block.
inline double reference_common_loss(const pmilm::ModelParams& params,
                                    const pmilm::RowMatrixXd& context,
                                    const Eigen::MatrixXi& targets,
                                    const std::vector<int>& noise, int k,
                                    const pmilm::UnigramDistribution& dist,
                                    std::int64_t norm_positions) {
  const int batch = static_cast<int>(targets.rows());
  const int steps = static_cast<int>(targets.cols());
  const bool nce = params.config.mode == pmilm::Mode::kNce;
  auto score = [&](int word, int row) {
    double s = 0.0;
    for (int i = 0; i < params.config.d; ++i) {
      s += params.output_embed(word, i) * context(row, i);
    }
    if (nce) {
      s += params.nce_bias(word) - std::log(k * dist.probs[static_cast<std::size_t>(word)]);
    }
    return s;
  };
  double total = 0.0;
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const int row = t * batch + b;
      total -= std::log(ref_sigmoid(score(targets(b, t), row)));
      for (int i = 0; i < k; ++i) {
        const int u = noise[static_cast<std::size_t>(row * k + i)];
        total -= std::log(ref_sigmoid(-score(u, row)));
      }
    }
  }
  return total / static_cast<double>(norm_positions);
}

}  // namespace pmilm_test
