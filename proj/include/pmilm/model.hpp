// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Model parameters and the forward/backward computation: input embedding
// lookup, a stack of standard LSTM layers (forget gate, no peepholes)
// encoding the preceding context, and the output word-embedding table
// whose rows score against context vectors. NCE mode adds a per-word bias.
//
// Layout conventions:
//   - inputs/targets are B x T id matrices.
//   - context vectors are packed into a (B*T) x d matrix, row t*B + b.
//   - LSTM gate blocks are ordered [input | forget | candidate | output]
//     along the 4h axis of each layer's weight matrix (in+h) x 4h.
//
// Backward is exact reverse accumulation through the T unrolled steps; the
// incoming recurrent state is a constant (truncation boundary), so no
// gradient flows into it.

#pragma once

#include "pmilm/corpus.hpp"
#include "pmilm/rng.hpp"
#include "pmilm/sampler.hpp"
#include "pmilm/util.hpp"

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmilm {

enum class Mode { kPmi, kNce };

inline std::string mode_name(Mode m) { return m == Mode::kPmi ? "pmi" : "nce"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "pmi" || s == "PMI") return Mode::kPmi;
  if (s == "nce" || s == "NCE") return Mode::kNce;
  throw std::invalid_argument("unknown mode: " + s + " (expected pmi or nce)");
}

struct ModelConfig {
  int vocab_size = 0;
  int d = 0;        // embedding dim; must equal hidden (no output projection)
  int layers = 1;
  int hidden = 0;
  double dropout = 0.0;
  int k = 1;        // noise samples per positive token
  Mode mode = Mode::kPmi;
  double forget_bias = 1.0;

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must be >= 2");
    if (d != hidden) throw std::invalid_argument("config: d must equal hidden");
    if (d < 1) throw std::invalid_argument("config: d must be >= 1");
    if (layers < 1) throw std::invalid_argument("config: layers must be >= 1");
    if (k < 1) throw std::invalid_argument("config: k must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw std::invalid_argument("config: dropout must be in [0,1)");
    }
  }
};

struct LstmLayer {
  RowMatrixXd w;          // (in + h) x 4h
  Eigen::RowVectorXd b;   // 4h
};

struct ModelParams {
  ModelConfig config;
  RowMatrixXd input_embed;   // V x d
  std::vector<LstmLayer> lstm;
  RowMatrixXd output_embed;  // V x d
  Eigen::VectorXd nce_bias;  // V in NCE mode, empty in PMI mode

  int layer_input_dim(int layer) const {
    return layer == 0 ? config.d : config.hidden;
  }
};

struct LstmState {
  std::vector<Eigen::MatrixXd> h;  // per layer, B x h
  std::vector<Eigen::MatrixXd> c;
};

inline LstmState zero_state(const ModelConfig& cfg, int batch) {
  LstmState s;
  s.h.resize(static_cast<std::size_t>(cfg.layers));
  s.c.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    s.h[static_cast<std::size_t>(l)] = Eigen::MatrixXd::Zero(batch, cfg.hidden);
    s.c[static_cast<std::size_t>(l)] = Eigen::MatrixXd::Zero(batch, cfg.hidden);
  }
  return s;
}

// Weights and embeddings uniform in [-0.05, 0.05]; gate biases zero except
// the forget block; NCE bias starts at -log|V|. Fill order is fixed
// (input_embed, then each layer's weights, then output_embed) so a given
// seed always produces identical parameters.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  constexpr double kInitRange = 0.05;
  auto fill_uniform = [&rng](RowMatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = rng.uniform(-kInitRange, kInitRange);
      }
    }
  };

  ModelParams p;
  p.config = cfg;
  p.input_embed.resize(cfg.vocab_size, cfg.d);
  fill_uniform(p.input_embed);

  p.lstm.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& layer = p.lstm[static_cast<std::size_t>(l)];
    const int in = l == 0 ? cfg.d : cfg.hidden;
    layer.w.resize(in + cfg.hidden, 4 * cfg.hidden);
    fill_uniform(layer.w);
    layer.b = Eigen::RowVectorXd::Zero(4 * cfg.hidden);
    layer.b.segment(cfg.hidden, cfg.hidden).setConstant(cfg.forget_bias);
  }

  p.output_embed.resize(cfg.vocab_size, cfg.d);
  fill_uniform(p.output_embed);

  if (cfg.mode == Mode::kNce) {
    p.nce_bias =
        Eigen::VectorXd::Constant(cfg.vocab_size, -std::log(cfg.vocab_size));
  }
  return p;
}

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Intermediates retained by forward for exact reverse accumulation.
struct Tape {
  int batch = 0;
  int steps = 0;
  Eigen::MatrixXi inputs;                            // B x T
  std::vector<std::vector<Eigen::MatrixXd>> x;       // [t][l], post-dropout input
  std::vector<std::vector<Eigen::MatrixXd>> h_prev;  // [t][l]
  std::vector<std::vector<Eigen::MatrixXd>> c_prev;  // [t][l]
  std::vector<std::vector<Eigen::MatrixXd>> gi, gf, gg, go;  // gate values
  std::vector<std::vector<Eigen::MatrixXd>> tanh_c;
  std::vector<std::vector<Eigen::MatrixXd>> mask;    // scaled dropout masks; empty if off
  bool dropout_on = false;
  bool consumed = false;
};

struct ForwardResult {
  Eigen::MatrixXd context;  // (B*T) x d, row t*B + b
  Tape tape;
};

// Encodes inputs step by step; context row t*B+b is the top-layer hidden
// state after consuming inputs(b, t). Inverted dropout is applied to each
// layer's input (never to the top layer's output) when train_mode is set.
// The rng is only touched when dropout is active.
inline ForwardResult forward(const ModelParams& params,
                             const Eigen::MatrixXi& inputs, LstmState& state,
                             bool train_mode, Rng* rng = nullptr) {
  const ModelConfig& cfg = params.config;
  const int batch = static_cast<int>(inputs.rows());
  const int steps = static_cast<int>(inputs.cols());
  const int h = cfg.hidden;
  const int layers = cfg.layers;
  if (static_cast<int>(state.h.size()) != layers ||
      state.h[0].rows() != batch || state.h[0].cols() != h) {
    throw std::invalid_argument("forward: state shape mismatch");
  }
  const bool dropout_on = train_mode && cfg.dropout > 0.0;
  if (dropout_on && rng == nullptr) {
    throw std::invalid_argument("forward: dropout requires an rng");
  }

  ForwardResult out;
  Tape& tape = out.tape;
  tape.batch = batch;
  tape.steps = steps;
  tape.inputs = inputs;
  tape.dropout_on = dropout_on;
  auto grid = [&](std::vector<std::vector<Eigen::MatrixXd>>& g) {
    g.assign(static_cast<std::size_t>(steps),
             std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(layers)));
  };
  grid(tape.x);
  grid(tape.h_prev);
  grid(tape.c_prev);
  grid(tape.gi);
  grid(tape.gf);
  grid(tape.gg);
  grid(tape.go);
  grid(tape.tanh_c);
  if (dropout_on) {
    grid(tape.mask);
  }

  out.context.resize(batch * steps, cfg.d);

  const double keep = 1.0 - cfg.dropout;
  Eigen::MatrixXd x;
  Eigen::MatrixXd xh;
  for (int t = 0; t < steps; ++t) {
    for (int l = 0; l < layers; ++l) {
      const auto lt = static_cast<std::size_t>(l);
      const int in = params.layer_input_dim(l);
      if (l == 0) {
        x.resize(batch, in);
        for (int b = 0; b < batch; ++b) {
          x.row(b) = params.input_embed.row(inputs(b, t));
        }
      } else {
        x = state.h[lt - 1];
      }
      if (dropout_on) {
        Eigen::MatrixXd m(batch, in);
        for (int b = 0; b < batch; ++b) {
          for (int j = 0; j < in; ++j) {
            m(b, j) = rng->next_double() < keep ? 1.0 / keep : 0.0;
          }
        }
        x = x.cwiseProduct(m);
        tape.mask[static_cast<std::size_t>(t)][lt] = std::move(m);
      }

      const auto& layer = params.lstm[lt];
      xh.resize(batch, in + h);
      xh.leftCols(in) = x;
      xh.rightCols(h) = state.h[lt];

      Eigen::MatrixXd z = (xh * layer.w).rowwise() + layer.b;
      Eigen::MatrixXd gi = z.leftCols(h).unaryExpr([](double v) { return sigmoid(v); });
      Eigen::MatrixXd gf = z.middleCols(h, h).unaryExpr([](double v) { return sigmoid(v); });
      Eigen::MatrixXd gg = z.middleCols(2 * h, h).array().tanh();
      Eigen::MatrixXd go = z.rightCols(h).unaryExpr([](double v) { return sigmoid(v); });

      Eigen::MatrixXd c_new =
          gf.cwiseProduct(state.c[lt]) + gi.cwiseProduct(gg);
      Eigen::MatrixXd tc = c_new.array().tanh();
      Eigen::MatrixXd h_new = go.cwiseProduct(tc);
      if (!h_new.allFinite() || !c_new.allFinite()) {
        throw NonFiniteError("forward: non-finite activation at step " +
                             std::to_string(t) + ", layer " + std::to_string(l));
      }

      auto& row = tape.x[static_cast<std::size_t>(t)];
      row[lt] = std::move(x);
      tape.h_prev[static_cast<std::size_t>(t)][lt] = state.h[lt];
      tape.c_prev[static_cast<std::size_t>(t)][lt] = state.c[lt];
      tape.gi[static_cast<std::size_t>(t)][lt] = std::move(gi);
      tape.gf[static_cast<std::size_t>(t)][lt] = std::move(gf);
      tape.gg[static_cast<std::size_t>(t)][lt] = std::move(gg);
      tape.go[static_cast<std::size_t>(t)][lt] = std::move(go);
      tape.tanh_c[static_cast<std::size_t>(t)][lt] = std::move(tc);

      state.c[lt] = std::move(c_new);
      state.h[lt] = std::move(h_new);
    }
    out.context.middleRows(static_cast<Eigen::Index>(t) * batch, batch) =
        state.h[static_cast<std::size_t>(layers - 1)];
  }
  return out;
}

struct LstmLayerGrad {
  RowMatrixXd w;
  Eigen::RowVectorXd b;
};

struct Gradients {
  std::vector<LstmLayerGrad> lstm;
  std::map<int, Eigen::RowVectorXd> input_embed;   // touched rows only
  std::map<int, Eigen::RowVectorXd> output_embed;  // filled by the objective
  std::map<int, double> nce_bias;                  // filled by the objective
};

inline Gradients zero_lstm_grads(const ModelParams& params) {
  Gradients g;
  g.lstm.resize(params.lstm.size());
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    g.lstm[l].w = RowMatrixXd::Zero(params.lstm[l].w.rows(), params.lstm[l].w.cols());
    g.lstm[l].b = Eigen::RowVectorXd::Zero(params.lstm[l].b.cols());
  }
  return g;
}

// Reverse pass over a forward tape. grad_context is (B*T) x d in the same
// row layout as the forward context. Fills LSTM gradients and the sparse
// input-embedding rows; a tape can be consumed once.
inline Gradients backward(const ModelParams& params, Tape& tape,
                          const Eigen::MatrixXd& grad_context) {
  if (tape.consumed) {
    throw std::logic_error("backward: tape already consumed");
  }
  tape.consumed = true;
  const ModelConfig& cfg = params.config;
  const int batch = tape.batch;
  const int steps = tape.steps;
  const int h = cfg.hidden;
  const int layers = cfg.layers;
  if (grad_context.rows() != static_cast<Eigen::Index>(batch) * steps ||
      grad_context.cols() != cfg.d) {
    throw std::invalid_argument("backward: grad_context shape mismatch");
  }

  Gradients grads = zero_lstm_grads(params);

  // Per-layer carries into the previous step.
  std::vector<Eigen::MatrixXd> dh_carry(static_cast<std::size_t>(layers),
                                        Eigen::MatrixXd::Zero(batch, h));
  std::vector<Eigen::MatrixXd> dc_carry(static_cast<std::size_t>(layers),
                                        Eigen::MatrixXd::Zero(batch, h));

  Eigen::MatrixXd dz(batch, 4 * h);
  for (int t = steps - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    // dx of layer l+1 feeding layer l's hidden output at this step.
    Eigen::MatrixXd dx_above;
    for (int l = layers - 1; l >= 0; --l) {
      const auto ls = static_cast<std::size_t>(l);
      const int in = params.layer_input_dim(l);

      Eigen::MatrixXd dh = dh_carry[ls];
      if (l == layers - 1) {
        dh += grad_context.middleRows(static_cast<Eigen::Index>(t) * batch, batch);
      } else {
        dh += dx_above;
      }

      const auto& gi = tape.gi[ts][ls];
      const auto& gf = tape.gf[ts][ls];
      const auto& gg = tape.gg[ts][ls];
      const auto& go = tape.go[ts][ls];
      const auto& tc = tape.tanh_c[ts][ls];

      Eigen::MatrixXd dc =
          dc_carry[ls] +
          (dh.cwiseProduct(go)).cwiseProduct(
              (1.0 - tc.array().square()).matrix());
      Eigen::MatrixXd d_go = dh.cwiseProduct(tc);
      Eigen::MatrixXd d_gi = dc.cwiseProduct(gg);
      Eigen::MatrixXd d_gf = dc.cwiseProduct(tape.c_prev[ts][ls]);
      Eigen::MatrixXd d_gg = dc.cwiseProduct(gi);
      dc_carry[ls] = dc.cwiseProduct(gf);

      dz.leftCols(h) = d_gi.cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
      dz.middleCols(h, h) = d_gf.cwiseProduct(gf).cwiseProduct((1.0 - gf.array()).matrix());
      dz.middleCols(2 * h, h) = d_gg.cwiseProduct((1.0 - gg.array().square()).matrix());
      dz.rightCols(h) = d_go.cwiseProduct(go).cwiseProduct((1.0 - go.array()).matrix());

      const auto& layer = params.lstm[ls];
      Eigen::MatrixXd xh(batch, in + h);
      xh.leftCols(in) = tape.x[ts][ls];
      xh.rightCols(h) = tape.h_prev[ts][ls];
      grads.lstm[ls].w.noalias() += xh.transpose() * dz;
      grads.lstm[ls].b += dz.colwise().sum();

      Eigen::MatrixXd dxh = dz * layer.w.transpose();
      Eigen::MatrixXd dx = dxh.leftCols(in);
      dh_carry[ls] = dxh.rightCols(h);

      if (tape.dropout_on) {
        dx = dx.cwiseProduct(tape.mask[ts][ls]);
      }
      if (l == 0) {
        for (int b = 0; b < batch; ++b) {
          const int id = tape.inputs(b, t);
          auto [it, inserted] = grads.input_embed.try_emplace(
              id, Eigen::RowVectorXd::Zero(cfg.d));
          it->second += dx.row(b);
        }
      } else {
        dx_above = std::move(dx);
      }
    }
  }
  return grads;
}

// Pre-sigmoid logit of the PMI-mode score: w . c.
inline double score_pmi(const ModelParams& params, const Eigen::VectorXd& c,
                        int w_id) {
  return params.output_embed.row(w_id).dot(c.transpose());
}

// Pre-sigmoid logit of the NCE-mode score with Z_c fixed to 1:
// w . c + b_w - log(k p(w)).
inline double score_nce(const ModelParams& params, const Eigen::VectorXd& c,
                        int w_id, const UnigramDistribution& dist, int k) {
  return score_pmi(params, c, w_id) + params.nce_bias(w_id) -
         std::log(static_cast<double>(k)) - log_prob(dist, w_id);
}

}  // namespace pmilm
