// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop for truncated BPTT: forward -> objective -> backward ->
// global-norm clip -> optimizer step, with the LSTM state carried across
// steps within an epoch and reset between epochs. Supports SGD with a
// scheduled decay (the small-corpus recipe) and bias-corrected Adam (the
// large-corpus recipe). Checkpoints are written after every epoch and
// whenever validation perplexity improves.
//
// With threads > 1 the minibatch rows are sharded across workers and the
// shard gradients reduced in shard order before the exclusive update;
// parallel runs are statistically equivalent but not bit-identical to
// single-threaded runs (noise and dropout streams differ).

#pragma once

#include "pmilm/checkpoint.hpp"
#include "pmilm/corpus.hpp"
#include "pmilm/evaluator.hpp"
#include "pmilm/model.hpp"
#include "pmilm/objectives.hpp"
#include "pmilm/sampler.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pmilm {

enum class Optimizer { kSgd, kAdam };

inline std::string optimizer_name(Optimizer o) {
  return o == Optimizer::kSgd ? "sgd" : "adam";
}

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd" || s == "SGD") return Optimizer::kSgd;
  if (s == "adam" || s == "ADAM") return Optimizer::kAdam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct TrainConfig {
  Optimizer optimizer = Optimizer::kSgd;
  double lr0 = 1.0;
  double decay_factor = 1.2;   // divide lr by this after decay_start_epoch
  int decay_start_epoch = 6;
  double clip_norm = 5.0;
  int epochs = 1;
  int batch_size = 20;
  int bptt_len = 20;
  std::uint64_t seed = 1;
  bool share_noise = false;    // one noise set per step instead of per token
  int threads = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be > 0");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("train: decay_factor must be > 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("train: clip_norm must be > 0");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1 || bptt_len < 1) {
      throw std::invalid_argument("train: batch_size and bptt_len must be >= 1");
    }
    if (threads < 1) throw std::invalid_argument("train: threads must be >= 1");
  }
};

// lr0 up to and including decay_start_epoch, then divided by
// decay_factor^(epoch - decay_start_epoch). Epochs are 1-based.
inline double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (epoch < 1) {
    throw std::invalid_argument("lr_schedule: epoch is 1-based");
  }
  if (epoch <= cfg.decay_start_epoch) {
    return cfg.lr0;
  }
  return cfg.lr0 /
         std::pow(cfg.decay_factor, static_cast<double>(epoch - cfg.decay_start_epoch));
}

inline double global_grad_norm(const Gradients& g) {
  double ss = 0.0;
  for (const auto& layer : g.lstm) {
    ss += layer.w.squaredNorm() + layer.b.squaredNorm();
  }
  for (const auto& [id, row] : g.input_embed) ss += row.squaredNorm();
  for (const auto& [id, row] : g.output_embed) ss += row.squaredNorm();
  for (const auto& [id, v] : g.nce_bias) ss += v * v;
  return std::sqrt(ss);
}

// Rescales everything by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
inline double clip_gradients(Gradients& g, double max_norm) {
  const double norm = global_grad_norm(g);
  if (!std::isfinite(norm)) {
    throw NonFiniteError("clip_gradients: non-finite gradient norm");
  }
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& layer : g.lstm) {
      layer.w *= scale;
      layer.b *= scale;
    }
    for (auto& [id, row] : g.input_embed) row *= scale;
    for (auto& [id, row] : g.output_embed) row *= scale;
    for (auto& [id, v] : g.nce_bias) v *= scale;
  }
  return norm;
}

// p <- p - lr * g; embedding rows are updated sparsely.
inline void sgd_step(ModelParams& params, const Gradients& g, double lr) {
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    params.lstm[l].w -= lr * g.lstm[l].w;
    params.lstm[l].b -= lr * g.lstm[l].b;
  }
  for (const auto& [id, row] : g.input_embed) {
    params.input_embed.row(id) -= lr * row;
  }
  for (const auto& [id, row] : g.output_embed) {
    params.output_embed.row(id) -= lr * row;
  }
  for (const auto& [id, v] : g.nce_bias) {
    params.nce_bias(id) -= lr * v;
  }
}

struct AdamState {
  std::uint64_t t = 0;
  std::vector<LstmLayerGrad> m_lstm, v_lstm;
  RowMatrixXd m_in, v_in, m_out, v_out;
  Eigen::VectorXd m_bias, v_bias;

  static AdamState zeros_like(const ModelParams& p) {
    AdamState s;
    s.m_lstm.resize(p.lstm.size());
    s.v_lstm.resize(p.lstm.size());
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
      s.m_lstm[l].w = RowMatrixXd::Zero(p.lstm[l].w.rows(), p.lstm[l].w.cols());
      s.m_lstm[l].b = Eigen::RowVectorXd::Zero(p.lstm[l].b.cols());
      s.v_lstm[l].w = s.m_lstm[l].w;
      s.v_lstm[l].b = s.m_lstm[l].b;
    }
    s.m_in = RowMatrixXd::Zero(p.input_embed.rows(), p.input_embed.cols());
    s.v_in = s.m_in;
    s.m_out = RowMatrixXd::Zero(p.output_embed.rows(), p.output_embed.cols());
    s.v_out = s.m_out;
    if (p.nce_bias.size() > 0) {
      s.m_bias = Eigen::VectorXd::Zero(p.nce_bias.size());
      s.v_bias = s.m_bias;
    }
    return s;
  }
};

// Standard bias-corrected Adam. Sparse gradients decay the moments of
// untouched rows (gradient zero there), then the update is applied
// densely, exactly as running Adam with a materialized dense gradient.
inline void adam_step(ModelParams& params, const Gradients& g, AdamState& s,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  s.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
  const double step = lr / bc1;

  auto apply_dense = [&](auto& p, auto& m, auto& v, const auto& grad) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    p.array() -= step * m.array() / ((v.array() / bc2).sqrt() + eps);
  };

  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    apply_dense(params.lstm[l].w, s.m_lstm[l].w, s.v_lstm[l].w, g.lstm[l].w);
    apply_dense(params.lstm[l].b, s.m_lstm[l].b, s.v_lstm[l].b, g.lstm[l].b);
  }

  auto apply_sparse = [&](auto& p, auto& m, auto& v, const auto& rows) {
    m *= beta1;
    v *= beta2;
    for (const auto& [id, row] : rows) {
      m.row(id) += (1.0 - beta1) * row;
      v.row(id) += (1.0 - beta2) * row.cwiseProduct(row);
    }
    p.array() -= step * m.array() / ((v.array() / bc2).sqrt() + eps);
  };
  apply_sparse(params.input_embed, s.m_in, s.v_in, g.input_embed);
  apply_sparse(params.output_embed, s.m_out, s.v_out, g.output_embed);

  if (params.nce_bias.size() > 0) {
    s.m_bias *= beta1;
    s.v_bias *= beta2;
    for (const auto& [id, grad] : g.nce_bias) {
      s.m_bias(id) += (1.0 - beta1) * grad;
      s.v_bias(id) += (1.0 - beta2) * grad * grad;
    }
    params.nce_bias.array() -=
        step * s.m_bias.array() / ((s.v_bias.array() / bc2).sqrt() + eps);
  }
}

inline void pack_adam(Checkpoint& ck, const AdamState& s) {
  ck.adam_t = s.t;
  for (std::size_t l = 0; l < s.m_lstm.size(); ++l) {
    const int li = static_cast<int>(l);
    ck.tensors["opt.m." + lstm_tensor_name(li, "w")] = to_blob(s.m_lstm[l].w);
    ck.tensors["opt.m." + lstm_tensor_name(li, "b")] = to_blob(s.m_lstm[l].b);
    ck.tensors["opt.v." + lstm_tensor_name(li, "w")] = to_blob(s.v_lstm[l].w);
    ck.tensors["opt.v." + lstm_tensor_name(li, "b")] = to_blob(s.v_lstm[l].b);
  }
  ck.tensors["opt.m.input_embed"] = to_blob(s.m_in);
  ck.tensors["opt.v.input_embed"] = to_blob(s.v_in);
  ck.tensors["opt.m.output_embed"] = to_blob(s.m_out);
  ck.tensors["opt.v.output_embed"] = to_blob(s.v_out);
  if (s.m_bias.size() > 0) {
    ck.tensors["opt.m.nce_bias"] = to_blob(s.m_bias);
    ck.tensors["opt.v.nce_bias"] = to_blob(s.v_bias);
  }
}

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_ppl = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  double tokens_per_sec = 0.0;
};

struct TrainStats {
  std::vector<EpochStats> epochs;
  std::int64_t total_tokens = 0;  // monotone token counter
  bool diverged = false;
  std::string divergence_reason;
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
};

struct TrainOptions {
  std::string out_dir;                         // empty: no checkpoints
  std::ostream* log = nullptr;                 // per-epoch TSV lines
  const std::vector<int>* valid_ids = nullptr;
  int eos_id = 0;
  std::uint64_t vocab_hash = 0;
};

inline std::string epoch_checkpoint_name(int epoch) {
  std::ostringstream ss;
  ss << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return ss.str();
}

inline TrainStats train(ModelParams& params, BatchPlan& plan,
                        const AliasTable& alias, const UnigramDistribution& dist,
                        const TrainConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  params.config.validate();
  if (plan.batch_size() != cfg.batch_size || plan.bptt_len() != cfg.bptt_len) {
    throw std::invalid_argument("train: batch plan does not match config");
  }

  const int batch = cfg.batch_size;
  const int steps_t = cfg.bptt_len;
  const int k = params.config.k;
  const Mode mode = params.config.mode;
  const Rng noise_root = Rng(cfg.seed).split(1);
  const Rng drop_root = Rng(cfg.seed).split(2);

  AdamState adam;
  if (cfg.optimizer == Optimizer::kAdam) {
    adam = AdamState::zeros_like(params);
  }

  const bool write_files = !opts.out_dir.empty();
  if (write_files) {
    std::filesystem::create_directories(opts.out_dir);
  }
  auto write_checkpoint = [&](const std::string& name, int epoch) {
    Checkpoint ck = checkpoint_from_model(params, dist, opts.vocab_hash,
                                          static_cast<std::uint32_t>(epoch));
    if (cfg.optimizer == Optimizer::kAdam) {
      pack_adam(ck, adam);
    }
    save_checkpoint(ck, opts.out_dir + "/" + name);
  };

  TrainStats stats;
  const int nthreads = std::min(cfg.threads, batch);

  struct ShardResult {
    Gradients grads;
    StepLoss loss;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg, epoch);
    const auto epoch_start = std::chrono::steady_clock::now();
    plan.reset();
    LstmState state = zero_state(params.config, batch);
    const Rng epoch_noise = noise_root.split(static_cast<std::uint64_t>(epoch));
    const Rng epoch_drop = drop_root.split(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    std::int64_t step_count = 0;
    std::int64_t epoch_tokens = 0;
    Eigen::MatrixXi inputs, targets;

    try {
      while (plan.next(inputs, targets)) {
        const auto step_id = static_cast<std::uint64_t>(step_count);
        Gradients grads = zero_lstm_grads(params);
        double step_loss_value = 0.0;

        const std::int64_t norm_positions =
            static_cast<std::int64_t>(batch) * steps_t;

        auto run_shard = [&](int shard, int row0, int rows, ShardResult* out) {
          Rng noise_rng =
              epoch_noise.split(step_id).split(static_cast<std::uint64_t>(shard));
          Rng drop_rng =
              epoch_drop.split(step_id).split(static_cast<std::uint64_t>(shard));
          std::vector<int> noise =
              draw_noise(alias, noise_rng, rows, steps_t, k, cfg.share_noise);

          LstmState shard_state;
          shard_state.h.resize(state.h.size());
          shard_state.c.resize(state.c.size());
          for (std::size_t l = 0; l < state.h.size(); ++l) {
            shard_state.h[l] = state.h[l].middleRows(row0, rows);
            shard_state.c[l] = state.c[l].middleRows(row0, rows);
          }
          const Eigen::MatrixXi in_block = inputs.middleRows(row0, rows);
          const Eigen::MatrixXi tg_block = targets.middleRows(row0, rows);

          ForwardResult fwd =
              forward(params, in_block, shard_state, /*train_mode=*/true, &drop_rng);
          out->loss = step_loss(params, mode, fwd.context, tg_block, noise, k,
                                dist, norm_positions);
          out->grads = backward(params, fwd.tape, out->loss.grad_context);
          merge_objective_grads(out->grads, out->loss);

          for (std::size_t l = 0; l < state.h.size(); ++l) {
            state.h[l].middleRows(row0, rows) = shard_state.h[l];
            state.c[l].middleRows(row0, rows) = shard_state.c[l];
          }
        };

        std::vector<ShardResult> results(static_cast<std::size_t>(nthreads));
        if (nthreads == 1) {
          run_shard(0, 0, batch, &results[0]);
        } else {
          // Exceptions may not escape a worker; park them and rethrow on
          // the training thread so divergence handling sees them.
          std::vector<std::exception_ptr> errors(
              static_cast<std::size_t>(nthreads));
          auto guarded = [&run_shard, &errors](int shard, int row0, int rows,
                                               ShardResult* out) {
            try {
              run_shard(shard, row0, rows, out);
            } catch (...) {
              errors[static_cast<std::size_t>(shard)] = std::current_exception();
            }
          };
          std::vector<std::thread> pool;
          const int base = batch / nthreads;
          const int extra = batch % nthreads;
          int row0 = 0;
          for (int sh = 0; sh < nthreads; ++sh) {
            const int rows = base + (sh < extra ? 1 : 0);
            pool.emplace_back(guarded, sh, row0, rows,
                              &results[static_cast<std::size_t>(sh)]);
            row0 += rows;
          }
          for (auto& th : pool) {
            th.join();
          }
          for (const auto& err : errors) {
            if (err) {
              std::rethrow_exception(err);
            }
          }
        }

        for (const auto& r : results) {
          step_loss_value += r.loss.value;
          for (std::size_t l = 0; l < grads.lstm.size(); ++l) {
            grads.lstm[l].w += r.grads.lstm[l].w;
            grads.lstm[l].b += r.grads.lstm[l].b;
          }
          for (const auto& [id, row] : r.grads.input_embed) {
            auto [it, ins] = grads.input_embed.try_emplace(
                id, Eigen::RowVectorXd::Zero(row.cols()));
            it->second += row;
          }
          for (const auto& [id, row] : r.grads.output_embed) {
            auto [it, ins] = grads.output_embed.try_emplace(
                id, Eigen::RowVectorXd::Zero(row.cols()));
            it->second += row;
          }
          for (const auto& [id, v] : r.grads.nce_bias) {
            grads.nce_bias[id] += v;
          }
        }

        if (!std::isfinite(step_loss_value)) {
          throw NonFiniteError("train: non-finite loss at epoch " +
                               std::to_string(epoch) + ", step " +
                               std::to_string(step_count));
        }

        clip_gradients(grads, cfg.clip_norm);
        if (cfg.optimizer == Optimizer::kSgd) {
          sgd_step(params, grads, lr);
        } else {
          adam_step(params, grads, adam, lr, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
        }

        loss_sum += step_loss_value;
        ++step_count;
        epoch_tokens += norm_positions;
        stats.total_tokens += norm_positions;
      }
    } catch (const NonFiniteError& e) {
      // Abort; checkpoints from completed epochs stay on disk.
      stats.diverged = true;
      stats.divergence_reason = e.what();
      return stats;
    }

    EpochStats es;
    es.epoch = epoch;
    es.lr = lr;
    es.train_loss = step_count > 0 ? loss_sum / static_cast<double>(step_count) : 0.0;
    es.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
            .count();
    es.tokens_per_sec =
        es.wall_seconds > 0.0 ? static_cast<double>(epoch_tokens) / es.wall_seconds : 0.0;

    if (opts.valid_ids != nullptr && !opts.valid_ids->empty()) {
      es.valid_ppl = perplexity(params, *opts.valid_ids, opts.eos_id, dist);
    }

    if (write_files) {
      write_checkpoint(epoch_checkpoint_name(epoch), epoch);
      if (std::isfinite(es.valid_ppl) && es.valid_ppl < stats.best_valid_ppl) {
        write_checkpoint("best.ckpt", epoch);
      }
    }
    if (std::isfinite(es.valid_ppl) && es.valid_ppl < stats.best_valid_ppl) {
      stats.best_valid_ppl = es.valid_ppl;
      stats.best_epoch = epoch;
    }

    if (opts.log != nullptr) {
      (*opts.log) << epoch << '\t' << std::setprecision(10) << lr << '\t'
                  << es.train_loss << '\t' << es.valid_ppl << '\t'
                  << std::setprecision(6) << es.tokens_per_sec << '\n';
      opts.log->flush();
    }
    stats.epochs.push_back(es);
  }
  return stats;
}

}  // namespace pmilm
