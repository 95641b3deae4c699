// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Single operator binary with subcommands:
//   vocab    build a vocabulary file from a tokenized corpus
//   train    train a PMI or NCE language model, writing checkpoints
//   eval     score a corpus with a checkpoint and report perplexity
//   predict  show the top next-word predictions after a prefix
//   verify   run the closed-form verification suite
//
// Exit codes: 0 success, 1 runtime failure (including divergence and
// tolerance breaches in verify), 2 usage error.

#include "pmilm/checkpoint.hpp"
#include "pmilm/config.hpp"
#include "pmilm/corpus.hpp"
#include "pmilm/evaluator.hpp"
#include "pmilm/manifest.hpp"
#include "pmilm/model.hpp"
#include "pmilm/oracle.hpp"
#include "pmilm/sampler.hpp"
#include "pmilm/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct VocabArgs {
  std::string train_path;
  std::string out_path;
  int max_size = 10000;
  int min_count = 1;
};

int cmd_vocab(const VocabArgs& a) {
  const pmilm::Vocabulary v =
      pmilm::build_vocab_file(a.train_path, a.max_size, a.min_count);
  pmilm::save_vocab(v, a.out_path);
  std::cout << "wrote " << v.size() << " tokens to " << a.out_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string mode;
  std::string train_path;
  std::string valid_path;
  std::string vocab_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> k;
};

int cmd_train(const TrainArgs& a) {
  pmilm::RunConfig cfg;
  if (!a.config_path.empty()) {
    cfg = pmilm::load_config(a.config_path);
  }
  if (!a.mode.empty()) cfg.model.mode = pmilm::parse_mode(a.mode);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.threads) cfg.train.threads = *a.threads;
  if (a.k) cfg.model.k = *a.k;

  const pmilm::Vocabulary vocab = pmilm::load_vocab(a.vocab_path);
  cfg.model.vocab_size = vocab.size();
  cfg.model.validate();
  cfg.train.validate();

  const std::vector<int> train_ids =
      pmilm::encode_file(vocab, a.train_path, /*append_eos_per_line=*/true);
  std::vector<int> valid_ids;
  if (!a.valid_path.empty()) {
    valid_ids = pmilm::encode_file(vocab, a.valid_path, true);
  }

  const pmilm::UnigramDistribution dist =
      pmilm::unigram_distribution(vocab, train_ids, cfg.noise_exponent);
  const pmilm::AliasTable alias = pmilm::build_alias(dist);

  pmilm::Rng root(cfg.train.seed);
  pmilm::Rng init_rng = root.split(0);
  pmilm::ModelParams params = pmilm::init_params(cfg.model, init_rng);
  pmilm::BatchPlan plan =
      pmilm::make_batches(train_ids, cfg.train.batch_size, cfg.train.bptt_len);

  pmilm::RunManifest manifest;
  manifest.config = cfg;
  manifest.seed = cfg.train.seed;
  manifest.corpus_hashes["train"] = pmilm::hash_file(a.train_path);
  if (!a.valid_path.empty()) {
    manifest.corpus_hashes["valid"] = pmilm::hash_file(a.valid_path);
  }
  manifest.vocab_hash = pmilm::vocab_hash(vocab);
  manifest.started_at = pmilm::iso8601_utc(std::chrono::system_clock::now());
  manifest.status = "running";
  std::filesystem::create_directories(a.out_dir);
  pmilm::save_manifest(manifest, a.out_dir + "/manifest.json");

  std::ofstream log(a.out_dir + "/train_log.tsv");
  pmilm::TrainOptions opts;
  opts.out_dir = a.out_dir;
  opts.log = &log;
  opts.valid_ids = valid_ids.empty() ? nullptr : &valid_ids;
  opts.eos_id = vocab.eos_id;
  opts.vocab_hash = manifest.vocab_hash;

  std::cout << "training mode=" << pmilm::mode_name(cfg.model.mode)
            << " |V|=" << vocab.size() << " tokens=" << train_ids.size()
            << " steps/epoch=" << plan.steps_per_epoch() << "\n";
  const pmilm::TrainStats stats =
      pmilm::train(params, plan, alias, dist, cfg.train, opts);

  manifest.finished_at = pmilm::iso8601_utc(std::chrono::system_clock::now());
  manifest.status = stats.diverged ? "diverged" : "completed";
  pmilm::save_manifest(manifest, a.out_dir + "/manifest.json");

  for (const auto& e : stats.epochs) {
    std::cout << "epoch " << e.epoch << ": lr=" << e.lr
              << " train_loss=" << e.train_loss << " valid_ppl=" << e.valid_ppl
              << " (" << static_cast<long>(e.tokens_per_sec) << " tok/s)\n";
  }
  if (stats.diverged) {
    std::cerr << "error: training diverged: " << stats.divergence_reason
              << " (checkpoints from completed epochs were kept)\n";
    return 1;
  }
  if (stats.best_epoch > 0) {
    std::cout << "best valid_ppl=" << stats.best_valid_ppl << " at epoch "
              << stats.best_epoch << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path;
  std::string test_path;
  std::string vocab_path;
  std::string dump_tokens;
};

// Loads a checkpoint plus its vocabulary and refuses on hash mismatch.
std::tuple<pmilm::ModelParams, pmilm::UnigramDistribution, pmilm::Vocabulary>
load_scoring_state(const std::string& checkpoint_path,
                   const std::string& vocab_path) {
  const pmilm::Checkpoint ck = pmilm::load_checkpoint(checkpoint_path);
  pmilm::Vocabulary vocab = pmilm::load_vocab(vocab_path);
  if (pmilm::vocab_hash(vocab) != ck.vocab_hash) {
    throw std::runtime_error(
        "vocabulary file does not match the checkpoint (hash mismatch)");
  }
  return {pmilm::model_from_checkpoint(ck), pmilm::noise_from_checkpoint(ck),
          std::move(vocab)};
}

int cmd_eval(const EvalArgs& a) {
  auto [params, dist, vocab] = load_scoring_state(a.checkpoint_path, a.vocab_path);
  const std::vector<int> ids = pmilm::encode_file(vocab, a.test_path, true);
  std::string dump;
  pmilm::EvalReport report =
      pmilm::evaluate(params, vocab, ids, dist, a.test_path,
                      a.dump_tokens.empty() ? nullptr : &dump);
  if (!a.dump_tokens.empty()) {
    pmilm::atomic_write_file(a.dump_tokens, dump);
  }
  std::cout << report.to_string();
  return 0;
}

struct PredictArgs {
  std::string checkpoint_path;
  std::string vocab_path;
  std::string prefix;
  int top = 10;
};

int cmd_predict(const PredictArgs& a) {
  auto [params, dist, vocab] = load_scoring_state(a.checkpoint_path, a.vocab_path);
  std::vector<int> prefix_ids;
  pmilm::encode_line(vocab, pmilm::split_whitespace(a.prefix),
                     /*append_eos=*/false, prefix_ids);
  const auto preds = pmilm::top_k_predictions(params, prefix_ids, vocab.eos_id,
                                              dist, a.top);
  for (const auto& p : preds) {
    std::cout << vocab.id_to_token[static_cast<std::size_t>(p.id)] << '\t'
              << std::setprecision(8) << p.prob << '\n';
  }
  return 0;
}

struct VerifyArgs {
  std::uint64_t seed = 1;
  int instances = 100;
  int size = 5;
};

int cmd_verify(const VerifyArgs& a) {
  bool ok = true;
  pmilm::Rng root(a.seed);

  double max_posterior_err = 0.0;
  pmilm::Rng inst_rng = root.split(1);
  for (int i = 0; i < a.instances; ++i) {
    const auto inst = pmilm::random_nce_instance(a.size, inst_rng);
    max_posterior_err = std::max(
        max_posterior_err, pmilm::verify_nce_posterior(inst.logits, inst.noise, 3));
  }
  const bool posterior_ok = max_posterior_err <= 1e-12;
  ok = ok && posterior_ok;
  std::cout << "posterior identity: max err " << max_posterior_err
            << " over " << a.instances << " instances (tol 1e-12): "
            << (posterior_ok ? "PASS" : "FAIL") << "\n";

  pmilm::Rng joint_rng = root.split(2);
  const pmilm::JointCounts joint = pmilm::random_joint(a.size, a.size, joint_rng);
  double prev_dev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  double full_rank_dev = 0.0;
  for (int d = 1; d <= a.size; ++d) {
    const auto res =
        pmilm::verify_pmi_optimum(joint, /*k=*/2, d, root.split(3).split(d));
    std::cout << "factorization optimum d=" << d << ": max deviation "
              << res.max_deviation << " (grad norm " << res.grad_norm << ", "
              << res.iterations << " iters)\n";
    monotone = monotone && res.max_deviation <= prev_dev + 1e-9;
    prev_dev = res.max_deviation;
    if (d == a.size) full_rank_dev = res.max_deviation;
  }
  const bool pmi_ok = full_rank_dev <= 1e-3 && monotone;
  ok = ok && pmi_ok;
  std::cout << "factorization optimum: full-rank deviation "
            << (full_rank_dev <= 1e-3 ? "<=" : ">") << " 1e-3, "
            << (monotone ? "monotone in d" : "NOT monotone in d") << ": "
            << (pmi_ok ? "PASS" : "FAIL") << "\n";

  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PMI and NCE language models"};
  app.require_subcommand(1);

  VocabArgs va;
  CLI::App* vocab = app.add_subcommand("vocab", "Build a vocabulary file");
  vocab->add_option("--train", va.train_path, "Tokenized training corpus")
      ->required()
      ->envname("PMILM_TRAIN");
  vocab->add_option("--out", va.out_path, "Output vocabulary path")
      ->required()
      ->envname("PMILM_OUT");
  vocab->add_option("--max-size", va.max_size, "Vocabulary size cap");
  vocab->add_option("--min-count", va.min_count, "Minimum token count");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a language model");
  train->add_option("--config", ta.config_path, "key=value config file")
      ->envname("PMILM_CONFIG");
  train->add_option("--mode", ta.mode, "Objective: pmi or nce")
      ->check(CLI::IsMember({"pmi", "nce"}))
      ->envname("PMILM_MODE");
  train->add_option("--train", ta.train_path, "Training corpus")
      ->required()
      ->envname("PMILM_TRAIN");
  train->add_option("--valid", ta.valid_path, "Validation corpus")
      ->envname("PMILM_VALID");
  train->add_option("--vocab", ta.vocab_path, "Vocabulary file")
      ->required()
      ->envname("PMILM_VOCAB");
  train->add_option("--out", ta.out_dir, "Output directory")
      ->required()
      ->envname("PMILM_OUT");
  train->add_option("--seed", ta.seed, "Seed override")->envname("PMILM_SEED");
  train->add_option("--threads", ta.threads, "Thread count override")
      ->envname("PMILM_THREADS");
  train->add_option("--k", ta.k, "Noise samples per position override")
      ->envname("PMILM_K");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate perplexity");
  eval->add_option("--checkpoint", ea.checkpoint_path, "Checkpoint file")
      ->required()
      ->envname("PMILM_CHECKPOINT");
  eval->add_option("--test", ea.test_path, "Evaluation corpus")
      ->required()
      ->envname("PMILM_TEST");
  eval->add_option("--vocab", ea.vocab_path, "Vocabulary file")
      ->required()
      ->envname("PMILM_VOCAB");
  eval->add_option("--dump-tokens", ea.dump_tokens,
                   "Write per-token log probs to this path");

  PredictArgs pa;
  CLI::App* predict = app.add_subcommand("predict", "Top next-word predictions");
  predict->add_option("--checkpoint", pa.checkpoint_path, "Checkpoint file")
      ->required()
      ->envname("PMILM_CHECKPOINT");
  predict->add_option("--vocab", pa.vocab_path, "Vocabulary file")
      ->required()
      ->envname("PMILM_VOCAB");
  predict->add_option("--prefix", pa.prefix, "Whitespace-tokenized prefix");
  predict->add_option("--top", pa.top, "Number of predictions");

  VerifyArgs vfa;
  CLI::App* verify = app.add_subcommand("verify", "Closed-form verification");
  verify->add_option("--seed", vfa.seed, "Seed")->envname("PMILM_SEED");
  verify->add_option("--instances", vfa.instances, "Posterior instances");
  verify->add_option("--size", vfa.size, "Vocabulary size of the instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help and friends
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*vocab) return cmd_vocab(va);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*predict) return cmd_predict(pa);
    if (*verify) return cmd_verify(vfa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
