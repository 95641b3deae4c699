// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the operator binary. The test runner exports
// PMILM_BIN with the path to the built executable; each case shells out
// and inspects exit codes, stdout, and the files left behind.

#include "pmilm/checkpoint.hpp"
#include "pmilm/corpus.hpp"
#include "pmilm/evaluator.hpp"
#include "pmilm/model.hpp"
#include "support/tempdir.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace pmilm;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

std::string pmilm_bin() {
  const char* bin = std::getenv("PMILM_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

CmdResult run_cmd(const std::string& args) {
  const std::string cmd = pmilm_bin() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) {
    r.output.append(buf, n);
  }
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::string& path) { return "\"" + path + "\""; }

std::string fixture_path(const std::string& name) {
  return std::string(PMILM_SOURCE_DIR) + "/data/fixture/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    out.push_back(line);
  }
  return out;
}

int count_tabs(const std::string& line) {
  int tabs = 0;
  for (char ch : line) tabs += ch == '\t' ? 1 : 0;
  return tabs;
}

// "perplexity: 41.2" somewhere in the report text.
double parse_perplexity(const std::string& text) {
  const auto pos = text.find("perplexity:");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + std::string("perplexity:").size()));
}

// Builds a vocab file plus an all-zero PMI checkpoint wired to it, so
// eval/predict runs have a model whose behavior is known in closed form.
struct ZeroModelSetup {
  std::string vocab_path;
  std::string ckpt_path;
  Vocabulary vocab;
  UnigramDistribution dist;
};

ZeroModelSetup make_zero_model(const pmilm_test::TempDir& tmp) {
  ZeroModelSetup s;
  s.vocab_path = tmp.file("vocab.tsv");
  s.ckpt_path = tmp.file("zero.ckpt");

  const CmdResult r = run_cmd("vocab --train " + q(fixture_path("train.txt")) +
                              " --out " + q(s.vocab_path) + " --max-size 50");
  REQUIRE(r.exit_code == 0);

  s.vocab = load_vocab(s.vocab_path);
  const std::vector<int> train_ids =
      encode_file(s.vocab, fixture_path("train.txt"), true);
  s.dist = unigram_distribution(s.vocab, train_ids);

  ModelConfig cfg;
  cfg.vocab_size = s.vocab.size();
  cfg.d = 16;
  cfg.hidden = 16;
  cfg.layers = 1;
  cfg.k = 10;
  cfg.mode = Mode::kPmi;
  Rng rng(1);
  ModelParams params = init_params(cfg, rng);
  params.input_embed.setZero();
  params.output_embed.setZero();
  for (auto& layer : params.lstm) {
    layer.w.setZero();
    layer.b.setZero();
  }
  const Checkpoint ck =
      checkpoint_from_model(params, s.dist, vocab_hash(s.vocab), 1);
  save_checkpoint(ck, s.ckpt_path);
  return s;
}

}  // namespace

TEST_CASE("the vocab subcommand writes token and count lines", "[cli]") {
  pmilm_test::TempDir tmp;

  SECTION("fixture corpus fills the size cap") {
    const std::string out = tmp.file("vocab.tsv");
    const CmdResult r =
        run_cmd("vocab --train " + q(fixture_path("train.txt")) + " --out " +
                q(out) + " --max-size 50");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("wrote 50 tokens") != std::string::npos);

    const auto lines = lines_of(read_file(out));
    REQUIRE(lines.size() == 50);
    CHECK(lines[0].rfind("<eos>\t", 0) == 0);
    CHECK(lines[1] == "<unk>\t0");
    for (const auto& line : lines) {
      CHECK(count_tabs(line) == 1);
    }
  }

  SECTION("a tiny cap keeps only the specials") {
    const std::string out = tmp.file("tiny.tsv");
    const CmdResult r =
        run_cmd("vocab --train " + q(fixture_path("train.txt")) + " --out " +
                q(out) + " --max-size 2");
    CHECK(r.exit_code == 0);
    CHECK(lines_of(read_file(out)).size() == 2);
  }

  SECTION("an empty corpus yields only the specials") {
    const std::string corpus = tmp.file("empty.txt");
    std::ofstream(corpus).close();
    const std::string out = tmp.file("empty.tsv");
    const CmdResult r =
        run_cmd("vocab --train " + q(corpus) + " --out " + q(out));
    CHECK(r.exit_code == 0);
    const auto lines = lines_of(read_file(out));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "<eos>\t0");
    CHECK(lines[1] == "<unk>\t0");
  }
}

TEST_CASE("usage errors exit with code 2", "[cli]") {
  CHECK(run_cmd("train --mode quux --train x --vocab y --out z").exit_code ==
        2);
  CHECK(run_cmd("eval --no-such-flag").exit_code == 2);
  CHECK(run_cmd("vocab --out only.tsv").exit_code == 2);  // missing --train
  CHECK(run_cmd("").exit_code == 2);                      // no subcommand

  const CmdResult help = run_cmd("--help");
  CHECK(help.exit_code == 0);
  for (const char* sub : {"vocab", "train", "eval", "predict", "verify"}) {
    CHECK(help.output.find(sub) != std::string::npos);
  }
}

TEST_CASE("eval of a zero checkpoint reproduces the unigram baseline",
          "[cli]") {
  pmilm_test::TempDir tmp;
  const ZeroModelSetup s = make_zero_model(tmp);

  const CmdResult r = run_cmd("eval --checkpoint " + q(s.ckpt_path) +
                              " --test " + q(fixture_path("test.txt")) +
                              " --vocab " + q(s.vocab_path));
  REQUIRE(r.exit_code == 0);
  const double got = parse_perplexity(r.output);

  // Count-based unigram cross entropy of the test split, computed here
  // from the same vocabulary and training stream. Zero-count entries get
  // the same 1/(N+|V|) floor the scorer applies, which inflates the
  // normalizer slightly above 1.
  const std::vector<int> test_ids =
      encode_file(s.vocab, fixture_path("test.txt"), true);
  const double floor =
      1.0 / static_cast<double>(s.dist.total_count + s.dist.size());
  double mass = 0.0;
  for (const double p : s.dist.probs) {
    mass += p > 0.0 ? p : floor;
  }
  double ce = 0.0;
  for (int id : test_ids) {
    ce -= std::log(s.dist.probs[static_cast<std::size_t>(id)] / mass);
  }
  const double want = std::exp(ce / static_cast<double>(test_ids.size()));
  CHECK(got == Catch::Approx(want).epsilon(1e-6));
}

TEST_CASE("eval refuses a vocabulary that mismatches the checkpoint",
          "[cli]") {
  pmilm_test::TempDir tmp;
  const ZeroModelSetup s = make_zero_model(tmp);

  const std::string other_vocab = tmp.file("other.tsv");
  REQUIRE(run_cmd("vocab --train " + q(fixture_path("train.txt")) + " --out " +
                  q(other_vocab) + " --max-size 10")
              .exit_code == 0);

  const CmdResult r = run_cmd("eval --checkpoint " + q(s.ckpt_path) +
                              " --test " + q(fixture_path("test.txt")) +
                              " --vocab " + q(other_vocab));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("does not match") != std::string::npos);
}

TEST_CASE("eval can dump per-token log probabilities", "[cli]") {
  pmilm_test::TempDir tmp;
  const ZeroModelSetup s = make_zero_model(tmp);

  const std::string dump_path = tmp.file("tokens.tsv");
  const CmdResult r = run_cmd("eval --checkpoint " + q(s.ckpt_path) +
                              " --test " + q(fixture_path("test.txt")) +
                              " --vocab " + q(s.vocab_path) +
                              " --dump-tokens " + q(dump_path));
  REQUIRE(r.exit_code == 0);

  const std::vector<int> test_ids =
      encode_file(s.vocab, fixture_path("test.txt"), true);
  const auto lines = lines_of(read_file(dump_path));
  REQUIRE(lines.size() == test_ids.size());
  double sum = 0.0;
  for (const auto& line : lines) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    sum += std::stod(line.substr(tab + 1));
  }
  // The report prints 8 significant digits, which bounds the comparison.
  const double got = parse_perplexity(r.output);
  CHECK(std::exp(-sum / static_cast<double>(test_ids.size())) ==
        Catch::Approx(got).epsilon(1e-7));
}

TEST_CASE("predict lists descending probabilities for the zero model",
          "[cli]") {
  pmilm_test::TempDir tmp;
  const ZeroModelSetup s = make_zero_model(tmp);

  const CmdResult r = run_cmd("predict --checkpoint " + q(s.ckpt_path) +
                              " --vocab " + q(s.vocab_path) +
                              " --prefix \"w1 w2\" --top 3");
  REQUIRE(r.exit_code == 0);
  const auto lines = lines_of(r.output);
  REQUIRE(lines.size() == 3);

  // The zero model predicts the unigram distribution, so the first line
  // must name the most frequent token in the training stream.
  int best = 0;
  for (int i = 1; i < s.dist.size(); ++i) {
    if (s.dist.probs[static_cast<std::size_t>(i)] >
        s.dist.probs[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  double prev = 1.0;
  for (const auto& line : lines) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const double p = std::stod(line.substr(tab + 1));
    CHECK(p <= prev);
    prev = p;
  }
  CHECK(lines[0].substr(0, lines[0].find('\t')) ==
        s.vocab.id_to_token[static_cast<std::size_t>(best)]);
}

TEST_CASE("training from the fixture preset leaves a full run directory",
          "[cli]") {
  pmilm_test::TempDir tmp;
  const std::string vocab_path = tmp.file("vocab.tsv");
  REQUIRE(run_cmd("vocab --train " + q(fixture_path("train.txt")) + " --out " +
                  q(vocab_path) + " --max-size 50")
              .exit_code == 0);

  const std::string out_dir = tmp.file("run");
  const CmdResult r = run_cmd(
      "train --config " + q(std::string(PMILM_SOURCE_DIR) +
                            "/configs/fixture.cfg") +
      " --mode pmi --train " + q(fixture_path("train.txt")) + " --valid " +
      q(fixture_path("valid.txt")) + " --vocab " + q(vocab_path) + " --out " +
      q(out_dir));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);

  for (int epoch = 1; epoch <= 10; ++epoch) {
    std::ostringstream name;
    name << out_dir << "/epoch_" << (epoch < 10 ? "00" : "0") << epoch
         << ".ckpt";
    CHECK(std::filesystem::exists(name.str()));
  }
  CHECK(std::filesystem::exists(out_dir + "/best.ckpt"));
  CHECK_NOTHROW(model_from_checkpoint(load_checkpoint(out_dir + "/best.ckpt")));

  const std::string manifest = read_file(out_dir + "/manifest.json");
  CHECK(manifest.find("\"status\": \"completed\"") != std::string::npos);
  CHECK(manifest.find("\"vocab_hash\"") != std::string::npos);
  CHECK(manifest.find("\"train\"") != std::string::npos);

  const auto log_lines = lines_of(read_file(out_dir + "/train_log.tsv"));
  REQUIRE(log_lines.size() == 10);
  for (const auto& line : log_lines) {
    CHECK(count_tabs(line) == 4);
  }

  // The reported validation perplexity must comfortably beat the unigram
  // baseline (the corpus is first-order Markov, far from unigram).
  const Checkpoint best = load_checkpoint(out_dir + "/best.ckpt");
  const ModelParams params = model_from_checkpoint(best);
  const UnigramDistribution dist = noise_from_checkpoint(best);
  const Vocabulary vocab = load_vocab(vocab_path);
  const std::vector<int> valid_ids =
      encode_file(vocab, fixture_path("valid.txt"), true);
  const double model_ppl = perplexity(params, valid_ids, vocab.eos_id, dist);

  double ce = 0.0;
  for (int id : valid_ids) {
    ce -= std::log(dist.probs[static_cast<std::size_t>(id)]);
  }
  const double unigram_ppl =
      std::exp(ce / static_cast<double>(valid_ids.size()));
  INFO("model ppl " << model_ppl << " vs unigram " << unigram_ppl);
  CHECK(model_ppl < unigram_ppl);
}

TEST_CASE("training runs with the same seed are byte-identical", "[cli]") {
  pmilm_test::TempDir tmp;
  const std::string vocab_path = tmp.file("vocab.tsv");
  REQUIRE(run_cmd("vocab --train " + q(fixture_path("train.txt")) + " --out " +
                  q(vocab_path) + " --max-size 50")
              .exit_code == 0);

  const std::string cfg_path = tmp.file("short.cfg");
  {
    std::ofstream cfg(cfg_path);
    cfg << "d = 16\nhidden = 16\nlayers = 1\ndropout = 0.0\nk = 5\n"
        << "optimizer = sgd\nlr0 = 1.0\nepochs = 2\n"
        << "batch_size = 10\nbptt_len = 10\nseed = 9\n";
  }

  auto run_once = [&](const std::string& out_dir) {
    return run_cmd("train --config " + q(cfg_path) + " --mode nce --train " +
                   q(fixture_path("train.txt")) + " --vocab " + q(vocab_path) +
                   " --out " + q(out_dir));
  };
  const CmdResult r1 = run_once(tmp.file("run_a"));
  const CmdResult r2 = run_once(tmp.file("run_b"));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);

  for (const char* name : {"epoch_001.ckpt", "epoch_002.ckpt"}) {
    const std::string a = tmp.file("run_a") + "/" + name;
    const std::string b = tmp.file("run_b") + "/" + name;
    REQUIRE(std::filesystem::exists(a));
    REQUIRE(std::filesystem::exists(b));
    CHECK(read_file(a) == read_file(b));
  }
}

TEST_CASE("verify reports closed-form identities as passing", "[cli]") {
  const CmdResult r1 = run_cmd("verify --seed 4 --instances 20 --size 4");
  CHECK(r1.exit_code == 0);
  CHECK(r1.output.find("posterior identity") != std::string::npos);
  CHECK(r1.output.find("factorization optimum") != std::string::npos);
  CHECK(r1.output.find("FAIL") == std::string::npos);

  const CmdResult r2 = run_cmd("verify --seed 4 --instances 20 --size 4");
  CHECK(r2.output == r1.output);  // same seed, same transcript
}
