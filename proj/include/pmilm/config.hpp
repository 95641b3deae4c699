// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration. Lines are `key = value`, blank lines
// and `#` comments are skipped, and unknown keys are an error so typos
// fail loudly instead of silently training with defaults.

#pragma once

#include "pmilm/model.hpp"
#include "pmilm/trainer.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pmilm {

// Everything needed to reproduce a run except the corpus paths.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int vocab_max_size = 10000;
  int vocab_min_count = 1;
  double noise_exponent = 1.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(r);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

}  // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key,
                              const std::string& value) {
  using detail::to_double;
  using detail::to_int;
  using detail::to_u64;
  if (key == "mode") {
    cfg.model.mode = parse_mode(value);
  } else if (key == "d") {
    cfg.model.d = to_int(key, value);
  } else if (key == "hidden") {
    cfg.model.hidden = to_int(key, value);
  } else if (key == "layers") {
    cfg.model.layers = to_int(key, value);
  } else if (key == "dropout") {
    cfg.model.dropout = to_double(key, value);
  } else if (key == "k") {
    cfg.model.k = to_int(key, value);
  } else if (key == "optimizer") {
    cfg.train.optimizer = parse_optimizer(value);
  } else if (key == "lr0") {
    cfg.train.lr0 = to_double(key, value);
  } else if (key == "decay_factor") {
    cfg.train.decay_factor = to_double(key, value);
  } else if (key == "decay_start_epoch") {
    cfg.train.decay_start_epoch = to_int(key, value);
  } else if (key == "clip_norm") {
    cfg.train.clip_norm = to_double(key, value);
  } else if (key == "epochs") {
    cfg.train.epochs = to_int(key, value);
  } else if (key == "batch_size") {
    cfg.train.batch_size = to_int(key, value);
  } else if (key == "bptt_len") {
    cfg.train.bptt_len = to_int(key, value);
  } else if (key == "seed") {
    cfg.train.seed = to_u64(key, value);
  } else if (key == "share_noise") {
    cfg.train.share_noise = to_int(key, value) != 0;
  } else if (key == "threads") {
    cfg.train.threads = to_int(key, value);
  } else if (key == "adam_beta1") {
    cfg.train.adam_beta1 = to_double(key, value);
  } else if (key == "adam_beta2") {
    cfg.train.adam_beta2 = to_double(key, value);
  } else if (key == "adam_eps") {
    cfg.train.adam_eps = to_double(key, value);
  } else if (key == "vocab_max_size") {
    cfg.vocab_max_size = to_int(key, value);
  } else if (key == "vocab_min_count") {
    cfg.vocab_min_count = to_int(key, value);
  } else if (key == "noise_exponent") {
    cfg.noise_exponent = to_double(key, value);
  } else {
    throw std::invalid_argument("config: unknown key: " + key);
  }
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: " + stripped);
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " has an empty key or value");
    }
    apply_config_line(cfg, key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path);
  }
  return parse_config(in);
}

}  // namespace pmilm
