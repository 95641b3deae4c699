// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Run manifest: a JSON record of everything needed to reproduce or audit
// a training run (config snapshot, seed, corpus hashes, artifact version,
// timestamps). Written atomically next to the checkpoints.

#pragma once

#include "pmilm/config.hpp"
#include "pmilm/util.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <map>
#include <string>

namespace pmilm {

inline constexpr const char* kArtifactVersion = "pmilm-0.1.0";

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  RunConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, std::uint64_t> corpus_hashes;  // role -> fnv1a64
  std::uint64_t vocab_hash = 0;
  std::string version = kArtifactVersion;
  std::string started_at;
  std::string finished_at;
  std::string status;  // "completed" or "diverged"
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json cfg;
  cfg["mode"] = mode_name(m.config.model.mode);
  cfg["d"] = m.config.model.d;
  cfg["hidden"] = m.config.model.hidden;
  cfg["layers"] = m.config.model.layers;
  cfg["dropout"] = m.config.model.dropout;
  cfg["k"] = m.config.model.k;
  cfg["optimizer"] = optimizer_name(m.config.train.optimizer);
  cfg["lr0"] = m.config.train.lr0;
  cfg["decay_factor"] = m.config.train.decay_factor;
  cfg["decay_start_epoch"] = m.config.train.decay_start_epoch;
  cfg["clip_norm"] = m.config.train.clip_norm;
  cfg["epochs"] = m.config.train.epochs;
  cfg["batch_size"] = m.config.train.batch_size;
  cfg["bptt_len"] = m.config.train.bptt_len;
  cfg["share_noise"] = m.config.train.share_noise;
  cfg["threads"] = m.config.train.threads;
  cfg["adam_beta1"] = m.config.train.adam_beta1;
  cfg["adam_beta2"] = m.config.train.adam_beta2;
  cfg["adam_eps"] = m.config.train.adam_eps;
  cfg["vocab_max_size"] = m.config.vocab_max_size;
  cfg["vocab_min_count"] = m.config.vocab_min_count;
  cfg["noise_exponent"] = m.config.noise_exponent;

  nlohmann::json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["config"] = cfg;
  nlohmann::json hashes;
  for (const auto& [role, h] : m.corpus_hashes) {
    hashes[role] = h;
  }
  j["corpus_hashes"] = hashes;
  j["vocab_hash"] = m.vocab_hash;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["status"] = m.status;
  return j;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
  atomic_write_file(path, manifest_to_json(m).dump(2) + "\n");
}

}  // namespace pmilm
