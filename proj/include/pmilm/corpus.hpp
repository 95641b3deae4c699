// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: vocabulary construction, id encoding, the unigram
// noise distribution, and batch layout for truncated BPTT. Vocabulary and
// UnigramDistribution are immutable once built and safe to share across
// threads; BatchPlan iteration is single-consumer.

#pragma once

#include "pmilm/util.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace pmilm {

inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

struct Vocabulary {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  std::vector<std::int64_t> counts;  // raw corpus counts, by id
  int eos_id = 0;
  int unk_id = 1;

  int size() const { return static_cast<int>(id_to_token.size()); }

  // OOV tokens map to unk.
  int lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk_id : it->second;
  }
};

// Keeps the two specials plus up to max_size-2 most frequent tokens with
// count >= min_count. Ties break by first occurrence. Literal "<eos>" /
// "<unk>" tokens in the input count toward the specials themselves.
inline Vocabulary build_vocab(const std::vector<std::string>& tokens,
                              int max_size, int min_count) {
  if (max_size < 2) {
    throw std::invalid_argument("build_vocab: max_size must be >= 2");
  }
  if (min_count < 1) {
    throw std::invalid_argument("build_vocab: min_count must be >= 1");
  }

  struct Entry {
    std::int64_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  freq.reserve(tokens.size() / 4 + 16);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto [it, inserted] = freq.try_emplace(tokens[i]);
    if (inserted) {
      it->second.first_seen = i;
    }
    ++it->second.count;
  }

  Vocabulary v;
  auto add = [&v](const std::string& tok, std::int64_t count) {
    v.token_to_id.emplace(tok, v.size());
    v.id_to_token.push_back(tok);
    v.counts.push_back(count);
  };
  auto special_count = [&freq](const char* tok) {
    auto it = freq.find(tok);
    return it == freq.end() ? std::int64_t{0} : it->second.count;
  };
  add(kEosToken, special_count(kEosToken));
  add(kUnkToken, special_count(kUnkToken));

  std::vector<std::pair<std::string, Entry>> ranked;
  ranked.reserve(freq.size());
  for (const auto& [tok, e] : freq) {
    if (tok == kEosToken || tok == kUnkToken) {
      continue;
    }
    if (e.count >= min_count) {
      ranked.emplace_back(tok, e);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) {
      return a.second.count > b.second.count;
    }
    return a.second.first_seen < b.second.first_seen;
  });

  const std::size_t room = static_cast<std::size_t>(max_size) - 2;
  if (ranked.size() > room) {
    ranked.resize(room);
  }
  for (const auto& [tok, e] : ranked) {
    add(tok, e.count);
  }
  return v;
}

inline Vocabulary build_vocab_file(const std::string& path, int max_size,
                                   int min_count) {
  std::vector<std::string> tokens;
  for_each_token_line(path, [&tokens](std::vector<std::string> line) {
    for (auto& t : line) {
      tokens.push_back(std::move(t));
    }
  });
  return build_vocab(tokens, max_size, min_count);
}

inline void encode_line(const Vocabulary& v,
                        const std::vector<std::string>& tokens,
                        bool append_eos, std::vector<int>& out) {
  for (const auto& t : tokens) {
    out.push_back(v.lookup(t));
  }
  if (append_eos) {
    out.push_back(v.eos_id);
  }
}

inline std::vector<int> encode(
    const Vocabulary& v, const std::vector<std::vector<std::string>>& lines,
    bool append_eos_per_line) {
  std::vector<int> out;
  for (const auto& line : lines) {
    encode_line(v, line, append_eos_per_line, out);
  }
  return out;
}

inline std::vector<int> encode_file(const Vocabulary& v,
                                    const std::string& path,
                                    bool append_eos_per_line) {
  std::vector<int> out;
  for_each_token_line(path, [&](const std::vector<std::string>& line) {
    encode_line(v, line, append_eos_per_line, out);
  });
  return out;
}

inline std::vector<std::string> decode(const Vocabulary& v,
                                       const std::vector<int>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= v.size()) {
      throw std::out_of_range("decode: id out of range");
    }
    out.push_back(v.id_to_token[static_cast<std::size_t>(id)]);
  }
  return out;
}

// One "token<TAB>count" line per id.
inline std::string vocab_to_text(const Vocabulary& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    out += v.id_to_token[static_cast<std::size_t>(i)];
    out += '\t';
    out += std::to_string(v.counts[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

inline void save_vocab(const Vocabulary& v, const std::string& path) {
  atomic_write_file(path, vocab_to_text(v));
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open vocabulary file: " + path);
  }
  Vocabulary v;
  v.eos_id = -1;
  v.unk_id = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("malformed vocabulary line: " + line);
    }
    const std::string tok = line.substr(0, tab);
    const std::int64_t count = std::stoll(line.substr(tab + 1));
    if (tok == kEosToken) {
      v.eos_id = v.size();
    } else if (tok == kUnkToken) {
      v.unk_id = v.size();
    }
    v.token_to_id.emplace(tok, v.size());
    v.id_to_token.push_back(tok);
    v.counts.push_back(count);
  }
  if (v.eos_id < 0 || v.unk_id < 0) {
    throw std::runtime_error("vocabulary file lacks <eos>/<unk>: " + path);
  }
  return v;
}

// Stable identity of a vocabulary; stored in checkpoints.
inline std::uint64_t vocab_hash(const Vocabulary& v) {
  return fnv1a64(vocab_to_text(v));
}

struct UnigramDistribution {
  std::vector<double> probs;        // sums to 1; zero-count ids get 0
  double smoothing_exponent = 1.0;
  std::int64_t total_count = 0;     // encoded stream length behind counts

  int size() const { return static_cast<int>(probs.size()); }
};

// probs[i] proportional to count(i)^exponent over the encoded stream.
inline UnigramDistribution unigram_distribution(const Vocabulary& v,
                                                const std::vector<int>& ids,
                                                double exponent = 1.0) {
  if (ids.empty()) {
    throw std::invalid_argument("unigram_distribution: empty id stream");
  }
  if (!(exponent > 0.0)) {
    throw std::invalid_argument("unigram_distribution: exponent must be > 0");
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(v.size()), 0);
  for (int id : ids) {
    if (id < 0 || id >= v.size()) {
      throw std::out_of_range("unigram_distribution: id out of range");
    }
    ++counts[static_cast<std::size_t>(id)];
  }
  UnigramDistribution d;
  d.smoothing_exponent = exponent;
  d.total_count = static_cast<std::int64_t>(ids.size());
  d.probs.resize(counts.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0) {
      d.probs[i] = std::pow(static_cast<double>(counts[i]), exponent);
      z += d.probs[i];
    }
  }
  if (z <= 0.0) {
    throw std::runtime_error("unigram_distribution: all counts are zero");
  }
  for (auto& p : d.probs) {
    p /= z;
  }
  return d;
}

// B parallel streams over the corpus prefix of length B*floor(N/B); each
// step yields B x T inputs and the next-token targets, advancing by T.
// Tokens beyond the prefix are dropped, as is a trailing window shorter
// than T.
class BatchPlan {
 public:
  BatchPlan(std::vector<int> ids, int batch_size, int bptt_len)
      : ids_(std::move(ids)), batch_(batch_size), bptt_(bptt_len) {
    if (batch_ < 1 || bptt_ < 1) {
      throw std::invalid_argument("BatchPlan: batch_size and bptt_len must be >= 1");
    }
    const std::int64_t need =
        static_cast<std::int64_t>(batch_) * (bptt_ + 1);
    if (static_cast<std::int64_t>(ids_.size()) < need) {
      throw std::invalid_argument(
          "BatchPlan: corpus too small: " + std::to_string(ids_.size()) +
          " tokens, need at least batch_size*(bptt_len+1) = " +
          std::to_string(need));
    }
    stream_len_ = static_cast<std::int64_t>(ids_.size()) / batch_;
    steps_ = (stream_len_ - 1) / bptt_;
    cursor_ = 0;
  }

  int batch_size() const { return batch_; }
  int bptt_len() const { return bptt_; }
  std::int64_t stream_len() const { return stream_len_; }
  std::int64_t steps_per_epoch() const { return steps_; }
  std::int64_t tokens_per_epoch() const { return steps_ * batch_ * bptt_; }

  void reset() { cursor_ = 0; }

  // Fills inputs/targets (B x T); returns false at epoch end.
  bool next(Eigen::MatrixXi& inputs, Eigen::MatrixXi& targets) {
    if (cursor_ + bptt_ + 1 > stream_len_) {
      return false;
    }
    inputs.resize(batch_, bptt_);
    targets.resize(batch_, bptt_);
    for (int b = 0; b < batch_; ++b) {
      const std::int64_t base = static_cast<std::int64_t>(b) * stream_len_;
      for (int t = 0; t < bptt_; ++t) {
        inputs(b, t) = ids_[static_cast<std::size_t>(base + cursor_ + t)];
        targets(b, t) = ids_[static_cast<std::size_t>(base + cursor_ + t + 1)];
      }
    }
    cursor_ += bptt_;
    return true;
  }

 private:
  std::vector<int> ids_;
  int batch_;
  int bptt_;
  std::int64_t stream_len_ = 0;
  std::int64_t steps_ = 0;
  std::int64_t cursor_ = 0;
};

inline BatchPlan make_batches(std::vector<int> ids, int batch_size,
                              int bptt_len) {
  return BatchPlan(std::move(ids), batch_size, bptt_len);
}

}  // namespace pmilm
