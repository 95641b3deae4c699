// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned checkpoint container: a little-endian binary header (format
// version, model config, mode, vocabulary hash, noise-distribution
// metadata) followed by named tensors stored as 32-bit reals with explicit
// dimensions. Loading validates every tensor shape against the config.

#pragma once

#include "pmilm/corpus.hpp"
#include "pmilm/model.hpp"
#include "pmilm/util.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmilm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

struct TensorBlob {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = 1;
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint32_t epoch = 0;
  std::uint64_t adam_t = 0;  // 0 when no optimizer state is stored
  std::int64_t noise_total_count = 0;
  double noise_exponent = 1.0;
  std::map<std::string, TensorBlob> tensors;
};

namespace detail {

template <class T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

inline TensorBlob to_blob(const RowMatrixXd& m) {
  TensorBlob b;
  b.dims = {static_cast<std::uint32_t>(m.rows()),
            static_cast<std::uint32_t>(m.cols())};
  b.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      b.data.push_back(static_cast<float>(m(r, c)));
    }
  }
  return b;
}

inline TensorBlob to_blob(const Eigen::VectorXd& v) {
  TensorBlob b;
  b.dims = {static_cast<std::uint32_t>(v.size())};
  b.data.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    b.data.push_back(static_cast<float>(v(i)));
  }
  return b;
}

inline TensorBlob to_blob(const Eigen::RowVectorXd& v) {
  Eigen::VectorXd col = v.transpose();
  return to_blob(col);
}

inline RowMatrixXd blob_to_matrix(const TensorBlob& b, const std::string& name) {
  if (b.dims.size() != 2) {
    throw std::runtime_error("checkpoint: tensor " + name + " is not 2-d");
  }
  RowMatrixXd m(b.dims[0], b.dims[1]);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<double>(b.data[i++]);
    }
  }
  return m;
}

inline Eigen::VectorXd blob_to_vector(const TensorBlob& b, const std::string& name) {
  if (b.dims.size() != 1) {
    throw std::runtime_error("checkpoint: tensor " + name + " is not 1-d");
  }
  Eigen::VectorXd v(b.dims[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = static_cast<double>(b.data[static_cast<std::size_t>(i)]);
  }
  return v;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string buf;
  buf.append("PMLM", 4);
  detail::put<std::uint32_t>(buf, ck.version);
  detail::put<std::uint8_t>(buf, ck.config.mode == Mode::kNce ? 1 : 0);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.config.vocab_size));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.config.d));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.config.layers));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.config.hidden));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.config.k));
  detail::put<double>(buf, ck.config.dropout);
  detail::put<double>(buf, ck.config.forget_bias);
  detail::put<std::uint64_t>(buf, ck.vocab_hash);
  detail::put<std::uint32_t>(buf, ck.epoch);
  detail::put<std::uint64_t>(buf, ck.adam_t);
  detail::put<std::int64_t>(buf, ck.noise_total_count);
  detail::put<double>(buf, ck.noise_exponent);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, blob] : ck.tensors) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(blob.dims.size()));
    std::size_t n = 1;
    for (auto d : blob.dims) {
      detail::put<std::uint32_t>(buf, d);
      n *= d;
    }
    if (n != blob.data.size()) {
      throw std::logic_error("checkpoint: tensor " + name + " dims/data mismatch");
    }
    buf.append(reinterpret_cast<const char*>(blob.data.data()),
               blob.data.size() * sizeof(float));
  }
  atomic_write_file(path, buf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < 4 || buf.compare(0, 4, "PMLM") != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  off = 4;
  Checkpoint ck;
  ck.version = detail::take<std::uint32_t>(buf, off);
  if (ck.version != 1) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(ck.version));
  }
  ck.config.mode = detail::take<std::uint8_t>(buf, off) == 1 ? Mode::kNce : Mode::kPmi;
  ck.config.vocab_size = static_cast<int>(detail::take<std::uint32_t>(buf, off));
  ck.config.d = static_cast<int>(detail::take<std::uint32_t>(buf, off));
  ck.config.layers = static_cast<int>(detail::take<std::uint32_t>(buf, off));
  ck.config.hidden = static_cast<int>(detail::take<std::uint32_t>(buf, off));
  ck.config.k = static_cast<int>(detail::take<std::uint32_t>(buf, off));
  ck.config.dropout = detail::take<double>(buf, off);
  ck.config.forget_bias = detail::take<double>(buf, off);
  ck.vocab_hash = detail::take<std::uint64_t>(buf, off);
  ck.epoch = detail::take<std::uint32_t>(buf, off);
  ck.adam_t = detail::take<std::uint64_t>(buf, off);
  ck.noise_total_count = detail::take<std::int64_t>(buf, off);
  ck.noise_exponent = detail::take<double>(buf, off);
  const auto count = detail::take<std::uint32_t>(buf, off);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::take<std::uint32_t>(buf, off);
    if (off + name_len > buf.size()) {
      throw std::runtime_error("checkpoint: truncated tensor name");
    }
    std::string name = buf.substr(off, name_len);
    off += name_len;
    TensorBlob blob;
    const auto ndim = detail::take<std::uint32_t>(buf, off);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      blob.dims.push_back(detail::take<std::uint32_t>(buf, off));
      n *= blob.dims.back();
    }
    if (off + n * sizeof(float) > buf.size()) {
      throw std::runtime_error("checkpoint: truncated tensor data");
    }
    blob.data.resize(n);
    std::memcpy(blob.data.data(), buf.data() + off, n * sizeof(float));
    off += n * sizeof(float);
    ck.tensors.emplace(std::move(name), std::move(blob));
  }
  return ck;
}

inline std::string lstm_tensor_name(int layer, const char* part) {
  return "lstm" + std::to_string(layer) + "." + part;
}

// Packs model parameters and the training-time noise distribution.
inline Checkpoint checkpoint_from_model(const ModelParams& params,
                                        const UnigramDistribution& dist,
                                        std::uint64_t vocab_hash,
                                        std::uint32_t epoch) {
  Checkpoint ck;
  ck.config = params.config;
  ck.vocab_hash = vocab_hash;
  ck.epoch = epoch;
  ck.noise_total_count = dist.total_count;
  ck.noise_exponent = dist.smoothing_exponent;
  ck.tensors["input_embed"] = to_blob(params.input_embed);
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    ck.tensors[lstm_tensor_name(static_cast<int>(l), "w")] =
        to_blob(params.lstm[l].w);
    ck.tensors[lstm_tensor_name(static_cast<int>(l), "b")] =
        to_blob(params.lstm[l].b);
  }
  ck.tensors["output_embed"] = to_blob(params.output_embed);
  if (params.config.mode == Mode::kNce) {
    ck.tensors["nce_bias"] = to_blob(params.nce_bias);
  }
  Eigen::VectorXd probs =
      Eigen::Map<const Eigen::VectorXd>(dist.probs.data(),
                                        static_cast<Eigen::Index>(dist.probs.size()));
  ck.tensors["noise_probs"] = to_blob(probs);
  return ck;
}

namespace detail {

inline const TensorBlob& need_tensor(const Checkpoint& ck, const std::string& name) {
  auto it = ck.tensors.find(name);
  if (it == ck.tensors.end()) {
    throw std::runtime_error("checkpoint: missing tensor " + name);
  }
  return it->second;
}

inline void check_dims(const TensorBlob& b, const std::string& name,
                       std::vector<std::uint32_t> want) {
  if (b.dims != want) {
    std::string got, expect;
    for (auto d : b.dims) got += std::to_string(d) + " ";
    for (auto d : want) expect += std::to_string(d) + " ";
    throw std::runtime_error("checkpoint: tensor " + name + " has shape [" +
                             got + "], config expects [" + expect + "]");
  }
}

}  // namespace detail

inline ModelParams model_from_checkpoint(const Checkpoint& ck) {
  const ModelConfig& cfg = ck.config;
  cfg.validate();
  const auto v = static_cast<std::uint32_t>(cfg.vocab_size);
  const auto d = static_cast<std::uint32_t>(cfg.d);
  const auto h = static_cast<std::uint32_t>(cfg.hidden);

  ModelParams p;
  p.config = cfg;
  {
    const auto& b = detail::need_tensor(ck, "input_embed");
    detail::check_dims(b, "input_embed", {v, d});
    p.input_embed = blob_to_matrix(b, "input_embed");
  }
  p.lstm.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto in = static_cast<std::uint32_t>(l == 0 ? cfg.d : cfg.hidden);
    const auto wn = lstm_tensor_name(l, "w");
    const auto bn = lstm_tensor_name(l, "b");
    const auto& wb = detail::need_tensor(ck, wn);
    detail::check_dims(wb, wn, {in + h, 4 * h});
    const auto& bb = detail::need_tensor(ck, bn);
    detail::check_dims(bb, bn, {4 * h});
    p.lstm[static_cast<std::size_t>(l)].w = blob_to_matrix(wb, wn);
    p.lstm[static_cast<std::size_t>(l)].b = blob_to_vector(bb, bn).transpose();
  }
  {
    const auto& b = detail::need_tensor(ck, "output_embed");
    detail::check_dims(b, "output_embed", {v, d});
    p.output_embed = blob_to_matrix(b, "output_embed");
  }
  if (cfg.mode == Mode::kNce) {
    const auto& b = detail::need_tensor(ck, "nce_bias");
    detail::check_dims(b, "nce_bias", {v});
    p.nce_bias = blob_to_vector(b, "nce_bias");
  }
  return p;
}

inline UnigramDistribution noise_from_checkpoint(const Checkpoint& ck) {
  const auto& b = detail::need_tensor(ck, "noise_probs");
  detail::check_dims(b, "noise_probs",
                     {static_cast<std::uint32_t>(ck.config.vocab_size)});
  UnigramDistribution d;
  d.smoothing_exponent = ck.noise_exponent;
  d.total_count = ck.noise_total_count;
  d.probs.assign(b.data.begin(), b.data.end());
  return d;
}

}  // namespace pmilm
