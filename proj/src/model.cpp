// Copyright 2026 The minis2t Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "minis2t/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "minis2t/tokenizer.hpp"

namespace minis2t {
namespace {

// Attention scores at masked positions get this instead of -inf so the
// per-op finite checks stay meaningful; softmax maps it to exactly zero.
constexpr double kMaskValue = -1e30;

template <class S>
TensorT<S> key_pad_mask(int batch, int heads, int t, const std::vector<int>& lengths) {
  TensorT<S> mask = TensorT<S>::zeros({batch * heads, 1, t});
  S* mp = mask.data();
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      S* row = mp + (static_cast<int64_t>(b) * heads + h) * t;
      for (int i = lengths[static_cast<size_t>(b)]; i < t; ++i) row[i] = S(1);
    }
  }
  return mask;
}

template <class S>
TensorT<S> causal_mask(int u) {
  TensorT<S> mask = TensorT<S>::zeros({u, u});
  S* mp = mask.data();
  for (int i = 0; i < u; ++i) {
    for (int j = i + 1; j < u; ++j) mp[static_cast<int64_t>(i) * u + j] = S(1);
  }
  return mask;
}

template <class S>
TensorT<S> sinusoidal_positions(int t, int d) {
  TensorT<S> pe = TensorT<S>::zeros({t, d});
  S* pp = pe.data();
  for (int pos = 0; pos < t; ++pos) {
    for (int i = 0; i + 1 < d; i += 2) {
      double angle = pos * std::exp(-std::log(10000.0) * i / d);
      pp[static_cast<int64_t>(pos) * d + i] = static_cast<S>(std::sin(angle));
      pp[static_cast<int64_t>(pos) * d + i + 1] = static_cast<S>(std::cos(angle));
    }
  }
  return pe;
}

// Pads ragged id rows with kPadId and reports per-row lengths.
std::vector<int> pad_id_rows(const std::vector<std::vector<int>>& rows, const char* what,
                             std::vector<int>* lengths, int* max_len) {
  if (rows.empty()) throw ContractError(std::string(what) + ": empty batch");
  int u = 0;
  lengths->clear();
  for (const auto& row : rows) {
    if (row.empty()) throw ContractError(std::string(what) + ": empty id row");
    lengths->push_back(static_cast<int>(row.size()));
    u = std::max(u, static_cast<int>(row.size()));
  }
  std::vector<int> flat;
  flat.reserve(rows.size() * static_cast<size_t>(u));
  for (const auto& row : rows) {
    flat.insert(flat.end(), row.begin(), row.end());
    flat.insert(flat.end(), static_cast<size_t>(u) - row.size(), kPadId);
  }
  *max_len = u;
  return flat;
}

}  // namespace

InputKind input_kind_from_string(const std::string& name) {
  if (name == "filterbank") return InputKind::kFilterbank;
  if (name == "token_embedding") return InputKind::kTokenEmbedding;
  throw ConfigError("unknown input_kind \"" + name +
                    "\" (want filterbank or token_embedding)");
}

std::string input_kind_to_string(InputKind kind) {
  switch (kind) {
    case InputKind::kFilterbank:
      return "filterbank";
    case InputKind::kTokenEmbedding:
      return "token_embedding";
  }
  throw ContractError("invalid InputKind value");
}

void S2TModelConfig::validate() const {
  if (vocab_size < kNumReservedIds + 1) {
    throw ConfigError("vocab_size must be > " + std::to_string(kNumReservedIds) + ", got " +
                      std::to_string(vocab_size));
  }
  if (d_model <= 0 || d_model % 2 != 0) {
    throw ConfigError("d_model must be positive and even, got " + std::to_string(d_model));
  }
  if (num_heads <= 0 || d_model % num_heads != 0) {
    throw ConfigError("num_heads must divide d_model (" + std::to_string(num_heads) + " vs " +
                      std::to_string(d_model) + ")");
  }
  if (ffn_dim <= 0) throw ConfigError("ffn_dim must be positive");
  if (num_encoder_layers < 1 || num_decoder_layers < 1) {
    throw ConfigError("encoder and decoder need at least one layer");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1), got " + format_double(dropout));
  }
  if (input_kind == InputKind::kFilterbank) {
    if (feature_dim <= 0) throw ConfigError("feature_dim must be positive for filterbank input");
    if (num_conv_layers < 0) throw ConfigError("num_conv_layers must be >= 0");
    if (num_conv_layers > 0 && (conv_kernel < 1 || conv_stride < 1)) {
      throw ConfigError("conv_kernel and conv_stride must be >= 1");
    }
  } else {
    if (src_vocab_size < kNumReservedIds + 1) {
      throw ConfigError("src_vocab_size must be > " + std::to_string(kNumReservedIds) +
                        " for token_embedding input, got " + std::to_string(src_vocab_size));
    }
    if (use_ctc) {
      throw ConfigError("use_ctc requires filterbank input; token_embedding models have no "
                        "frame-level alignment to supervise");
    }
  }
}

int64_t S2TModelConfig::subsampled_length(int64_t num_frames) const {
  int64_t t = num_frames;
  if (input_kind != InputKind::kFilterbank) return t;
  for (int l = 0; l < num_conv_layers; ++l) {
    if (t < conv_kernel) return 0;
    t = (t - conv_kernel) / conv_stride + 1;
  }
  return t;
}

std::string S2TModelConfig::to_yaml() const {
  std::ostringstream out;
  out << "input_kind: " << input_kind_to_string(input_kind) << '\n'
      << "feature_dim: " << feature_dim << '\n'
      << "src_vocab_size: " << src_vocab_size << '\n'
      << "vocab_size: " << vocab_size << '\n'
      << "d_model: " << d_model << '\n'
      << "num_heads: " << num_heads << '\n'
      << "ffn_dim: " << ffn_dim << '\n'
      << "num_encoder_layers: " << num_encoder_layers << '\n'
      << "num_decoder_layers: " << num_decoder_layers << '\n'
      << "num_conv_layers: " << num_conv_layers << '\n'
      << "conv_kernel: " << conv_kernel << '\n'
      << "conv_stride: " << conv_stride << '\n'
      << "dropout: " << format_double(dropout) << '\n'
      << "use_ctc: " << (use_ctc ? "true" : "false") << '\n';
  return out.str();
}

S2TModelConfig S2TModelConfig::from_yaml(const std::string& text) {
  S2TModelConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t colon = t.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("model config line " + std::to_string(line_no) + ": expected key: value");
    }
    std::string key = trim(t.substr(0, colon));
    std::string value = trim(t.substr(colon + 1));
    auto as_int = [&]() {
      try {
        return std::stoi(value);
      } catch (const std::exception&) {
        throw ConfigError("model config: bad integer for " + key + ": \"" + value + "\"");
      }
    };
    auto as_bool = [&]() {
      if (value == "true") return true;
      if (value == "false") return false;
      throw ConfigError("model config: bad boolean for " + key + ": \"" + value + "\"");
    };
    if (key == "input_kind") config.input_kind = input_kind_from_string(value);
    else if (key == "feature_dim") config.feature_dim = as_int();
    else if (key == "src_vocab_size") config.src_vocab_size = as_int();
    else if (key == "vocab_size") config.vocab_size = as_int();
    else if (key == "d_model") config.d_model = as_int();
    else if (key == "num_heads") config.num_heads = as_int();
    else if (key == "ffn_dim") config.ffn_dim = as_int();
    else if (key == "num_encoder_layers") config.num_encoder_layers = as_int();
    else if (key == "num_decoder_layers") config.num_decoder_layers = as_int();
    else if (key == "num_conv_layers") config.num_conv_layers = as_int();
    else if (key == "conv_kernel") config.conv_kernel = as_int();
    else if (key == "conv_stride") config.conv_stride = as_int();
    else if (key == "dropout") {
      try {
        config.dropout = std::stod(value);
      } catch (const std::exception&) {
        throw ConfigError("model config: bad number for dropout: \"" + value + "\"");
      }
    } else if (key == "use_ctc") config.use_ctc = as_bool();
    else throw ConfigError("model config: unknown key \"" + key + "\"");
  }
  config.validate();
  return config;
}

S2TModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  const CheckpointRecord* rec = ckpt.find_model(kConfigRecordName);
  if (rec == nullptr) {
    throw DataError("checkpoint has no embedded model config record");
  }
  return S2TModelConfig::from_yaml(text_from_record(*rec));
}

template <class S>
S2TModelT<S>::S2TModelT(const S2TModelConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.d_model;

  auto xavier = [&rng](Shape shape, int fan_in, int fan_out) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    TensorT<S> t = TensorT<S>::zeros(shape);
    S* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
      p[i] = static_cast<S>((rng.uniform() * 2.0 - 1.0) * limit);
    }
    return t;
  };
  auto embedding = [&rng, d](int rows) {
    TensorT<S> t = TensorT<S>::zeros({rows, d});
    double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    S* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = static_cast<S>(rng.normal(0.0, stddev));
    return t;
  };
  auto add_linear = [&](const std::string& prefix, int in, int out) {
    add_param(prefix + ".weight", xavier({in, out}, in, out));
    add_param(prefix + ".bias", TensorT<S>::zeros({out}));
  };
  auto add_norm = [&](const std::string& prefix) {
    add_param(prefix + ".gamma", TensorT<S>::full({d}, 1.0));
    add_param(prefix + ".beta", TensorT<S>::zeros({d}));
  };
  auto add_attention = [&](const std::string& prefix) {
    add_linear(prefix + ".q", d, d);
    add_linear(prefix + ".k", d, d);
    add_linear(prefix + ".v", d, d);
    add_linear(prefix + ".out", d, d);
  };

  if (config_.input_kind == InputKind::kFilterbank) {
    int c_in = config_.feature_dim;
    for (int l = 0; l < config_.num_conv_layers; ++l) {
      std::string prefix = "subsampler.conv" + std::to_string(l);
      int k = config_.conv_kernel;
      add_param(prefix + ".weight", xavier({d, k, c_in}, c_in * k, d * k));
      add_param(prefix + ".bias", TensorT<S>::zeros({d}));
      c_in = d;
    }
    add_linear("subsampler.proj", c_in, d);
  } else {
    add_param("src_embed.weight", embedding(config_.src_vocab_size));
  }

  for (int l = 0; l < config_.num_encoder_layers; ++l) {
    std::string prefix = "encoder.layer" + std::to_string(l);
    add_norm(prefix + ".norm1");
    add_attention(prefix + ".self_attn");
    add_norm(prefix + ".norm2");
    add_linear(prefix + ".ffn.w1", d, config_.ffn_dim);
    add_linear(prefix + ".ffn.w2", config_.ffn_dim, d);
  }
  add_norm("encoder.final_norm");

  add_param("tgt_embed.weight", embedding(config_.vocab_size));
  for (int l = 0; l < config_.num_decoder_layers; ++l) {
    std::string prefix = "decoder.layer" + std::to_string(l);
    add_norm(prefix + ".norm1");
    add_attention(prefix + ".self_attn");
    add_norm(prefix + ".norm2");
    add_attention(prefix + ".cross_attn");
    add_norm(prefix + ".norm3");
    add_linear(prefix + ".ffn.w1", d, config_.ffn_dim);
    add_linear(prefix + ".ffn.w2", config_.ffn_dim, d);
  }
  add_norm("decoder.final_norm");
  add_linear("output_proj", d, config_.vocab_size);
  if (config_.use_ctc) add_linear("ctc_proj", d, config_.vocab_size);

  set_requires_grad(true);
}

template <class S>
void S2TModelT<S>::add_param(const std::string& name, Tensor t) {
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(t));
}

template <class S>
TensorT<S> S2TModelT<S>::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model has no parameter \"" + name + "\"");
  return params_[it->second].second;
}

template <class S>
bool S2TModelT<S>::has_param(const std::string& name) const {
  return index_.count(name) != 0;
}

template <class S>
int64_t S2TModelT<S>::num_parameters() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

template <class S>
void S2TModelT<S>::set_requires_grad(bool b) {
  for (auto& [name, t] : params_) t.set_requires_grad(b);
}

template <class S>
TensorT<S> S2TModelT<S>::linear(const std::string& prefix, const Tensor& x) const {
  return add(matmul(x, param(prefix + ".weight")), param(prefix + ".bias"));
}

template <class S>
TensorT<S> S2TModelT<S>::norm(const std::string& prefix, const Tensor& x) const {
  return layer_norm(x, param(prefix + ".gamma"), param(prefix + ".beta"));
}

template <class S>
TensorT<S> S2TModelT<S>::maybe_dropout(const Tensor& x, bool training, Rng* rng) const {
  if (!training || config_.dropout == 0.0) return x;
  if (rng == nullptr) throw ContractError("training forward pass needs an rng for dropout");
  return dropout(x, config_.dropout, *rng);
}

template <class S>
TensorT<S> S2TModelT<S>::add_positions(const Tensor& x, bool training, Rng* rng) const {
  Tensor pe = sinusoidal_positions<S>(x.dim(1), config_.d_model);
  Tensor scaled = scale(x, std::sqrt(static_cast<double>(config_.d_model)));
  return maybe_dropout(add(scaled, pe), training, rng);
}

template <class S>
TensorT<S> S2TModelT<S>::subsample(const Tensor& features, const std::vector<int>& lengths,
                                   std::vector<int>* out_lengths,
                                   const std::vector<std::string>* utt_ids) const {
  if (features.rank() != 3 || features.dim(2) != config_.feature_dim) {
    throw ShapeError("encode_features: want [B, T, " + std::to_string(config_.feature_dim) +
                     "], got " + shape_str(features.shape()));
  }
  int batch = features.dim(0);
  if (static_cast<int>(lengths.size()) != batch) {
    throw ContractError("encode_features: " + std::to_string(lengths.size()) + " lengths for " +
                        std::to_string(batch) + " utterances");
  }
  out_lengths->clear();
  for (int b = 0; b < batch; ++b) {
    int t = lengths[static_cast<size_t>(b)];
    if (t < 1 || t > features.dim(1)) {
      throw ContractError("encode_features: length " + std::to_string(t) +
                          " outside [1, " + std::to_string(features.dim(1)) + "]");
    }
    int64_t t_sub = config_.subsampled_length(t);
    if (t_sub <= 0) {
      std::string id = utt_ids != nullptr && b < static_cast<int>(utt_ids->size())
                           ? (*utt_ids)[static_cast<size_t>(b)]
                           : "#" + std::to_string(b);
      throw DataError("utterance " + id + ": " + std::to_string(t) +
                      " frames is too short for the conv subsampler");
    }
    out_lengths->push_back(static_cast<int>(t_sub));
  }

  Tensor x = features;
  for (int l = 0; l < config_.num_conv_layers; ++l) {
    std::string prefix = "subsampler.conv" + std::to_string(l);
    x = relu(conv1d(x, param(prefix + ".weight"), param(prefix + ".bias"), config_.conv_stride));
  }
  return linear("subsampler.proj", x);
}

template <class S>
TensorT<S> S2TModelT<S>::run_encoder_stack(const Tensor& x_in, const std::vector<int>& lengths,
                                           bool training, Rng* rng) const {
  Tensor mask = key_pad_mask<S>(x_in.dim(0), config_.num_heads, x_in.dim(1), lengths);
  Tensor x = x_in;
  for (int l = 0; l < config_.num_encoder_layers; ++l) {
    std::string prefix = "encoder.layer" + std::to_string(l);
    Tensor n1 = norm(prefix + ".norm1", x);
    Tensor a = attention(prefix + ".self_attn", n1, n1, &mask, nullptr, nullptr, training, rng);
    x = add(x, maybe_dropout(a, training, rng));
    Tensor n2 = norm(prefix + ".norm2", x);
    Tensor f = feed_forward(prefix + ".ffn", n2, training, rng);
    x = add(x, maybe_dropout(f, training, rng));
  }
  return norm("encoder.final_norm", x);
}

template <class S>
typename S2TModelT<S>::EncodeResult S2TModelT<S>::encode_features(
    const Tensor& features, const std::vector<int>& lengths, bool training, Rng* rng,
    const std::vector<std::string>* utt_ids) const {
  if (config_.input_kind != InputKind::kFilterbank) {
    throw ContractError("encode_features on a token_embedding model");
  }
  std::vector<int> sub_lengths;
  Tensor x = subsample(features, lengths, &sub_lengths, utt_ids);
  x = add_positions(x, training, rng);
  return {run_encoder_stack(x, sub_lengths, training, rng), sub_lengths};
}

template <class S>
typename S2TModelT<S>::EncodeResult S2TModelT<S>::encode_tokens(
    const std::vector<std::vector<int>>& src_ids, bool training, Rng* rng) const {
  if (config_.input_kind != InputKind::kTokenEmbedding) {
    throw ContractError("encode_tokens on a filterbank model");
  }
  std::vector<int> lengths;
  int t = 0;
  std::vector<int> flat = pad_id_rows(src_ids, "encode_tokens", &lengths, &t);
  Tensor x = embedding_lookup(param("src_embed.weight"), flat);
  x = reshape(x, {static_cast<int>(src_ids.size()), t, config_.d_model});
  x = add_positions(x, training, rng);
  return {run_encoder_stack(x, lengths, training, rng), lengths};
}

template <class S>
typename S2TModelT<S>::DecodeResult S2TModelT<S>::decode(
    const Tensor& memory, const std::vector<int>& memory_lengths,
    const std::vector<std::vector<int>>& input_ids, bool training, Rng* rng) const {
  if (memory.rank() != 3 || memory.dim(2) != config_.d_model) {
    throw ShapeError("decode: memory must be [B, T', d_model], got " +
                     shape_str(memory.shape()));
  }
  int batch = memory.dim(0);
  if (static_cast<int>(input_ids.size()) != batch ||
      static_cast<int>(memory_lengths.size()) != batch) {
    throw ContractError("decode: batch size mismatch between memory, lengths, and targets");
  }

  std::vector<int> tgt_lengths;
  int u = 0;
  std::vector<int> flat = pad_id_rows(input_ids, "decode", &tgt_lengths, &u);
  Tensor x = embedding_lookup(param("tgt_embed.weight"), flat);
  x = reshape(x, {batch, u, config_.d_model});
  x = add_positions(x, training, rng);

  Tensor causal = causal_mask<S>(u);
  Tensor tgt_mask = key_pad_mask<S>(batch, config_.num_heads, u, tgt_lengths);
  Tensor mem_mask = key_pad_mask<S>(batch, config_.num_heads, memory.dim(1), memory_lengths);

  DecodeResult result;
  for (int l = 0; l < config_.num_decoder_layers; ++l) {
    std::string prefix = "decoder.layer" + std::to_string(l);
    Tensor n1 = norm(prefix + ".norm1", x);
    Tensor a =
        attention(prefix + ".self_attn", n1, n1, &tgt_mask, &causal, nullptr, training, rng);
    x = add(x, maybe_dropout(a, training, rng));
    Tensor n2 = norm(prefix + ".norm2", x);
    Tensor probs;
    Tensor c = attention(prefix + ".cross_attn", n2, memory, &mem_mask, nullptr, &probs,
                         training, rng);
    result.cross_attn.push_back(probs);
    x = add(x, maybe_dropout(c, training, rng));
    Tensor n3 = norm(prefix + ".norm3", x);
    Tensor f = feed_forward(prefix + ".ffn", n3, training, rng);
    x = add(x, maybe_dropout(f, training, rng));
  }
  x = norm("decoder.final_norm", x);
  result.logits = linear("output_proj", x);
  return result;
}

template <class S>
TensorT<S> S2TModelT<S>::ctc_log_probs(const Tensor& memory) const {
  if (!config_.use_ctc) throw ContractError("ctc_log_probs on a model without a CTC head");
  return log_softmax(linear("ctc_proj", memory));
}

template <class S>
TensorT<S> S2TModelT<S>::attention(const std::string& prefix, const Tensor& q_in,
                                   const Tensor& kv_in, const Tensor* key_mask,
                                   const Tensor* causal, Tensor* attn_probs, bool training,
                                   Rng* rng) const {
  const int batch = q_in.dim(0);
  const int tq = q_in.dim(1);
  const int tk = kv_in.dim(1);
  const int heads = config_.num_heads;
  const int dh = config_.d_model / heads;

  auto split_heads = [&](Tensor t, int steps) {
    t = reshape(t, {batch, steps, heads, dh});
    t = transpose(t, 1, 2);
    return reshape(t, {batch * heads, steps, dh});
  };
  Tensor q = split_heads(linear(prefix + ".q", q_in), tq);
  Tensor k = split_heads(linear(prefix + ".k", kv_in), tk);
  Tensor v = split_heads(linear(prefix + ".v", kv_in), tk);

  Tensor scores = scale(matmul(q, transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (causal != nullptr) scores = masked_fill(scores, *causal, kMaskValue);
  if (key_mask != nullptr) scores = masked_fill(scores, *key_mask, kMaskValue);

  Tensor probs = softmax(scores);
  if (attn_probs != nullptr) *attn_probs = reshape(probs, {batch, heads, tq, tk});

  Tensor ctx = matmul(maybe_dropout(probs, training, rng), v);
  ctx = reshape(ctx, {batch, heads, tq, dh});
  ctx = transpose(ctx, 1, 2);
  ctx = reshape(ctx, {batch, tq, config_.d_model});
  return linear(prefix + ".out", ctx);
}

template <class S>
TensorT<S> S2TModelT<S>::feed_forward(const std::string& prefix, const Tensor& x, bool training,
                                      Rng* rng) const {
  Tensor h = maybe_dropout(relu(linear(prefix + ".w1", x)), training, rng);
  return linear(prefix + ".w2", h);
}

template <class S>
std::vector<CheckpointRecord> S2TModelT<S>::to_records() const {
  std::vector<CheckpointRecord> records;
  records.reserve(params_.size() + 1);
  records.push_back(make_text_record(kConfigRecordName, config_.to_yaml()));
  for (const auto& [name, t] : params_) {
    CheckpointRecord rec;
    rec.name = name;
    rec.shape = t.shape();
    rec.values.reserve(static_cast<size_t>(t.size()));
    const S* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) rec.values.push_back(static_cast<float>(p[i]));
    records.push_back(std::move(rec));
  }
  return records;
}

template <class S>
void S2TModelT<S>::load_records(const Checkpoint& ckpt) {
  for (auto& [name, t] : params_) {
    const CheckpointRecord* rec = ckpt.find_model(name);
    if (rec == nullptr) throw DataError("checkpoint is missing parameter \"" + name + "\"");
    if (rec->shape != t.shape()) {
      throw ShapeError("checkpoint parameter \"" + name + "\" has shape " +
                       shape_str(rec->shape) + ", model wants " + shape_str(t.shape()));
    }
    S* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
      p[i] = static_cast<S>(rec->values[static_cast<size_t>(i)]);
    }
  }
}

template class S2TModelT<float>;
template class S2TModelT<double>;

}  // namespace minis2t
