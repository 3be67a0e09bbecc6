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
//
// The sequence-to-sequence model: a convolutional subsampler feeding a
// pre-norm Transformer encoder/decoder, with an optional CTC projection off
// the encoder. The same architecture runs speech input (filterbank frames
// through the subsampler) and text input (source token embeddings, for the
// MT models used as translation pretraining).

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "minis2t/checkpoint.hpp"
#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t {

enum class InputKind { kFilterbank, kTokenEmbedding };

InputKind input_kind_from_string(const std::string& name);
std::string input_kind_to_string(InputKind kind);

struct S2TModelConfig {
  InputKind input_kind = InputKind::kFilterbank;
  int feature_dim = 80;    // filterbank bins (kFilterbank only)
  int src_vocab_size = 0;  // source vocabulary (kTokenEmbedding only)
  int vocab_size = 0;      // target vocabulary, including reserved ids
  int d_model = 256;
  int num_heads = 4;
  int ffn_dim = 1024;
  int num_encoder_layers = 6;
  int num_decoder_layers = 3;
  int num_conv_layers = 2;  // subsampler depth (kFilterbank only)
  int conv_kernel = 3;
  int conv_stride = 2;
  double dropout = 0.1;
  bool use_ctc = true;

  void validate() const;

  // Frame count after the conv stack: per layer t -> floor((t-k)/s) + 1.
  // May come out <= 0 for inputs shorter than the receptive field.
  int64_t subsampled_length(int64_t num_frames) const;

  // Flat "key: value" YAML; stable byte-for-byte across a round trip.
  std::string to_yaml() const;
  static S2TModelConfig from_yaml(const std::string& text);
};

// Reads the embedded config record out of a checkpoint.
S2TModelConfig config_from_checkpoint(const Checkpoint& ckpt);

template <class S>
class S2TModelT {
 public:
  using Tensor = TensorT<S>;

  S2TModelT(const S2TModelConfig& config, uint64_t seed);

  const S2TModelConfig& config() const { return config_; }

  // Parameters in fixed declaration order; tensors share storage with the
  // model, so optimizer updates are visible immediately.
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  int64_t num_parameters() const;
  void set_requires_grad(bool b);

  struct EncodeResult {
    Tensor memory;             // [B, T', d_model]
    std::vector<int> lengths;  // valid frames per utterance after subsampling
  };

  // Speech input: conv subsampling, projection, positional encoding, encoder
  // stack. `utt_ids` (optional, parallel to the batch) names utterances in
  // too-short errors.
  EncodeResult encode_features(const Tensor& features, const std::vector<int>& lengths,
                               bool training = false, Rng* rng = nullptr,
                               const std::vector<std::string>* utt_ids = nullptr) const;

  // Text input: source embeddings in place of the subsampler.
  EncodeResult encode_tokens(const std::vector<std::vector<int>>& src_ids, bool training = false,
                             Rng* rng = nullptr) const;

  struct DecodeResult {
    Tensor logits;                   // [B, U, vocab_size]
    std::vector<Tensor> cross_attn;  // per decoder layer: [B, H, U, T']
  };

  // Teacher-forced decoder pass over bos-prefixed input token rows (ragged;
  // padded internally). Causal and padding masks applied.
  DecodeResult decode(const Tensor& memory, const std::vector<int>& memory_lengths,
                      const std::vector<std::vector<int>>& input_ids, bool training = false,
                      Rng* rng = nullptr) const;

  // CTC head over encoder output: log-probabilities [B, T', vocab_size].
  Tensor ctc_log_probs(const Tensor& memory) const;

  // Checkpoint plumbing. Records carry float payloads regardless of S; the
  // model config travels as the text record named by kConfigRecordName.
  std::vector<CheckpointRecord> to_records() const;
  void load_records(const Checkpoint& ckpt);

 private:
  Tensor subsample(const Tensor& features, const std::vector<int>& lengths,
                   std::vector<int>* out_lengths, const std::vector<std::string>* utt_ids) const;
  Tensor run_encoder_stack(const Tensor& x, const std::vector<int>& lengths, bool training,
                           Rng* rng) const;
  // Multi-head attention block named by its parameter prefix. Masks are
  // optional and broadcast onto [B*H, Tq, Tk] score blocks; `attn_probs`
  // receives the post-softmax weights reshaped to [B, H, Tq, Tk].
  Tensor attention(const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                   const Tensor* key_mask, const Tensor* causal_mask, Tensor* attn_probs,
                   bool training, Rng* rng) const;
  Tensor feed_forward(const std::string& prefix, const Tensor& x, bool training, Rng* rng) const;
  Tensor linear(const std::string& prefix, const Tensor& x) const;
  Tensor norm(const std::string& prefix, const Tensor& x) const;
  Tensor add_positions(const Tensor& x, bool training, Rng* rng) const;
  Tensor maybe_dropout(const Tensor& x, bool training, Rng* rng) const;

  void add_param(const std::string& name, Tensor t);

  S2TModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::unordered_map<std::string, size_t> index_;
};

using S2TModel = S2TModelT<float>;

extern template class S2TModelT<float>;
extern template class S2TModelT<double>;

}  // namespace minis2t
