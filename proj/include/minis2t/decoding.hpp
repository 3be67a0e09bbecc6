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
// Search over next-token distributions. The scorer is injected as a plain
// callback so the algorithms are testable against hand-built distributions
// and reusable for any autoregressive model.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t {

// Maps a bos-prefixed token prefix to next-token log-probabilities over the
// full vocabulary.
using StepFn = std::function<std::vector<float>(const std::vector<int>& prefix)>;

struct DecodeOptions {
  int vocab_size = 0;
  int beam_size = 5;
  int max_len = 200;                // generated-token cap, excluding bos/eos
  double length_penalty = 1.0;      // alpha in ((5 + |Y|) / 6)^alpha
  double repetition_penalty = 1.0;  // > 1 discourages already-emitted tokens
  int no_repeat_ngram = 0;          // block repeating n-grams of this order

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;   // generated ids; bos and eos excluded
  double score = 0.0;        // accumulated raw log-probability (incl. eos)
  double normalized = 0.0;   // penalized score / length penalty; ranking key
};

// ((5 + length) / 6)^alpha, the usual decoder length normalization.
double length_penalty_factor(int length, double alpha);

// In place: scales log-probabilities of already-generated tokens by the
// repetition penalty and assigns -inf to tokens that would repeat an n-gram
// already present in `tokens`.
void apply_penalties(std::vector<float>& log_probs, const std::vector<int>& tokens,
                     double repetition_penalty, int no_repeat_ngram);

// Argmax continuation until eos or the length cap. Penalties and masking
// match beam_decode step for step.
Hypothesis greedy_decode(const StepFn& step, const DecodeOptions& opts);

// Standard beam search: each step ranks every continuation of every live
// beam by cumulative penalized score and keeps the best; length
// normalization applies once, when a hypothesis finishes. Beams that choose
// eos move to the finished pool and release their slot; survivors at the
// length cap finish without an eos term. Returns exactly beam_size
// hypotheses, best first.
std::vector<Hypothesis> beam_decode(const StepFn& step, const DecodeOptions& opts);

// Collapses a CTC frame labeling: merge adjacent repeats, then drop blanks.
std::vector<int> ctc_collapse(const std::vector<int>& frame_ids, int blank = 0);

// Writes one text file per (layer, head) of teacher-forced cross-attention:
// <dir>/<utt_id>.layer<L>.head<H>.txt, one row per target position with
// space-separated weights over encoder frames. `cross_attn` holds per-layer
// [B, H, U, T'] tensors; `batch_index` selects the utterance, and rows/cols
// are clipped to `target_len` x `memory_len`.
void write_attention_files(const std::string& dir, const std::string& utt_id,
                           const std::vector<TensorT<float>>& cross_attn, int batch_index,
                           int target_len, int memory_len);

}  // namespace minis2t
