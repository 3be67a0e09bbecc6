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
// Training objectives: label-smoothed cross-entropy over decoder outputs,
// CTC over encoder outputs, and their weighted combination
// (1 - w) * xent + w * ctc.

#pragma once

#include <vector>

#include "minis2t/tensor.hpp"
#include "minis2t/tokenizer.hpp"

namespace minis2t {

// KL divergence between the smoothed target distribution and the model,
// averaged over non-pad target positions. The smoothed distribution puts
// 1 - epsilon on the gold id and spreads epsilon uniformly over the other
// classes except pad; the constant sum(q log q) term is included, so the
// loss is a true KL and reaches zero only at the smoothed optimum.
//
// log_probs: [B, U, V] normalized log-probabilities. targets: ragged gold
// rows (gold id per position; shorter rows are pad-extended). Positions
// whose gold is pad_id are excluded from the average.
template <class S>
TensorT<S> label_smoothed_nll(const TensorT<S>& log_probs,
                              const std::vector<std::vector<int>>& targets, double epsilon,
                              int pad_id = kPadId);

// Fewest encoder frames that admit a CTC alignment for `target`: its length
// plus one forced blank per adjacent repeated label.
int64_t ctc_min_frames(const std::vector<int>& target, int blank = kBlankId);

template <class S>
struct CtcResult {
  TensorT<S> loss;                    // scalar: mean -log P over scored utterances
  std::vector<double> per_utterance;  // -log P per utterance; +inf where skipped
  int num_skipped = 0;
};

// CTC negative log-likelihood with the standard blank-extended lattice;
// forward/backward recursions run in double regardless of S.
//
// log_probs: [B, T, V] normalized per frame. input_lengths: valid frames
// per utterance. Utterances whose target cannot fit the frame budget are
// skipped (excluded from the mean) when skip_infeasible is set and rejected
// with DataError otherwise.
template <class S>
CtcResult<S> ctc_loss(const TensorT<S>& log_probs, const std::vector<std::vector<int>>& targets,
                      const std::vector<int>& input_lengths, bool skip_infeasible,
                      int blank = kBlankId);

template <class S>
struct JointLossResult {
  TensorT<S> total;           // scalar node for backward
  double cross_entropy = 0.0; // detached component values
  double ctc = 0.0;
  int num_tokens = 0;   // non-pad decoder target positions scored
  int ctc_skipped = 0;  // utterances excluded as CTC-infeasible
};

// total = (1 - ctc_weight) * xent + ctc_weight * ctc. The CTC term is
// evaluated only when ctc_weight > 0, in which case ctc_lp must be given.
// decoder_logits are unnormalized [B, U, V]; gold_targets are the shifted
// decoder references (ending in eos), ctc_targets the plain label sequences.
template <class S>
JointLossResult<S> joint_loss(const TensorT<S>& decoder_logits,
                              const std::vector<std::vector<int>>& gold_targets,
                              const TensorT<S>* ctc_lp,
                              const std::vector<std::vector<int>>& ctc_targets,
                              const std::vector<int>& ctc_lengths, double ctc_weight,
                              double label_smoothing, bool skip_infeasible);

}  // namespace minis2t
