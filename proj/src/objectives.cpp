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

#include "minis2t/objectives.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace minis2t {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Blank-extended label sequence: blank y1 blank y2 ... yL blank.
std::vector<int> extend_with_blanks(const std::vector<int>& target, int blank) {
  std::vector<int> ext;
  ext.reserve(target.size() * 2 + 1);
  ext.push_back(blank);
  for (int y : target) {
    ext.push_back(y);
    ext.push_back(blank);
  }
  return ext;
}

// One utterance's lattice pass. logp indexes [t * v + k] over the first
// `frames` rows. Returns -log P and accumulates d(-log P)/d logp into
// `grad` (same layout, scaled by `grad_scale`) when grad is non-null.
double ctc_single(const double* logp, int frames, int v, const std::vector<int>& ext,
                  double* grad, double grad_scale) {
  const int s_len = static_cast<int>(ext.size());
  auto allow_skip = [&](int s) {
    return s >= 2 && ext[static_cast<size_t>(s)] != ext[0] &&
           ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)];
  };

  std::vector<double> alpha(static_cast<size_t>(frames) * s_len, kNegInf);
  alpha[0] = logp[ext[0]];
  if (s_len > 1) alpha[1] = logp[ext[1]];
  for (int t = 1; t < frames; ++t) {
    const double* prev = alpha.data() + static_cast<size_t>(t - 1) * s_len;
    double* cur = alpha.data() + static_cast<size_t>(t) * s_len;
    for (int s = 0; s < s_len; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (allow_skip(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + logp[static_cast<size_t>(t) * v + ext[s]];
    }
  }
  const double* last = alpha.data() + static_cast<size_t>(frames - 1) * s_len;
  double log_p = last[s_len - 1];
  if (s_len > 1) log_p = log_add(log_p, last[s_len - 2]);
  if (log_p == kNegInf) {
    // Unreachable for feasible targets; guard against pathological inputs.
    return std::numeric_limits<double>::infinity();
  }
  if (grad == nullptr) return -log_p;

  // beta_t(s): log-prob of completing from state s after emitting frame t,
  // excluding frame t's own emission, so alpha + beta covers each path once.
  std::vector<double> beta(static_cast<size_t>(frames) * s_len, kNegInf);
  beta[static_cast<size_t>(frames - 1) * s_len + (s_len - 1)] = 0.0;
  if (s_len > 1) beta[static_cast<size_t>(frames - 1) * s_len + (s_len - 2)] = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    const double* next = beta.data() + static_cast<size_t>(t + 1) * s_len;
    const double* emit = logp + static_cast<size_t>(t + 1) * v;
    double* cur = beta.data() + static_cast<size_t>(t) * s_len;
    for (int s = 0; s < s_len; ++s) {
      double acc = next[s] == kNegInf ? kNegInf : next[s] + emit[ext[s]];
      if (s + 1 < s_len && next[s + 1] != kNegInf) {
        acc = log_add(acc, next[s + 1] + emit[ext[s + 1]]);
      }
      if (s + 2 < s_len && allow_skip(s + 2) && next[s + 2] != kNegInf) {
        acc = log_add(acc, next[s + 2] + emit[ext[s + 2]]);
      }
      cur[s] = acc;
    }
  }

  // d log P / d logp_t(k) = sum over states with label k of the posterior
  // mass passing through (t, s).
  for (int t = 0; t < frames; ++t) {
    const double* arow = alpha.data() + static_cast<size_t>(t) * s_len;
    const double* brow = beta.data() + static_cast<size_t>(t) * s_len;
    for (int s = 0; s < s_len; ++s) {
      if (arow[s] == kNegInf || brow[s] == kNegInf) continue;
      double posterior = std::exp(arow[s] + brow[s] - log_p);
      grad[static_cast<size_t>(t) * v + ext[s]] -= grad_scale * posterior;
    }
  }
  return -log_p;
}

}  // namespace

int64_t ctc_min_frames(const std::vector<int>& target, int blank) {
  int64_t repeats = 0;
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  (void)blank;
  return static_cast<int64_t>(target.size()) + repeats;
}

template <class S>
TensorT<S> label_smoothed_nll(const TensorT<S>& log_probs,
                              const std::vector<std::vector<int>>& targets, double epsilon,
                              int pad_id) {
  if (log_probs.rank() != 3) {
    throw ShapeError("label_smoothed_nll: want log_probs [B, U, V], got " +
                     shape_str(log_probs.shape()));
  }
  const int batch = log_probs.dim(0);
  const int u_max = log_probs.dim(1);
  const int v = log_probs.dim(2);
  if (static_cast<int>(targets.size()) != batch) {
    throw ContractError("label_smoothed_nll: " + std::to_string(targets.size()) +
                        " target rows for batch " + std::to_string(batch));
  }
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw ContractError("label_smoothed_nll: epsilon must be in [0, 1)");
  }
  if (v <= 2) throw ContractError("label_smoothed_nll: need more than two classes");
  if (pad_id < 0 || pad_id >= v) throw ContractError("label_smoothed_nll: pad_id out of range");

  // Padded gold matrix; pad positions are skipped below.
  auto gold = std::make_shared<std::vector<int>>(static_cast<size_t>(batch) * u_max, pad_id);
  int64_t scored = 0;
  for (int b = 0; b < batch; ++b) {
    const auto& row = targets[static_cast<size_t>(b)];
    if (static_cast<int>(row.size()) > u_max) {
      throw ContractError("label_smoothed_nll: target row " + std::to_string(b) + " has " +
                          std::to_string(row.size()) + " positions, logits have " +
                          std::to_string(u_max));
    }
    for (size_t i = 0; i < row.size(); ++i) {
      int y = row[i];
      if (y < 0 || y >= v) {
        throw ContractError("label_smoothed_nll: target id " + std::to_string(y) +
                            " out of range [0, " + std::to_string(v) + ")");
      }
      (*gold)[static_cast<size_t>(b) * u_max + i] = y;
      if (y != pad_id) ++scored;
    }
  }
  if (scored == 0) throw ContractError("label_smoothed_nll: no non-pad target positions");

  const double smooth = epsilon / (v - 2);
  const double gold_q = 1.0 - epsilon;
  // Constant sum(q log q) per position, identical for every gold id.
  double q_log_q = 0.0;
  if (epsilon > 0.0) q_log_q = gold_q * std::log(gold_q) + epsilon * std::log(smooth);

  const S* lp = log_probs.data();
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < u_max; ++i) {
      int y = (*gold)[static_cast<size_t>(b) * u_max + i];
      if (y == pad_id) continue;
      const S* row = lp + (static_cast<size_t>(b) * u_max + i) * v;
      double cross = gold_q * static_cast<double>(row[y]);
      if (epsilon > 0.0) {
        for (int k = 0; k < v; ++k) {
          if (k == pad_id || k == y) continue;
          cross += smooth * static_cast<double>(row[k]);
        }
      }
      total += q_log_q - cross;
    }
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / static_cast<double>(scored)));
  detail::check_finite("label_smoothed_nll", out);

  if (detail::should_record<S>({&log_probs})) {
    out.set_requires_grad(true);
    auto ln = log_probs.node(), on = out.node();
    const double inv_n = 1.0 / static_cast<double>(scored);
    TapeT<S>::active()->record(
        "label_smoothed_nll", [ln, on, gold, batch, u_max, v, pad_id, gold_q, smooth, inv_n]() {
          if (on->grad.empty()) return;
          S* gx = detail::grad_buffer<S>(ln).data();
          const double g = static_cast<double>(on->grad[0]) * inv_n;
          for (int b = 0; b < batch; ++b) {
            for (int i = 0; i < u_max; ++i) {
              int y = (*gold)[static_cast<size_t>(b) * u_max + i];
              if (y == pad_id) continue;
              S* row = gx + (static_cast<size_t>(b) * u_max + i) * v;
              row[y] -= static_cast<S>(g * gold_q);
              if (smooth > 0.0) {
                for (int k = 0; k < v; ++k) {
                  if (k == pad_id || k == y) continue;
                  row[k] -= static_cast<S>(g * smooth);
                }
              }
            }
          }
        });
  }
  return out;
}

template <class S>
CtcResult<S> ctc_loss(const TensorT<S>& log_probs, const std::vector<std::vector<int>>& targets,
                      const std::vector<int>& input_lengths, bool skip_infeasible, int blank) {
  if (log_probs.rank() != 3) {
    throw ShapeError("ctc_loss: want log_probs [B, T, V], got " + shape_str(log_probs.shape()));
  }
  const int batch = log_probs.dim(0);
  const int t_max = log_probs.dim(1);
  const int v = log_probs.dim(2);
  if (static_cast<int>(targets.size()) != batch ||
      static_cast<int>(input_lengths.size()) != batch) {
    throw ContractError("ctc_loss: batch size mismatch between log_probs, targets, and lengths");
  }
  if (blank < 0 || blank >= v) throw ContractError("ctc_loss: blank id out of range");

  CtcResult<S> result;
  result.per_utterance.assign(static_cast<size_t>(batch), 0.0);
  std::vector<int> scored;
  for (int b = 0; b < batch; ++b) {
    const auto& target = targets[static_cast<size_t>(b)];
    for (int y : target) {
      if (y < 0 || y >= v) {
        throw ContractError("ctc_loss: target id " + std::to_string(y) + " out of range [0, " +
                            std::to_string(v) + ")");
      }
      if (y == blank) throw ContractError("ctc_loss: target contains the blank id");
    }
    int frames = input_lengths[static_cast<size_t>(b)];
    if (frames < 1 || frames > t_max) {
      throw ContractError("ctc_loss: input length " + std::to_string(frames) + " outside [1, " +
                          std::to_string(t_max) + "]");
    }
    if (ctc_min_frames(target, blank) > frames) {
      if (!skip_infeasible) {
        throw DataError("ctc_loss: utterance " + std::to_string(b) + " needs at least " +
                        std::to_string(ctc_min_frames(target, blank)) + " frames for " +
                        std::to_string(target.size()) + " labels, has " + std::to_string(frames));
      }
      result.per_utterance[static_cast<size_t>(b)] = std::numeric_limits<double>::infinity();
      ++result.num_skipped;
      continue;
    }
    scored.push_back(b);
  }
  if (scored.empty()) {
    throw ContractError("ctc_loss: every utterance in the batch is infeasible");
  }

  // Double-precision staging of the inputs for the recursions.
  const S* lp = log_probs.data();
  std::vector<double> staging(static_cast<size_t>(log_probs.size()));
  for (int64_t i = 0; i < log_probs.size(); ++i) staging[static_cast<size_t>(i)] = lp[i];

  auto grad = std::make_shared<std::vector<double>>();
  const bool want_grad = detail::should_record<S>({&log_probs});
  if (want_grad) grad->assign(static_cast<size_t>(log_probs.size()), 0.0);

  const double inv_b = 1.0 / static_cast<double>(scored.size());
  double total = 0.0;
  for (int b : scored) {
    std::vector<int> ext = extend_with_blanks(targets[static_cast<size_t>(b)], blank);
    const double* utt_lp = staging.data() + static_cast<size_t>(b) * t_max * v;
    double* utt_grad =
        want_grad ? grad->data() + static_cast<size_t>(b) * t_max * v : nullptr;
    // ctc_single subtracts posteriors, yielding d(total)/d logp directly.
    double nll = ctc_single(utt_lp, input_lengths[static_cast<size_t>(b)], v, ext, utt_grad,
                            inv_b);
    result.per_utterance[static_cast<size_t>(b)] = nll;
    total += nll;
  }
  result.loss = TensorT<S>::scalar(static_cast<S>(total * inv_b));
  detail::check_finite("ctc_loss", result.loss);

  if (want_grad) {
    result.loss.set_requires_grad(true);
    auto ln = log_probs.node(), on = result.loss.node();
    TapeT<S>::active()->record("ctc_loss", [ln, on, grad]() {
      if (on->grad.empty()) return;
      S* gx = detail::grad_buffer<S>(ln).data();
      const double g = static_cast<double>(on->grad[0]);
      for (size_t i = 0; i < grad->size(); ++i) gx[i] += static_cast<S>(g * (*grad)[i]);
    });
  }
  return result;
}

template <class S>
JointLossResult<S> joint_loss(const TensorT<S>& decoder_logits,
                              const std::vector<std::vector<int>>& gold_targets,
                              const TensorT<S>* ctc_lp,
                              const std::vector<std::vector<int>>& ctc_targets,
                              const std::vector<int>& ctc_lengths, double ctc_weight,
                              double label_smoothing, bool skip_infeasible) {
  if (ctc_weight < 0.0 || ctc_weight > 1.0) {
    throw ContractError("joint_loss: ctc_weight must be in [0, 1], got " +
                        std::to_string(ctc_weight));
  }
  if (ctc_weight > 0.0 && ctc_lp == nullptr) {
    throw ContractError("joint_loss: ctc_weight > 0 needs CTC log-probabilities");
  }

  JointLossResult<S> result;
  TensorT<S> xent =
      label_smoothed_nll(log_softmax(decoder_logits), gold_targets, label_smoothing);
  result.cross_entropy = static_cast<double>(xent.item());
  for (const auto& row : gold_targets) {
    result.num_tokens += static_cast<int>(row.size());
  }

  if (ctc_weight > 0.0) {
    CtcResult<S> ctc = ctc_loss(*ctc_lp, ctc_targets, ctc_lengths, skip_infeasible);
    result.ctc = static_cast<double>(ctc.loss.item());
    result.ctc_skipped = ctc.num_skipped;
    result.total = add(scale(xent, 1.0 - ctc_weight), scale(ctc.loss, ctc_weight));
  } else {
    result.total = scale(xent, 1.0 - ctc_weight);
  }
  return result;
}

template TensorT<float> label_smoothed_nll(const TensorT<float>&,
                                           const std::vector<std::vector<int>>&, double, int);
template TensorT<double> label_smoothed_nll(const TensorT<double>&,
                                            const std::vector<std::vector<int>>&, double, int);
template CtcResult<float> ctc_loss(const TensorT<float>&, const std::vector<std::vector<int>>&,
                                   const std::vector<int>&, bool, int);
template CtcResult<double> ctc_loss(const TensorT<double>&, const std::vector<std::vector<int>>&,
                                    const std::vector<int>&, bool, int);
template JointLossResult<float> joint_loss(const TensorT<float>&,
                                           const std::vector<std::vector<int>>&,
                                           const TensorT<float>*,
                                           const std::vector<std::vector<int>>&,
                                           const std::vector<int>&, double, double, bool);
template JointLossResult<double> joint_loss(const TensorT<double>&,
                                            const std::vector<std::vector<int>>&,
                                            const TensorT<double>*,
                                            const std::vector<std::vector<int>>&,
                                            const std::vector<int>&, double, double, bool);

}  // namespace minis2t
