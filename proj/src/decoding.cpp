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

#include "minis2t/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "minis2t/tokenizer.hpp"

namespace minis2t {
namespace {

constexpr float kNegInfF = -std::numeric_limits<float>::infinity();

// Tokens that must never be generated.
void mask_reserved(std::vector<float>& log_probs) {
  log_probs[kBlankId] = kNegInfF;
  log_probs[kPadId] = kNegInfF;
  log_probs[kBosId] = kNegInfF;
}

// One scorer call: `raw` keeps the model's log-probs for score reporting,
// the returned vector is masked and penalized for ranking.
std::vector<float> scored_step(const StepFn& step, const std::vector<int>& prefix,
                               const std::vector<int>& generated, const DecodeOptions& opts,
                               std::vector<float>* raw) {
  *raw = step(prefix);
  if (static_cast<int>(raw->size()) != opts.vocab_size) {
    throw ContractError("decode: step function returned " + std::to_string(raw->size()) +
                        " scores for vocab_size " + std::to_string(opts.vocab_size));
  }
  std::vector<float> log_probs = *raw;
  mask_reserved(log_probs);
  apply_penalties(log_probs, generated, opts.repetition_penalty, opts.no_repeat_ngram);
  return log_probs;
}

}  // namespace

void DecodeOptions::validate() const {
  if (vocab_size <= kEosId + 1) {
    throw ContractError("decode: vocab_size must exceed the reserved ids, got " +
                        std::to_string(vocab_size));
  }
  if (beam_size < 1) throw ContractError("decode: beam_size must be >= 1");
  if (max_len < 1) throw ContractError("decode: max_len must be >= 1");
  if (length_penalty < 0.0) throw ContractError("decode: length_penalty must be >= 0");
  if (repetition_penalty < 1.0) {
    throw ContractError("decode: repetition_penalty must be >= 1");
  }
  if (no_repeat_ngram < 0) throw ContractError("decode: no_repeat_ngram must be >= 0");
}

double length_penalty_factor(int length, double alpha) {
  if (alpha == 0.0) return 1.0;
  return std::pow((5.0 + length) / 6.0, alpha);
}

void apply_penalties(std::vector<float>& log_probs, const std::vector<int>& tokens,
                     double repetition_penalty, int no_repeat_ngram) {
  if (repetition_penalty != 1.0) {
    for (int t : tokens) {
      float& lp = log_probs[static_cast<size_t>(t)];
      if (lp == kNegInfF) continue;
      lp = lp < 0 ? lp * static_cast<float>(repetition_penalty)
                  : lp / static_cast<float>(repetition_penalty);
    }
  }
  int n = no_repeat_ngram;
  if (n > 0 && static_cast<int>(tokens.size()) >= n - 1) {
    // Ban every token that would complete an n-gram already in `tokens`.
    const size_t ctx = static_cast<size_t>(n - 1);
    for (size_t start = 0; start + static_cast<size_t>(n) <= tokens.size(); ++start) {
      bool match = true;
      for (size_t j = 0; j < ctx && match; ++j) {
        match = tokens[start + j] == tokens[tokens.size() - ctx + j];
      }
      if (match) log_probs[static_cast<size_t>(tokens[start + ctx])] = kNegInfF;
    }
  }
}

Hypothesis greedy_decode(const StepFn& step, const DecodeOptions& opts) {
  opts.validate();
  Hypothesis hyp;
  double penalized = 0.0;
  std::vector<int> prefix = {kBosId};
  while (static_cast<int>(hyp.tokens.size()) < opts.max_len) {
    std::vector<float> raw;
    std::vector<float> log_probs = scored_step(step, prefix, hyp.tokens, opts, &raw);

    int best = -1;
    for (int k = 0; k < opts.vocab_size; ++k) {
      if (log_probs[static_cast<size_t>(k)] == kNegInfF) continue;
      if (best < 0 || log_probs[static_cast<size_t>(k)] > log_probs[static_cast<size_t>(best)]) {
        best = k;
      }
    }
    if (best < 0) break;  // everything masked; close without an eos term
    if (best == kEosId) {
      hyp.score += static_cast<double>(raw[kEosId]);
      penalized += static_cast<double>(log_probs[kEosId]);
      break;
    }
    hyp.score += static_cast<double>(raw[static_cast<size_t>(best)]);
    penalized += static_cast<double>(log_probs[static_cast<size_t>(best)]);
    hyp.tokens.push_back(best);
    prefix.push_back(best);
  }
  hyp.normalized = penalized / length_penalty_factor(static_cast<int>(hyp.tokens.size()),
                                                     opts.length_penalty);
  return hyp;
}

std::vector<Hypothesis> beam_decode(const StepFn& step, const DecodeOptions& opts) {
  opts.validate();

  struct Beam {
    std::vector<int> tokens;
    double raw = 0.0;        // unpenalized accumulated log-prob
    double penalized = 0.0;  // accumulated post-penalty log-prob
  };
  struct Candidate {
    size_t beam;
    int token;
    double raw;
    double penalized;
  };
  // Length normalization applies only when a hypothesis finishes; step
  // candidates compete on cumulative penalized score, so beam_size = 1
  // mirrors greedy argmax exactly.
  auto normalize = [&opts](double penalized, size_t len) {
    return penalized / length_penalty_factor(static_cast<int>(len), opts.length_penalty);
  };

  std::vector<Beam> active = {Beam{}};
  std::vector<Hypothesis> finished;

  for (int step_no = 0; step_no < opts.max_len && !active.empty(); ++step_no) {
    const int capacity = opts.beam_size - static_cast<int>(finished.size());
    std::vector<Candidate> pool;
    std::vector<Beam> next;
    for (size_t bi = 0; bi < active.size(); ++bi) {
      std::vector<int> prefix;
      prefix.reserve(active[bi].tokens.size() + 1);
      prefix.push_back(kBosId);
      prefix.insert(prefix.end(), active[bi].tokens.begin(), active[bi].tokens.end());

      std::vector<float> raw;
      std::vector<float> log_probs = scored_step(step, prefix, active[bi].tokens, opts, &raw);
      size_t before = pool.size();
      for (int k = 0; k < opts.vocab_size; ++k) {
        float lp = log_probs[static_cast<size_t>(k)];
        if (lp == kNegInfF) continue;
        pool.push_back(Candidate{bi, k,
                                 active[bi].raw + static_cast<double>(raw[static_cast<size_t>(k)]),
                                 active[bi].penalized + static_cast<double>(lp)});
      }
      if (pool.size() == before) {
        // Every continuation is blocked: close the beam without an eos term.
        finished.push_back(Hypothesis{active[bi].tokens, active[bi].raw,
                                      normalize(active[bi].penalized, active[bi].tokens.size())});
      }
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      if (a.penalized != b.penalized) return a.penalized > b.penalized;
      if (a.token != b.token) return a.token < b.token;
      return a.beam < b.beam;
    });

    // Keep the best `capacity` candidates; eos closes a slot for good.
    int selected = 0;
    for (const Candidate& cand : pool) {
      if (selected >= capacity) break;
      ++selected;
      const Beam& src = active[cand.beam];
      if (cand.token == kEosId) {
        finished.push_back(Hypothesis{src.tokens, cand.raw,
                                      normalize(cand.penalized, src.tokens.size())});
      } else {
        Beam b;
        b.tokens = src.tokens;
        b.tokens.push_back(cand.token);
        b.raw = cand.raw;
        b.penalized = cand.penalized;
        next.push_back(std::move(b));
      }
    }
    active = std::move(next);
  }

  // Length cap reached: close survivors without an eos term.
  for (const Beam& b : active) {
    finished.push_back(Hypothesis{b.tokens, b.raw, normalize(b.penalized, b.tokens.size())});
  }

  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return finished;
}

std::vector<int> ctc_collapse(const std::vector<int>& frame_ids, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int id : frame_ids) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

void write_attention_files(const std::string& dir, const std::string& utt_id,
                           const std::vector<TensorT<float>>& cross_attn, int batch_index,
                           int target_len, int memory_len) {
  std::filesystem::create_directories(dir);
  for (size_t layer = 0; layer < cross_attn.size(); ++layer) {
    const TensorT<float>& attn = cross_attn[layer];
    if (attn.rank() != 4) {
      throw ContractError("write_attention_files: want [B, H, U, T'] tensors, got " +
                          shape_str(attn.shape()));
    }
    int heads = attn.dim(1);
    for (int h = 0; h < heads; ++h) {
      std::string path = dir + "/" + utt_id + ".layer" + std::to_string(layer) + ".head" +
                         std::to_string(h) + ".txt";
      std::ofstream out(path);
      if (!out) throw IoError("cannot write attention file " + path);
      for (int u = 0; u < target_len; ++u) {
        for (int t = 0; t < memory_len; ++t) {
          if (t > 0) out << ' ';
          out << attn.at({batch_index, h, u, t});
        }
        out << '\n';
      }
    }
  }
}

}  // namespace minis2t
