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
// Pipeline orchestration: the training loop with validation-driven early
// stopping and best-k checkpoint retention, transfer initialization from
// pretrained ASR/MT checkpoints, batch inference, corpus scoring, and
// dataset preparation. Everything here is deterministic for a fixed config
// and seed: shuffling, SpecAugment, and dropout all draw from stateless
// streams keyed by (seed, purpose, step), so a resumed run replays the
// exact trajectory of an uninterrupted one.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "minis2t/audio.hpp"
#include "minis2t/checkpoint.hpp"
#include "minis2t/config.hpp"
#include "minis2t/model.hpp"
#include "minis2t/tokenizer.hpp"

namespace minis2t {

// Vocabulary + scheme bundle for one side of the task, loaded from the
// paths in a RunConfig.
struct TokenCodec {
  TokenScheme scheme = TokenScheme::kChar;
  Vocabulary vocab;
  BpeModel bpe;
  bool has_bpe = false;
  std::unordered_set<std::string> protected_tokens;

  std::vector<int> encode(const std::string& text) const;  // plain ids
  std::string decode(const std::vector<int>& ids) const;   // detokenized text

  static TokenCodec load_target(const RunConfig& cfg);
  static TokenCodec load_source(const RunConfig& cfg);  // MT source side
};

// Mutable loop state; serialized into the "__train_state__" record of full
// checkpoints so a run can resume bit-exactly.
struct TrainState {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t batch_in_epoch = 0;  // next batch index within the epoch plan
  bool has_best = false;
  double best_metric = 0.0;
  int patience_used = 0;
  std::vector<std::pair<double, std::string>> kept;  // (metric, path), best first

  std::string serialize() const;
  static TrainState deserialize(const std::string& text);
};

struct TrainResult {
  std::int64_t steps = 0;
  bool early_stopped = false;
  bool has_best = false;
  double best_metric = 0.0;
  std::string best_checkpoint;  // empty when no validation ran
  std::string last_checkpoint;  // full state, resume target
  std::vector<std::string> kept_checkpoints;
};

// Runs the training loop. Writes into cfg.training.out_dir:
//   config.yaml     resolved config dump
//   train.log.tsv   one row per step: step, total, xent, ctc, lr, tokens_per_sec
//   validation.tsv  one row per validation: step, dev_loss, metric, value, improved
//   ckpt-<step>.ms2t  best-k model checkpoints (by the configured dev metric)
//   last.ms2t       model + optimizer + loop state, overwritten at each save
// `resume_from` names a full checkpoint (typically <out_dir>/last.ms2t); the
// continued run reproduces the uninterrupted trajectory exactly. A non-finite
// loss aborts with NumericError; previously saved checkpoints are kept.
TrainResult train_run(const RunConfig& cfg, const std::string& resume_from = "");

// Speech-translation transfer: subsampler and encoder parameters come from
// the ASR checkpoint, target embedding / decoder stack / output projection
// from the MT checkpoint, and the CTC projection (when present) keeps its
// fresh initialization. Any shape mismatch raises ShapeError naming the
// parameter and both shapes. `provenance`, when given, receives one
// (name, "asr" | "mt" | "fresh") pair per parameter.
S2TModel init_from_checkpoints(const S2TModelConfig& st_config, const Checkpoint& asr_ckpt,
                               const Checkpoint& mt_ckpt, uint64_t seed,
                               std::vector<std::pair<std::string, std::string>>* provenance =
                                   nullptr);

struct RecognizeOptions {
  std::string checkpoint;     // model checkpoint to decode with
  std::string input;          // manifest (*.tsv) or newline-separated WAV list
  std::string output;         // one detokenized hypothesis per line, input order
  std::string scores_tsv;     // optional: id, score, normalized, hypothesis
  std::string attention_dir;  // optional: teacher-forced cross-attention dumps
  int beam_size = 0;          // 0 keeps the config value
};

void recognize_run(const RunConfig& cfg, const RecognizeOptions& opts);

struct PrepareOptions {
  std::string wav_dir;      // holds <id>.wav per transcript row
  std::string transcripts;  // TSV rows: id, transcript[, translation]
  std::string out_dir;
  TokenScheme tokenizer = TokenScheme::kChar;
  int bpe_merges = 0;  // required > 0 for the bpe scheme
  std::vector<std::string> protected_tokens;
  int sample_rate_hz = 16000;  // 0 accepts any rate
  LogMelOptions log_mel;
};

struct PrepareResult {
  std::string manifest;
  std::string vocab;
  std::string bpe_merges;          // empty unless tokenizer == bpe
  std::string translation_vocab;   // empty unless translations present
  std::string translation_bpe;
  int num_utterances = 0;
};

// WAV directory + transcript TSV -> manifest, per-utterance feature caches
// (<out_dir>/feats/<id>.ms2f), and vocabulary files learned from the text.
PrepareResult prepare_run(const PrepareOptions& opts);

// Corpus score of a hypothesis file against a reference file (one segment
// per line, equal line counts). `signature`, when given, receives the
// metric's reproducibility signature.
double score_run(MetricKind metric, const std::string& hyp_path, const std::string& ref_path,
                 std::string* signature = nullptr);

}  // namespace minis2t
