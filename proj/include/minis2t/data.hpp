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
// Manifest-driven dataset: a TSV manifest stores only paths and precomputed
// frame counts, so batch planning never touches audio files; features are
// loaded (and tokenized, normalized, augmented) only when a batch is
// actually materialized.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "minis2t/audio.hpp"
#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t {

struct ManifestEntry {
  std::string id;
  std::string path;  // WAV, ".ms2f" feature cache, or "-" for text-only rows
  int64_t n_frames = 0;
  std::string transcript;
  std::string translation;
  bool has_translation = false;
};

// TSV with header "id\tpath\tn_frames\ttranscript" plus an optional final
// "translation" column. Malformed input raises DataError naming the line.
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Inverse of read_manifest. All entries must agree on whether a translation
// column is present.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

struct LengthFilterResult {
  std::vector<ManifestEntry> kept;
  int dropped_short_frames = 0;
  int dropped_long_frames = 0;
  int dropped_long_target = 0;
};

// Drops entries whose frame count falls outside [min_frames, max_frames] or
// whose target tokenizes to more than max_tokens tokens. `count_tokens`
// receives the target text (tokenization happens on the fly, so the manifest
// never stores token counts).
LengthFilterResult length_filter(const std::vector<ManifestEntry>& entries,
                                 const std::function<size_t(const ManifestEntry&)>& count_tokens,
                                 int64_t min_frames, int64_t max_frames, int64_t max_tokens);

struct BatchPlan {
  std::vector<std::vector<size_t>> batches;  // indices into the entry vector
  int num_over_budget = 0;                   // single entries exceeding the budget
};

// Shuffles with the given seed, optionally sorts by length within shuffled
// chunks of `bucket_chunk` entries (cheaper padding without fixing the epoch
// order), then greedily packs batches up to `frame_budget` total frames. An
// entry larger than the whole budget gets a batch of its own.
BatchPlan make_batches(const std::vector<ManifestEntry>& entries, int64_t frame_budget,
                       uint64_t shuffle_seed, bool bucketing, size_t bucket_chunk = 256);

struct Batch {
  std::vector<std::string> ids;
  TensorT<float> features;           // [B, T_max, dim], zero padded; empty for text-only
  std::vector<int> feature_lengths;  // valid frames per row; empty for text-only
  std::vector<std::vector<int>> sources;  // ragged source token ids; text-only batches
  std::vector<std::vector<int>> targets;  // [B][U_max], padded with kPadId
  std::vector<int> target_lengths;        // valid ids per row
  int64_t total_frames = 0;
};

struct BatchLoadOptions {
  enum class Cmvn { kUtterance, kGlobal, kNone };
  Cmvn cmvn = Cmvn::kUtterance;
  bool training = false;  // enables SpecAugment
  SpecAugmentPolicy spec_augment;
  uint64_t augment_seed = 0;  // caller keys this by step for reproducibility
  int expected_sample_rate_hz = 16000;
  int feature_dim = 80;
  LogMelOptions log_mel;   // applied to WAV inputs
  bool token_source = false;      // text-only rows: encode_source instead of audio
  bool use_translation = false;   // target text column
  std::function<std::vector<int>(const std::string&)> encode_target;
  std::function<std::vector<int>(const std::string&)> encode_source;  // token_source only
};

// Materializes one planned batch: reads ".ms2f" caches directly, runs WAV
// files through log_mel (sample rate must match), applies CMVN and — in
// training mode — SpecAugment, then pads. File problems raise IoError naming
// the utterance id.
Batch load_batch(const std::vector<ManifestEntry>& entries, const std::vector<size_t>& indices,
                 const BatchLoadOptions& opts);

}  // namespace minis2t
