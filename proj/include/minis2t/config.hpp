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
// Run configuration: a small YAML subset (scalars, maps, scalar lists,
// two-space indent, quote-aware # comments; no anchors, no flow syntax)
// parsed into a fully default-filled RunConfig. Unknown keys are rejected
// with their dotted path, and to_yaml() emits a resolved dump that parses
// back to an equal config.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "minis2t/data.hpp"
#include "minis2t/decoding.hpp"
#include "minis2t/metrics.hpp"
#include "minis2t/model.hpp"
#include "minis2t/optimizer.hpp"
#include "minis2t/tokenizer.hpp"

namespace minis2t {

// Parsed form of one YAML document. Line numbers are 1-based and refer to
// the line the node's first token appeared on.
struct YamlNode {
  enum class Kind { kScalar, kMap, kList };

  Kind kind = Kind::kScalar;
  std::string scalar;                                       // kScalar
  std::vector<std::pair<std::string, YamlNode>> entries;    // kMap, in file order
  std::vector<YamlNode> items;                              // kList
  int line = 0;

  // Map lookup; null when absent or when this node is not a map.
  const YamlNode* find(const std::string& key) const;
};

YamlNode parse_yaml(const std::string& text);

enum class TaskKind { kS2T, kMT };

TaskKind task_kind_from_string(const std::string& name);
std::string task_kind_to_string(TaskKind task);

enum class MetricKind { kWer, kBleu, kChrf };

MetricKind metric_kind_from_string(const std::string& name);
std::string metric_kind_to_string(MetricKind metric);

struct DataSection {
  std::string train_manifest;
  std::string dev_manifest;
  std::string vocab;
  TokenScheme tokenizer = TokenScheme::kChar;
  std::string bpe_merges;     // required when tokenizer == kBpe
  std::string src_vocab;      // MT source side
  TokenScheme src_tokenizer = TokenScheme::kChar;
  std::string src_bpe_merges;
  bool target_translation = false;  // target column: transcript or translation
  std::vector<std::string> protected_tokens;
  std::int64_t min_frames = 1;
  std::int64_t max_frames = 6000;
  std::int64_t max_target_tokens = 400;
  BatchLoadOptions::Cmvn cmvn = BatchLoadOptions::Cmvn::kUtterance;
  int sample_rate_hz = 16000;

  bool operator==(const DataSection&) const = default;
};

struct ModelSection {
  int feature_dim = 80;
  int d_model = 256;
  int num_heads = 4;
  int ffn_dim = 1024;
  int num_encoder_layers = 6;
  int num_decoder_layers = 3;
  int num_conv_layers = 2;
  int conv_kernel = 3;
  int conv_stride = 2;
  double dropout = 0.1;
  bool use_ctc = true;

  bool operator==(const ModelSection&) const = default;
};

struct TrainingSection {
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  std::uint64_t seed = 42;
  double learning_rate = 1e-3;
  SchedulerKind scheduler = SchedulerKind::kWarmupDecay;
  int warmup_steps = 4000;
  double plateau_factor = 0.5;
  double clip_grad_norm = 5.0;
  std::int64_t batch_frames = 4000;
  bool bucketing = true;
  std::int64_t max_steps = 10000;
  int validation_freq = 500;
  int patience = 5;
  int keep_best = 3;
  std::string out_dir = "run";
  bool specaugment = true;
  int num_freq_masks = 2;
  int max_freq_width = 10;
  int num_time_masks = 2;
  int max_time_width = 20;

  bool operator==(const TrainingSection&) const = default;
};

struct TestingSection {
  int beam_size = 5;
  int max_len = 200;
  double length_penalty = 1.0;
  double repetition_penalty = 1.0;
  int no_repeat_ngram = 0;
  MetricKind metric = MetricKind::kWer;
  std::int64_t batch_frames = 4000;

  bool operator==(const TestingSection&) const = default;
};

struct RunConfig {
  TaskKind task = TaskKind::kS2T;
  DataSection data;
  ModelSection model;
  TrainingSection training;
  TestingSection testing;

  bool operator==(const RunConfig&) const = default;

  // Range and cross-field checks; throws ConfigError naming the dotted key.
  void validate() const;

  // Resolved dump: every field, defaults included. parse_run_config of the
  // dump yields an equal config, and dumping again is byte-identical.
  std::string to_yaml() const;
};

// Parses, applies the MS2T_SEED environment override if set, validates.
RunConfig parse_run_config(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);

// Model geometry for this run. S2T feeds filterbanks into the conv
// subsampler; MT embeds source tokens, so src_vocab_size must be the size
// of the loaded source vocabulary (ignored for S2T).
S2TModelConfig make_model_config(const RunConfig& run, int src_vocab_size,
                                 int vocab_size);

DecodeOptions make_decode_options(const RunConfig& run, int vocab_size);

}  // namespace minis2t
