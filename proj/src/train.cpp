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

#include "minis2t/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "minis2t/audio.hpp"
#include "minis2t/common.hpp"
#include "minis2t/data.hpp"
#include "minis2t/decoding.hpp"
#include "minis2t/metrics.hpp"
#include "minis2t/objectives.hpp"
#include "minis2t/optimizer.hpp"

namespace fs = std::filesystem;

namespace minis2t {
namespace {

// Purpose tags mixed into hash_seed so shuffling, SpecAugment, and dropout
// draw from independent streams of the one run seed.
constexpr uint64_t kShuffleStream = 0x5f7a11ce00000001ULL;
constexpr uint64_t kAugmentStream = 0x5f7a11ce00000002ULL;
constexpr uint64_t kDropoutStream = 0x5f7a11ce00000003ULL;

constexpr const char* kTrainStateRecordName = "__train_state__";

std::int64_t parse_int_field(const std::string& text, const std::string& what) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw DataError(what + ": expected an integer, got \"" + text + "\"");
  }
  return value;
}

double parse_double_field(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw DataError(what + ": expected a number, got \"" + text + "\"");
  }
  return value;
}

// One TSV log; rows flush immediately so an aborted run keeps its history.
class TsvLog {
 public:
  TsvLog(const std::string& path, const std::string& header, bool append) {
    bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open log file " + path);
    if (fresh) out_ << header << '\n' << std::flush;
  }

  void row(const std::vector<std::string>& cols) {
    out_ << join(cols, "\t") << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

BatchLoadOptions make_load_options(const RunConfig& cfg, const TokenCodec* tgt,
                                   const TokenCodec* src, bool training,
                                   uint64_t augment_seed) {
  BatchLoadOptions o;
  o.cmvn = cfg.data.cmvn;
  o.training = training && cfg.training.specaugment;
  o.spec_augment.num_freq_masks = cfg.training.num_freq_masks;
  o.spec_augment.max_freq_width = cfg.training.max_freq_width;
  o.spec_augment.num_time_masks = cfg.training.num_time_masks;
  o.spec_augment.max_time_width = cfg.training.max_time_width;
  o.augment_seed = augment_seed;
  o.expected_sample_rate_hz = cfg.data.sample_rate_hz;
  o.feature_dim = cfg.model.feature_dim;
  o.log_mel.num_mel_bins = cfg.model.feature_dim;
  o.token_source = cfg.task == TaskKind::kMT;
  o.use_translation = cfg.data.target_translation;
  o.encode_target = [tgt](const std::string& text) { return tgt->encode(text); };
  if (src != nullptr) {
    o.encode_source = [src](const std::string& text) { return src->encode(text); };
  }
  return o;
}

std::vector<std::vector<int>> target_rows(const Batch& batch) {
  std::vector<std::vector<int>> rows(batch.targets.size());
  for (size_t b = 0; b < batch.targets.size(); ++b) {
    rows[b].assign(batch.targets[b].begin(),
                   batch.targets[b].begin() + batch.target_lengths[b]);
  }
  return rows;
}

struct ForwardResult {
  S2TModel::EncodeResult enc;
  S2TModel::DecodeResult dec;
  JointLossResult<float> loss;
};

ForwardResult forward_batch(const S2TModel& model, const Batch& batch, bool mt,
                            bool training, Rng* rng, double ctc_weight,
                            double label_smoothing) {
  ForwardResult out;
  if (mt) {
    out.enc = model.encode_tokens(batch.sources, training, rng);
  } else {
    out.enc = model.encode_features(batch.features, batch.feature_lengths,
                                    training, rng, &batch.ids);
  }
  std::vector<std::vector<int>> plain = target_rows(batch);
  std::vector<std::vector<int>> inputs(plain.size());
  std::vector<std::vector<int>> gold(plain.size());
  for (size_t b = 0; b < plain.size(); ++b) {
    inputs[b].reserve(plain[b].size() + 1);
    inputs[b].push_back(kBosId);
    inputs[b].insert(inputs[b].end(), plain[b].begin(), plain[b].end());
    gold[b] = plain[b];
    gold[b].push_back(kEosId);
  }
  out.dec = model.decode(out.enc.memory, out.enc.lengths, inputs, training, rng);
  bool with_ctc = ctc_weight > 0.0 && model.config().use_ctc;
  Tensor ctc_lp;
  if (with_ctc) ctc_lp = model.ctc_log_probs(out.enc.memory);
  out.loss = joint_loss(out.dec.logits, gold, with_ctc ? &ctc_lp : nullptr, plain,
                        out.enc.lengths, ctc_weight, label_smoothing,
                        /*skip_infeasible=*/true);
  return out;
}

// [1, len, d] copy of one encoder output row, trimmed to its valid length.
Tensor slice_utterance(const Tensor& memory, int b, int len) {
  int t_max = memory.dim(1);
  int d = memory.dim(2);
  Tensor out = Tensor::zeros({1, len, d});
  const float* src = memory.values().data() +
                     static_cast<int64_t>(b) * t_max * d;
  std::copy(src, src + static_cast<int64_t>(len) * d, out.data());
  return out;
}

StepFn make_step_fn(const S2TModel& model, Tensor memory, int memory_len) {
  int vocab = model.config().vocab_size;
  return [&model, memory, memory_len, vocab](const std::vector<int>& prefix) {
    S2TModel::DecodeResult dec =
        model.decode(memory, {memory_len}, {prefix}, false, nullptr);
    int u = static_cast<int>(prefix.size());
    const float* row = dec.logits.values().data() +
                       static_cast<int64_t>(u - 1) * vocab;
    double max_v = row[0];
    for (int k = 1; k < vocab; ++k) max_v = std::max(max_v, double(row[k]));
    double denom = 0.0;
    for (int k = 0; k < vocab; ++k) denom += std::exp(double(row[k]) - max_v);
    double log_denom = max_v + std::log(denom);
    std::vector<float> out(static_cast<size_t>(vocab));
    for (int k = 0; k < vocab; ++k) {
      out[static_cast<size_t>(k)] = static_cast<float>(double(row[k]) - log_denom);
    }
    return out;
  };
}

double evaluate_metric(MetricKind metric, const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs) {
  switch (metric) {
    case MetricKind::kWer:
      return wer(hyps, refs);
    case MetricKind::kBleu:
      return bleu(hyps, refs);
    case MetricKind::kChrf:
      return chrf(hyps, refs);
  }
  throw ContractError("invalid MetricKind value");
}

bool metric_improved(MetricKind metric, double value, double best) {
  if (metric == MetricKind::kWer) return value < best;
  return value > best;
}

std::string checkpoint_state_text(const TrainState& state, int64_t optimizer_steps,
                                  int plateau_decays) {
  return state.serialize() +
         "optimizer_steps: " + std::to_string(optimizer_steps) + "\n" +
         "plateau_decays: " + std::to_string(plateau_decays) + "\n";
}

void parse_checkpoint_state(const std::string& text, TrainState* state,
                            int64_t* optimizer_steps, int* plateau_decays) {
  std::string rest;
  *optimizer_steps = 0;
  *plateau_decays = 0;
  for (const std::string& line : split(text, '\n')) {
    if (line.empty()) continue;
    if (starts_with(line, "optimizer_steps: ")) {
      *optimizer_steps = parse_int_field(line.substr(17), "train state optimizer_steps");
    } else if (starts_with(line, "plateau_decays: ")) {
      *plateau_decays = static_cast<int>(
          parse_int_field(line.substr(16), "train state plateau_decays"));
    } else {
      rest += line;
      rest += '\n';
    }
  }
  *state = TrainState::deserialize(rest);
}

Checkpoint build_checkpoint(const S2TModel& model, const AdamOptimizer* opt,
                            const TrainState* state) {
  Checkpoint ckpt;
  ckpt.model = model.to_records();
  if (opt != nullptr) {
    const auto& params = opt->params();
    const auto& slots = opt->slots();
    for (size_t i = 0; i < params.size(); ++i) {
      if (slots[i].m.empty()) continue;
      CheckpointRecord m;
      m.name = "adam.m." + params[i].first;
      m.shape = {static_cast<int>(slots[i].m.size())};
      m.values = slots[i].m;
      ckpt.optimizer.push_back(std::move(m));
      CheckpointRecord v;
      v.name = "adam.v." + params[i].first;
      v.shape = {static_cast<int>(slots[i].v.size())};
      v.values = slots[i].v;
      ckpt.optimizer.push_back(std::move(v));
    }
    ckpt.optimizer.push_back(make_text_record(
        kTrainStateRecordName,
        checkpoint_state_text(*state, opt->step_count(), opt->plateau_decays())));
  }
  return ckpt;
}

void restore_optimizer(AdamOptimizer& opt, const Checkpoint& ckpt,
                       int64_t optimizer_steps, int plateau_decays) {
  std::vector<AdamOptimizer::Slot> slots(opt.params().size());
  for (size_t i = 0; i < opt.params().size(); ++i) {
    const std::string& name = opt.params()[i].first;
    const CheckpointRecord* m = ckpt.find_optimizer("adam.m." + name);
    const CheckpointRecord* v = ckpt.find_optimizer("adam.v." + name);
    if (m != nullptr) slots[i].m = m->values;
    if (v != nullptr) slots[i].v = v->values;
  }
  opt.restore(optimizer_steps, plateau_decays, std::move(slots));
}

// Greedy decode of every utterance in the batch; hypotheses land at their
// corpus positions.
void decode_batch_greedy(const S2TModel& model, const S2TModel::EncodeResult& enc,
                         const std::vector<size_t>& corpus_indices,
                         const DecodeOptions& opts, const TokenCodec& codec,
                         std::vector<std::string>* hyps) {
  for (size_t j = 0; j < corpus_indices.size(); ++j) {
    Tensor memory = slice_utterance(enc.memory, static_cast<int>(j), enc.lengths[j]);
    StepFn step = make_step_fn(model, memory, enc.lengths[j]);
    DecodeOptions greedy = opts;
    greedy.beam_size = 1;
    Hypothesis hyp = greedy_decode(step, greedy);
    (*hyps)[corpus_indices[j]] = codec.decode(hyp.tokens);
  }
}

std::string reference_text(const ManifestEntry& entry, bool use_translation) {
  if (!use_translation) return entry.transcript;
  if (!entry.has_translation) {
    throw DataError("utterance " + entry.id + ": manifest has no translation column");
  }
  return entry.translation;
}

int64_t estimate_wav_frames(const std::string& path, const LogMelOptions& opts,
                            int sample_rate_hz) {
  int64_t samples = wav_num_samples(path);
  int rate = sample_rate_hz > 0 ? sample_rate_hz : 16000;
  int64_t frame_len =
      static_cast<int64_t>(std::lround(opts.frame_length_ms * rate / 1000.0));
  int64_t frame_shift =
      static_cast<int64_t>(std::lround(opts.frame_shift_ms * rate / 1000.0));
  if (samples < frame_len) {
    throw DataError("wav file " + path + ": shorter than one analysis frame");
  }
  return 1 + (samples - frame_len) / frame_shift;
}

}  // namespace

std::vector<int> TokenCodec::encode(const std::string& text) const {
  std::vector<std::string> tokens =
      tokenize(text, scheme, has_bpe ? &bpe : nullptr, protected_tokens);
  return encode_ids(tokens, vocab, /*add_bos_eos=*/false);
}

std::string TokenCodec::decode(const std::vector<int>& ids) const {
  return detokenize(decode_ids(ids, vocab), scheme);
}

TokenCodec TokenCodec::load_target(const RunConfig& cfg) {
  TokenCodec codec;
  codec.scheme = cfg.data.tokenizer;
  codec.vocab = Vocabulary::load(cfg.data.vocab);
  if (codec.scheme == TokenScheme::kBpe) {
    codec.bpe = BpeModel::load(cfg.data.bpe_merges);
    codec.has_bpe = true;
  }
  codec.protected_tokens.insert(cfg.data.protected_tokens.begin(),
                                cfg.data.protected_tokens.end());
  return codec;
}

TokenCodec TokenCodec::load_source(const RunConfig& cfg) {
  TokenCodec codec;
  codec.scheme = cfg.data.src_tokenizer;
  codec.vocab = Vocabulary::load(cfg.data.src_vocab);
  if (codec.scheme == TokenScheme::kBpe) {
    codec.bpe = BpeModel::load(cfg.data.src_bpe_merges);
    codec.has_bpe = true;
  }
  codec.protected_tokens.insert(cfg.data.protected_tokens.begin(),
                                cfg.data.protected_tokens.end());
  return codec;
}

std::string TrainState::serialize() const {
  std::string out;
  out += "step: " + std::to_string(step) + "\n";
  out += "epoch: " + std::to_string(epoch) + "\n";
  out += "batch_in_epoch: " + std::to_string(batch_in_epoch) + "\n";
  out += "has_best: " + std::string(has_best ? "1" : "0") + "\n";
  out += "best_metric: " + format_double(best_metric) + "\n";
  out += "patience_used: " + std::to_string(patience_used) + "\n";
  for (const auto& [metric, path] : kept) {
    out += "kept: " + format_double(metric) + "\t" + path + "\n";
  }
  return out;
}

TrainState TrainState::deserialize(const std::string& text) {
  TrainState state;
  for (const std::string& line : split(text, '\n')) {
    if (line.empty()) continue;
    std::size_t sep = line.find(": ");
    if (sep == std::string::npos) {
      throw DataError("train state: malformed line \"" + line + "\"");
    }
    std::string key = line.substr(0, sep);
    std::string value = line.substr(sep + 2);
    if (key == "step") {
      state.step = parse_int_field(value, "train state step");
    } else if (key == "epoch") {
      state.epoch = parse_int_field(value, "train state epoch");
    } else if (key == "batch_in_epoch") {
      state.batch_in_epoch = parse_int_field(value, "train state batch_in_epoch");
    } else if (key == "has_best") {
      state.has_best = value == "1";
    } else if (key == "best_metric") {
      state.best_metric = parse_double_field(value, "train state best_metric");
    } else if (key == "patience_used") {
      state.patience_used =
          static_cast<int>(parse_int_field(value, "train state patience_used"));
    } else if (key == "kept") {
      std::size_t tab = value.find('\t');
      if (tab == std::string::npos) {
        throw DataError("train state: malformed kept entry \"" + value + "\"");
      }
      state.kept.emplace_back(
          parse_double_field(value.substr(0, tab), "train state kept metric"),
          value.substr(tab + 1));
    } else {
      throw DataError("train state: unknown field \"" + key + "\"");
    }
  }
  return state;
}

TrainResult train_run(const RunConfig& cfg, const std::string& resume_from) {
  cfg.validate();
  const bool mt = cfg.task == TaskKind::kMT;
  if (cfg.data.train_manifest.empty()) {
    throw ConfigError("data.train_manifest is required to train");
  }
  fs::create_directories(cfg.training.out_dir);
  const fs::path out_dir(cfg.training.out_dir);
  write_text_file((out_dir / "config.yaml").string(), cfg.to_yaml());

  TokenCodec tgt = TokenCodec::load_target(cfg);
  TokenCodec src;
  if (mt) src = TokenCodec::load_source(cfg);

  S2TModelConfig mc = make_model_config(cfg, mt ? src.vocab.size() : 0, tgt.vocab.size());
  S2TModel model(mc, cfg.training.seed);

  std::vector<ManifestEntry> all_entries = read_manifest(cfg.data.train_manifest);
  auto count_tokens = [&](const ManifestEntry& e) {
    return tgt.encode(reference_text(e, cfg.data.target_translation)).size();
  };
  LengthFilterResult filtered =
      length_filter(all_entries, count_tokens, cfg.data.min_frames,
                    cfg.data.max_frames, cfg.data.max_target_tokens);
  const std::vector<ManifestEntry>& train_entries = filtered.kept;
  if (train_entries.empty()) {
    throw DataError("no training utterances survive the length filter");
  }
  std::vector<ManifestEntry> dev_entries;
  if (!cfg.data.dev_manifest.empty()) {
    dev_entries = read_manifest(cfg.data.dev_manifest);
  }
  const bool has_dev = !dev_entries.empty();

  OptimizerConfig ocfg;
  ocfg.learning_rate = cfg.training.learning_rate;
  ocfg.clip_grad_norm = cfg.training.clip_grad_norm;
  ocfg.scheduler = cfg.training.scheduler;
  ocfg.warmup_steps = cfg.training.warmup_steps;
  ocfg.plateau_factor = cfg.training.plateau_factor;
  AdamOptimizer opt(model.parameters(), ocfg);

  TrainState state;
  const bool resuming = !resume_from.empty();
  if (resuming) {
    Checkpoint ckpt = read_checkpoint(resume_from);
    S2TModelConfig saved = config_from_checkpoint(ckpt);
    if (saved.to_yaml() != mc.to_yaml()) {
      throw ConfigError("resume checkpoint " + resume_from +
                        " was trained with a different model config");
    }
    model.load_records(ckpt);
    const CheckpointRecord* rec = ckpt.find_optimizer(kTrainStateRecordName);
    if (rec == nullptr) {
      throw DataError("resume checkpoint " + resume_from +
                      " lacks the train-state record; it is model-only");
    }
    int64_t optimizer_steps = 0;
    int plateau_decays = 0;
    parse_checkpoint_state(text_from_record(*rec), &state, &optimizer_steps,
                           &plateau_decays);
    restore_optimizer(opt, ckpt, optimizer_steps, plateau_decays);
  }

  TsvLog train_log((out_dir / "train.log.tsv").string(),
                   "step\ttotal\txent\tctc\tlr\ttokens_per_sec", resuming);
  TsvLog val_log((out_dir / "validation.tsv").string(),
                 "step\tdev_loss\tmetric\tvalue\timproved", resuming);

  const std::string last_path = (out_dir / "last.ms2t").string();
  auto save_last = [&]() {
    write_checkpoint(last_path, build_checkpoint(model, &opt, &state));
  };

  TrainResult result;
  const uint64_t seed = cfg.training.seed;
  const std::string metric_name = metric_kind_to_string(cfg.testing.metric);
  DecodeOptions dev_decode = make_decode_options(cfg, tgt.vocab.size());
  BatchLoadOptions dev_load =
      make_load_options(cfg, &tgt, mt ? &src : nullptr, /*training=*/false, 0);

  if (cfg.training.max_steps == 0) {
    save_last();
    result.last_checkpoint = last_path;
    return result;
  }

  auto run_validation = [&]() -> bool {
    // Returns true when training should stop (patience exhausted).
    BatchPlan plan =
        make_batches(dev_entries, cfg.testing.batch_frames, 0, /*bucketing=*/true);
    std::vector<std::string> hyps(dev_entries.size());
    double loss_sum = 0.0;
    size_t scored = 0;
    for (const std::vector<size_t>& indices : plan.batches) {
      Batch batch = load_batch(dev_entries, indices, dev_load);
      ForwardResult fwd =
          forward_batch(model, batch, mt, /*training=*/false, nullptr,
                        cfg.training.ctc_weight, cfg.training.label_smoothing);
      loss_sum += fwd.loss.total.item() * static_cast<double>(indices.size());
      scored += indices.size();
      decode_batch_greedy(model, fwd.enc, indices, dev_decode, tgt, &hyps);
    }
    double dev_loss = scored > 0 ? loss_sum / static_cast<double>(scored) : 0.0;
    std::vector<std::string> refs(dev_entries.size());
    for (size_t i = 0; i < dev_entries.size(); ++i) {
      refs[i] = reference_text(dev_entries[i], cfg.data.target_translation);
    }
    double value = evaluate_metric(cfg.testing.metric, hyps, refs);
    bool improved =
        !state.has_best || metric_improved(cfg.testing.metric, value, state.best_metric);
    if (improved) {
      state.has_best = true;
      state.best_metric = value;
      state.patience_used = 0;
    } else {
      ++state.patience_used;
    }
    opt.report_validation(improved);
    val_log.row({std::to_string(state.step), format_double(dev_loss), metric_name,
                 format_double(value), improved ? "1" : "0"});

    // Best-k retention on the validation metric.
    bool keep = state.kept.size() < static_cast<size_t>(cfg.training.keep_best) ||
                metric_improved(cfg.testing.metric, value, state.kept.back().first);
    if (keep) {
      std::string path = (out_dir / ("ckpt-" + std::to_string(state.step) + ".ms2t")).string();
      write_checkpoint(path, build_checkpoint(model, nullptr, nullptr));
      auto at = std::find_if(state.kept.begin(), state.kept.end(),
                             [&](const std::pair<double, std::string>& kv) {
                               return metric_improved(cfg.testing.metric, value, kv.first);
                             });
      state.kept.insert(at, {value, path});
      while (state.kept.size() > static_cast<size_t>(cfg.training.keep_best)) {
        fs::remove(state.kept.back().second);
        state.kept.pop_back();
      }
    }
    save_last();
    return state.patience_used >= cfg.training.patience;
  };

  bool done = state.step >= cfg.training.max_steps ||
              (has_dev && state.patience_used >= cfg.training.patience);
  for (int64_t epoch = state.epoch; !done; ++epoch) {
    BatchPlan plan = make_batches(train_entries, cfg.training.batch_frames,
                                  hash_seed({seed, kShuffleStream,
                                             static_cast<uint64_t>(epoch)}),
                                  cfg.training.bucketing);
    state.epoch = epoch;
    for (size_t bi = static_cast<size_t>(state.batch_in_epoch);
         bi < plan.batches.size() && !done; ++bi) {
      ++state.step;
      uint64_t augment_seed =
          hash_seed({seed, kAugmentStream, static_cast<uint64_t>(state.step)});
      BatchLoadOptions load_opts = make_load_options(
          cfg, &tgt, mt ? &src : nullptr, /*training=*/true, augment_seed);
      Batch batch = load_batch(train_entries, plan.batches[bi], load_opts);
      Rng dropout_rng(
          hash_seed({seed, kDropoutStream, static_cast<uint64_t>(state.step)}));

      auto t0 = std::chrono::steady_clock::now();
      double lr = opt.current_lr();
      Tape tape;
      JointLossResult<float> loss;
      {
        TapeGuard guard(tape);
        ForwardResult fwd =
            forward_batch(model, batch, mt, /*training=*/true, &dropout_rng,
                          cfg.training.ctc_weight, cfg.training.label_smoothing);
        loss = fwd.loss;
        double total = loss.total.item();
        if (!std::isfinite(total)) {
          std::string last_good =
              fs::exists(last_path) ? last_path : std::string("(none)");
          throw NumericError("non-finite training loss at step " +
                             std::to_string(state.step) +
                             "; last good checkpoint: " + last_good);
        }
        tape.backward(loss.total);
      }
      opt.step();
      opt.zero_grad();
      double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      double tps = elapsed > 0.0 ? loss.num_tokens / elapsed : 0.0;
      train_log.row({std::to_string(state.step), format_double(loss.total.item()),
                     format_double(loss.cross_entropy), format_double(loss.ctc),
                     format_double(lr), format_double(tps)});
      state.batch_in_epoch = static_cast<int64_t>(bi) + 1;

      if (state.step % cfg.training.validation_freq == 0) {
        if (has_dev) {
          if (run_validation()) {
            result.early_stopped = true;
            done = true;
          }
        } else {
          save_last();
        }
      }
      if (state.step >= cfg.training.max_steps) done = true;
    }
    if (!done) state.batch_in_epoch = 0;
  }

  save_last();
  result.steps = state.step;
  result.has_best = state.has_best;
  result.best_metric = state.best_metric;
  result.last_checkpoint = last_path;
  if (!state.kept.empty()) result.best_checkpoint = state.kept.front().second;
  for (const auto& [metric, path] : state.kept) {
    result.kept_checkpoints.push_back(path);
  }
  return result;
}

S2TModel init_from_checkpoints(const S2TModelConfig& st_config, const Checkpoint& asr_ckpt,
                               const Checkpoint& mt_ckpt, uint64_t seed,
                               std::vector<std::pair<std::string, std::string>>* provenance) {
  st_config.validate();
  S2TModel model(st_config, seed);
  for (auto& [name, tensor] : model.parameters()) {
    const Checkpoint* from = nullptr;
    const char* source = "fresh";
    if (starts_with(name, "subsampler.") || starts_with(name, "encoder.") ||
        starts_with(name, "src_embed.")) {
      from = &asr_ckpt;
      source = "asr";
    } else if (starts_with(name, "decoder.") || starts_with(name, "tgt_embed.") ||
               starts_with(name, "output_proj.")) {
      from = &mt_ckpt;
      source = "mt";
    } else if (starts_with(name, "ctc_proj.")) {
      from = nullptr;
      source = "fresh";
    } else {
      throw ContractError("transfer: unclassified parameter " + name);
    }
    if (from != nullptr) {
      const CheckpointRecord* rec = from->find_model(name);
      if (rec == nullptr) {
        throw DataError(std::string("transfer: ") + source +
                        " checkpoint lacks parameter " + name);
      }
      if (rec->shape != tensor.shape()) {
        throw ShapeError("transfer: parameter " + name + " has shape " +
                         shape_str(tensor.shape()) + " but the " + source +
                         " checkpoint holds " + shape_str(rec->shape));
      }
      std::copy(rec->values.begin(), rec->values.end(), tensor.data());
    }
    if (provenance != nullptr) provenance->emplace_back(name, source);
  }
  return model;
}

void recognize_run(const RunConfig& cfg, const RecognizeOptions& opts) {
  cfg.validate();
  if (opts.checkpoint.empty()) throw ConfigError("recognize: checkpoint path is required");
  if (opts.input.empty()) throw ConfigError("recognize: input path is required");
  if (opts.output.empty()) throw ConfigError("recognize: output path is required");
  const bool mt = cfg.task == TaskKind::kMT;

  Checkpoint ckpt = read_checkpoint(opts.checkpoint);
  S2TModelConfig mc = config_from_checkpoint(ckpt);
  S2TModel model(mc, /*seed=*/1);
  model.load_records(ckpt);

  TokenCodec tgt = TokenCodec::load_target(cfg);
  if (mc.vocab_size != tgt.vocab.size()) {
    throw ConfigError("checkpoint vocab size " + std::to_string(mc.vocab_size) +
                      " does not match the loaded vocabulary (" +
                      std::to_string(tgt.vocab.size()) + " entries)");
  }
  TokenCodec src;
  if (mt) {
    if (mc.input_kind != InputKind::kTokenEmbedding) {
      throw ConfigError("task mt needs a token-input checkpoint");
    }
    src = TokenCodec::load_source(cfg);
    if (mc.src_vocab_size != src.vocab.size()) {
      throw ConfigError("checkpoint source vocab size " +
                        std::to_string(mc.src_vocab_size) +
                        " does not match the loaded source vocabulary (" +
                        std::to_string(src.vocab.size()) + " entries)");
    }
  } else if (mc.input_kind != InputKind::kFilterbank) {
    throw ConfigError("task s2t needs a filterbank-input checkpoint");
  }

  BatchLoadOptions load_opts =
      make_load_options(cfg, &tgt, mt ? &src : nullptr, /*training=*/false, 0);

  std::vector<ManifestEntry> entries;
  if (ends_with(opts.input, ".tsv")) {
    entries = read_manifest(opts.input);
  } else {
    for (const std::string& line : read_lines(opts.input)) {
      if (line.empty()) continue;
      ManifestEntry e;
      e.path = line;
      e.id = fs::path(line).stem().string();
      e.n_frames =
          estimate_wav_frames(line, load_opts.log_mel, cfg.data.sample_rate_hz);
      entries.push_back(std::move(e));
    }
  }

  DecodeOptions dopts = make_decode_options(cfg, tgt.vocab.size());
  if (opts.beam_size > 0) {
    dopts.beam_size = opts.beam_size;
    dopts.validate();
  }

  std::vector<std::string> hyps(entries.size());
  std::vector<Hypothesis> raw(entries.size());
  if (!opts.attention_dir.empty()) fs::create_directories(opts.attention_dir);

  BatchPlan plan = make_batches(entries, cfg.testing.batch_frames, 0, /*bucketing=*/true);
  for (const std::vector<size_t>& indices : plan.batches) {
    Batch batch = load_batch(entries, indices, load_opts);
    S2TModel::EncodeResult enc =
        mt ? model.encode_tokens(batch.sources, false, nullptr)
           : model.encode_features(batch.features, batch.feature_lengths, false,
                                   nullptr, &batch.ids);
    for (size_t j = 0; j < indices.size(); ++j) {
      Tensor memory = slice_utterance(enc.memory, static_cast<int>(j), enc.lengths[j]);
      StepFn step = make_step_fn(model, memory, enc.lengths[j]);
      Hypothesis best = dopts.beam_size == 1 ? greedy_decode(step, dopts)
                                             : beam_decode(step, dopts).front();
      hyps[indices[j]] = tgt.decode(best.tokens);
      raw[indices[j]] = best;

      if (!opts.attention_dir.empty()) {
        std::vector<int> forced;
        forced.push_back(kBosId);
        forced.insert(forced.end(), best.tokens.begin(), best.tokens.end());
        S2TModel::DecodeResult dec =
            model.decode(memory, {enc.lengths[j]}, {forced}, false, nullptr);
        write_attention_files(opts.attention_dir, entries[indices[j]].id,
                              dec.cross_attn, 0, static_cast<int>(forced.size()),
                              enc.lengths[j]);
      }
    }
  }

  std::string out_text;
  for (const std::string& h : hyps) {
    out_text += h;
    out_text += '\n';
  }
  if (hyps.empty()) out_text.clear();
  write_text_file(opts.output, out_text);

  if (!opts.scores_tsv.empty()) {
    std::string tsv = "id\tscore\tnormalized\thypothesis\n";
    for (size_t i = 0; i < entries.size(); ++i) {
      tsv += entries[i].id + "\t" + format_double(raw[i].score) + "\t" +
             format_double(raw[i].normalized) + "\t" + hyps[i] + "\n";
    }
    write_text_file(opts.scores_tsv, tsv);
  }
}

PrepareResult prepare_run(const PrepareOptions& opts) {
  if (opts.wav_dir.empty() || opts.transcripts.empty() || opts.out_dir.empty()) {
    throw ConfigError("prepare: wav_dir, transcripts, and out_dir are required");
  }
  if (opts.tokenizer == TokenScheme::kBpe && opts.bpe_merges <= 0) {
    throw ConfigError("prepare: the bpe tokenizer needs a positive merge count");
  }
  const fs::path out_dir(opts.out_dir);
  fs::create_directories(out_dir / "feats");

  std::vector<ManifestEntry> entries;
  std::vector<std::string> transcript_lines;
  std::vector<std::string> translation_lines;
  std::unordered_set<std::string> seen_ids;
  int line_no = 0;
  int with_translation = 0;
  for (const std::string& line : read_lines(opts.transcripts)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 2 && cols.size() != 3) {
      throw DataError("transcripts line " + std::to_string(line_no) +
                      ": expected id<TAB>text[<TAB>translation], got " +
                      std::to_string(cols.size()) + " fields");
    }
    if (cols[0].empty()) {
      throw DataError("transcripts line " + std::to_string(line_no) + ": empty id");
    }
    if (!seen_ids.insert(cols[0]).second) {
      throw DataError("transcripts line " + std::to_string(line_no) +
                      ": duplicate id \"" + cols[0] + "\"");
    }
    ManifestEntry e;
    e.id = cols[0];
    e.transcript = cols[1];
    if (cols.size() == 3) {
      e.translation = cols[2];
      e.has_translation = true;
      ++with_translation;
      translation_lines.push_back(cols[2]);
    }
    transcript_lines.push_back(cols[1]);

    Waveform wave = load_wav((fs::path(opts.wav_dir) / (e.id + ".wav")).string());
    if (opts.sample_rate_hz > 0 && wave.sample_rate_hz != opts.sample_rate_hz) {
      throw DataError("utterance " + e.id + ": sample rate " +
                      std::to_string(wave.sample_rate_hz) + " Hz, expected " +
                      std::to_string(opts.sample_rate_hz));
    }
    FeatureSequence feats = log_mel(wave, opts.log_mel);
    std::string cache_path = (out_dir / "feats" / (e.id + ".ms2f")).string();
    write_feature_cache(cache_path, feats);
    e.path = cache_path;
    e.n_frames = feats.num_frames;
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DataError("prepare: no utterances in " + opts.transcripts);
  if (with_translation != 0 && with_translation != static_cast<int>(entries.size())) {
    throw DataError("prepare: translations must cover all utterances or none (" +
                    std::to_string(with_translation) + " of " +
                    std::to_string(entries.size()) + " rows have one)");
  }

  PrepareResult result;
  result.num_utterances = static_cast<int>(entries.size());
  result.manifest = (out_dir / "manifest.tsv").string();
  write_manifest(result.manifest, entries);

  const BpeModel* bpe_ptr = nullptr;
  BpeModel bpe;
  if (opts.tokenizer == TokenScheme::kBpe) {
    bpe = learn_bpe(transcript_lines, opts.bpe_merges, opts.protected_tokens);
    result.bpe_merges = (out_dir / "bpe.merges").string();
    bpe.save(result.bpe_merges);
    bpe_ptr = &bpe;
  }
  Vocabulary vocab =
      build_vocabulary(transcript_lines, opts.tokenizer, bpe_ptr, opts.protected_tokens);
  result.vocab = (out_dir / "vocab.txt").string();
  vocab.save(result.vocab);

  if (with_translation > 0) {
    const BpeModel* tr_bpe_ptr = nullptr;
    BpeModel tr_bpe;
    if (opts.tokenizer == TokenScheme::kBpe) {
      tr_bpe = learn_bpe(translation_lines, opts.bpe_merges, opts.protected_tokens);
      result.translation_bpe = (out_dir / "bpe.translation.merges").string();
      tr_bpe.save(result.translation_bpe);
      tr_bpe_ptr = &tr_bpe;
    }
    Vocabulary tr_vocab = build_vocabulary(translation_lines, opts.tokenizer, tr_bpe_ptr,
                                           opts.protected_tokens);
    result.translation_vocab = (out_dir / "vocab.translation.txt").string();
    tr_vocab.save(result.translation_vocab);
  }
  return result;
}

double score_run(MetricKind metric, const std::string& hyp_path, const std::string& ref_path,
                 std::string* signature) {
  std::vector<std::string> hyps = read_lines(hyp_path);
  std::vector<std::string> refs = read_lines(ref_path);
  if (hyps.size() != refs.size()) {
    throw DataError("hypothesis count " + std::to_string(hyps.size()) +
                    " does not match reference count " + std::to_string(refs.size()));
  }
  switch (metric) {
    case MetricKind::kWer:
      if (signature != nullptr) *signature = EvalConfig::wer_default().signature("wer");
      return wer(hyps, refs);
    case MetricKind::kBleu:
      if (signature != nullptr) *signature = EvalConfig::bleu_default().signature("bleu");
      return bleu(hyps, refs);
    case MetricKind::kChrf:
      if (signature != nullptr) *signature = chrf_signature();
      return chrf(hyps, refs);
  }
  throw ContractError("invalid MetricKind value");
}

}  // namespace minis2t
