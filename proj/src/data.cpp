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

#include "minis2t/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "minis2t/tokenizer.hpp"

namespace minis2t {
namespace {

constexpr const char* kHeaderBase = "id\tpath\tn_frames\ttranscript";
constexpr const char* kHeaderWithTranslation = "id\tpath\tn_frames\ttranscript\ttranslation";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string where(const std::string& path, size_t line_no) {
  return "manifest " + path + " line " + std::to_string(line_no) + ": ";
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest " + path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + path + ": missing header");
  strip_cr(line);
  bool with_translation;
  if (line == kHeaderBase) {
    with_translation = false;
  } else if (line == kHeaderWithTranslation) {
    with_translation = true;
  } else {
    throw DataError(where(path, 1) + "unexpected header \"" + line + "\"");
  }

  const size_t expected_fields = with_translation ? 5 : 4;
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> ids;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != expected_fields) {
      throw DataError(where(path, line_no) + "expected " + std::to_string(expected_fields) +
                      " fields, got " + std::to_string(fields.size()));
    }
    ManifestEntry entry;
    entry.id = fields[0];
    if (entry.id.empty()) throw DataError(where(path, line_no) + "empty id");
    if (!ids.insert(entry.id).second) {
      throw DataError(where(path, line_no) + "duplicate id \"" + entry.id + "\"");
    }
    entry.path = fields[1];
    const std::string& frames = fields[2];
    auto [ptr, ec] = std::from_chars(frames.data(), frames.data() + frames.size(),
                                     entry.n_frames);
    if (ec != std::errc() || ptr != frames.data() + frames.size()) {
      throw DataError(where(path, line_no) + "n_frames \"" + frames + "\" is not an integer");
    }
    if (entry.n_frames <= 0) {
      throw DataError(where(path, line_no) + "n_frames must be positive, got " + frames);
    }
    entry.transcript = fields[3];
    if (with_translation) {
      entry.translation = fields[4];
      entry.has_translation = true;
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  bool with_translation = !entries.empty() && entries.front().has_translation;
  for (const ManifestEntry& e : entries) {
    if (e.has_translation != with_translation) {
      throw ContractError("write_manifest: entry \"" + e.id +
                          "\" disagrees with the rest on having a translation");
    }
    for (const std::string* field : {&e.id, &e.path, &e.transcript, &e.translation}) {
      if (field->find('\t') != std::string::npos || field->find('\n') != std::string::npos) {
        throw ContractError("write_manifest: entry \"" + e.id +
                            "\" contains a tab or newline");
      }
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("manifest " + path + ": cannot open for writing");
  out << (with_translation ? kHeaderWithTranslation : kHeaderBase) << '\n';
  for (const ManifestEntry& e : entries) {
    out << e.id << '\t' << e.path << '\t' << e.n_frames << '\t' << e.transcript;
    if (with_translation) out << '\t' << e.translation;
    out << '\n';
  }
  if (!out.flush()) throw IoError("manifest " + path + ": write failed");
}

LengthFilterResult length_filter(const std::vector<ManifestEntry>& entries,
                                 const std::function<size_t(const ManifestEntry&)>& count_tokens,
                                 int64_t min_frames, int64_t max_frames, int64_t max_tokens) {
  LengthFilterResult result;
  for (const ManifestEntry& entry : entries) {
    if (entry.n_frames < min_frames) {
      ++result.dropped_short_frames;
    } else if (entry.n_frames > max_frames) {
      ++result.dropped_long_frames;
    } else if (count_tokens && static_cast<int64_t>(count_tokens(entry)) > max_tokens) {
      ++result.dropped_long_target;
    } else {
      result.kept.push_back(entry);
    }
  }
  return result;
}

BatchPlan make_batches(const std::vector<ManifestEntry>& entries, int64_t frame_budget,
                       uint64_t shuffle_seed, bool bucketing, size_t bucket_chunk) {
  if (frame_budget <= 0) throw ContractError("make_batches: frame_budget must be positive");
  std::vector<size_t> order(entries.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(shuffle_seed);
  for (size_t i = order.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  if (bucketing && bucket_chunk > 1) {
    for (size_t start = 0; start < order.size(); start += bucket_chunk) {
      size_t stop = std::min(start + bucket_chunk, order.size());
      std::sort(order.begin() + static_cast<ptrdiff_t>(start),
                order.begin() + static_cast<ptrdiff_t>(stop), [&entries](size_t a, size_t b) {
                  if (entries[a].n_frames != entries[b].n_frames) {
                    return entries[a].n_frames < entries[b].n_frames;
                  }
                  return a < b;
                });
    }
  }

  BatchPlan plan;
  std::vector<size_t> current;
  int64_t current_frames = 0;
  for (size_t idx : order) {
    int64_t frames = entries[idx].n_frames;
    if (!current.empty() && current_frames + frames > frame_budget) {
      plan.batches.push_back(std::move(current));
      current.clear();
      current_frames = 0;
    }
    current.push_back(idx);
    current_frames += frames;
    if (frames > frame_budget) {
      ++plan.num_over_budget;
      plan.batches.push_back(std::move(current));
      current.clear();
      current_frames = 0;
    }
  }
  if (!current.empty()) plan.batches.push_back(std::move(current));
  return plan;
}

Batch load_batch(const std::vector<ManifestEntry>& entries, const std::vector<size_t>& indices,
                 const BatchLoadOptions& opts) {
  if (indices.empty()) throw ContractError("load_batch: empty batch");
  if (!opts.encode_target) throw ContractError("load_batch: encode_target is not set");
  if (opts.token_source && !opts.encode_source) {
    throw ContractError("load_batch: token_source requires encode_source");
  }

  Batch batch;
  std::vector<FeatureSequence> features;
  for (size_t idx : indices) {
    if (idx >= entries.size()) {
      throw ContractError("load_batch: index " + std::to_string(idx) + " out of range for " +
                          std::to_string(entries.size()) + " entries");
    }
    const ManifestEntry& entry = entries[idx];
    batch.ids.push_back(entry.id);

    if (opts.token_source) {
      batch.sources.push_back(opts.encode_source(entry.transcript));
    } else {
      FeatureSequence fs;
      try {
        if (ends_with(entry.path, ".ms2f")) {
          fs = read_feature_cache(entry.path);
        } else {
          Waveform wave = load_wav(entry.path);
          if (wave.sample_rate_hz != opts.expected_sample_rate_hz) {
            throw DataError("sample rate " + std::to_string(wave.sample_rate_hz) +
                            " Hz, expected " + std::to_string(opts.expected_sample_rate_hz));
          }
          fs = log_mel(wave, opts.log_mel);
        }
      } catch (const Error& err) {
        throw IoError("utterance " + entry.id + ": " + err.what());
      }
      if (fs.feature_dim != opts.feature_dim) {
        throw DataError("utterance " + entry.id + ": feature dim " +
                        std::to_string(fs.feature_dim) + ", expected " +
                        std::to_string(opts.feature_dim));
      }
      features.push_back(std::move(fs));
    }

    if (opts.use_translation && !entry.has_translation) {
      throw DataError("utterance " + entry.id + ": manifest has no translation column");
    }
    const std::string& target_text = opts.use_translation ? entry.translation : entry.transcript;
    batch.targets.push_back(opts.encode_target(target_text));
  }

  if (!opts.token_source) {
    switch (opts.cmvn) {
      case BatchLoadOptions::Cmvn::kUtterance:
        for (FeatureSequence& fs : features) fs = cmvn_utterance(std::move(fs));
        break;
      case BatchLoadOptions::Cmvn::kGlobal:
        features = cmvn_global(std::move(features));
        break;
      case BatchLoadOptions::Cmvn::kNone:
        break;
    }
    if (opts.training) {
      opts.spec_augment.validate(opts.feature_dim);
      for (size_t i = 0; i < features.size(); ++i) {
        Rng rng(hash_seed({opts.augment_seed, static_cast<uint64_t>(i)}));
        features[i] = spec_augment(std::move(features[i]), opts.spec_augment, rng);
      }
    }

    int t_max = 0;
    for (const FeatureSequence& fs : features) t_max = std::max(t_max, fs.num_frames);
    batch.features = TensorT<float>::zeros(
        {static_cast<int>(features.size()), t_max, opts.feature_dim});
    float* out = batch.features.data();
    for (size_t b = 0; b < features.size(); ++b) {
      const FeatureSequence& fs = features[b];
      batch.feature_lengths.push_back(fs.num_frames);
      batch.total_frames += fs.num_frames;
      std::copy(fs.values.begin(), fs.values.end(),
                out + (static_cast<size_t>(b) * t_max) * static_cast<size_t>(opts.feature_dim));
    }
  }

  size_t u_max = 0;
  for (const std::vector<int>& row : batch.targets) u_max = std::max(u_max, row.size());
  for (std::vector<int>& row : batch.targets) {
    batch.target_lengths.push_back(static_cast<int>(row.size()));
    row.resize(u_max, kPadId);
  }
  return batch;
}

}  // namespace minis2t
