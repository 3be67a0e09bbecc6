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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "minis2t/audio.hpp"
#include "minis2t/common.hpp"
#include "minis2t/data.hpp"
#include "minis2t/tokenizer.hpp"
#include "test_util.hpp"

using namespace minis2t;
using minis2t::testutil::TempDir;

namespace {

ManifestEntry entry(const std::string& id, const std::string& path, int64_t frames,
                    const std::string& transcript, const std::string& translation = "") {
  ManifestEntry e;
  e.id = id;
  e.path = path;
  e.n_frames = frames;
  e.transcript = transcript;
  if (!translation.empty()) {
    e.translation = translation;
    e.has_translation = true;
  }
  return e;
}

FeatureSequence make_features(int frames, int dim, uint64_t seed) {
  FeatureSequence fs;
  fs.num_frames = frames;
  fs.feature_dim = dim;
  fs.values.resize(static_cast<size_t>(frames) * dim);
  Rng rng(seed);
  for (float& v : fs.values) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  return fs;
}

Waveform sine_wave(int num_samples, int rate_hz, double freq_hz) {
  Waveform w;
  w.sample_rate_hz = rate_hz;
  w.samples.resize(static_cast<size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) {
    w.samples[static_cast<size_t>(i)] =
        static_cast<float>(0.4 * std::sin(2.0 * 3.14159265358979 * freq_hz * i / rate_hz));
  }
  return w;
}

std::vector<int> encode_chars(const std::string& text) {
  std::vector<int> ids;
  for (char c : text) {
    if (c >= 'a' && c <= 'z') ids.push_back(5 + (c - 'a'));
  }
  return ids;
}

// Sum of per-batch frame totals must respect the budget except for
// single-utterance batches.
void check_budget(const BatchPlan& plan, const std::vector<ManifestEntry>& entries,
                  int64_t budget) {
  for (const auto& batch : plan.batches) {
    int64_t frames = 0;
    for (size_t idx : batch) frames += entries[idx].n_frames;
    if (batch.size() > 1) CHECK(frames <= budget);
  }
}

BatchLoadOptions eval_options(int dim) {
  BatchLoadOptions opts;
  opts.cmvn = BatchLoadOptions::Cmvn::kNone;
  opts.feature_dim = dim;
  opts.encode_target = encode_chars;
  return opts;
}

}  // namespace

TEST_CASE("manifest round trip preserves rows in order") {
  TempDir dir("data");
  std::vector<ManifestEntry> rows = {
      entry("utt-1", "a.wav", 120, "first words"),
      entry("utt-2", "b.ms2f", 64, "second line with   spaces"),
      entry("utt-3", "c.wav", 9, "third"),
  };
  write_manifest(dir.file("plain.tsv"), rows);
  std::vector<ManifestEntry> back = read_manifest(dir.file("plain.tsv"));
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].path == rows[i].path);
    CHECK(back[i].n_frames == rows[i].n_frames);
    CHECK(back[i].transcript == rows[i].transcript);
    CHECK_FALSE(back[i].has_translation);
  }

  std::vector<ManifestEntry> st_rows = {
      entry("utt-1", "a.wav", 120, "guten morgen", "good morning"),
      entry("utt-2", "-", 3, "drei worte hier", "three words here"),
  };
  write_manifest(dir.file("st.tsv"), st_rows);
  std::vector<ManifestEntry> st_back = read_manifest(dir.file("st.tsv"));
  REQUIRE(st_back.size() == 2);
  CHECK(st_back[0].translation == "good morning");
  CHECK(st_back[1].has_translation);
  CHECK(st_back[1].path == "-");
}

TEST_CASE("manifest parse errors carry line numbers") {
  TempDir dir("data");
  auto write_text = [&dir](const std::string& name, const std::string& text) {
    std::ofstream out(dir.file(name));
    out << text;
    return dir.file(name);
  };

  CHECK_THROWS_WITH_AS(read_manifest(dir.file("missing.tsv")),
                       doctest::Contains("cannot open"), IoError);
  CHECK_THROWS_WITH_AS(read_manifest(write_text("empty.tsv", "")),
                       doctest::Contains("missing header"), DataError);
  CHECK_THROWS_WITH_AS(read_manifest(write_text("badhdr.tsv", "id\tpath\n")),
                       doctest::Contains("unexpected header"), DataError);

  CHECK(read_manifest(write_text("headeronly.tsv", "id\tpath\tn_frames\ttranscript\n")).empty());

  std::string good = "id\tpath\tn_frames\ttranscript\n";
  CHECK_THROWS_WITH_AS(
      read_manifest(write_text("frames.tsv", good + "a\tx.wav\t10\thello\nb\ty.wav\tabc\thi\n")),
      doctest::Contains("line 3"), DataError);
  CHECK_THROWS_WITH_AS(
      read_manifest(write_text("zero.tsv", good + "a\tx.wav\t0\thello\n")),
      doctest::Contains("positive"), DataError);
  CHECK_THROWS_WITH_AS(
      read_manifest(write_text("dup.tsv", good + "a\tx.wav\t10\thello\na\ty.wav\t12\thi\n")),
      doctest::Contains("duplicate id"), DataError);
  CHECK_THROWS_WITH_AS(
      read_manifest(write_text("fields.tsv", good + "a\tx.wav\t10\n")),
      doctest::Contains("line 2"), DataError);
}

TEST_CASE("length filter drops by frames and by target tokens") {
  std::vector<ManifestEntry> rows = {
      entry("a", "a.wav", 5, "one two three"),
      entry("b", "b.wav", 50, "one two three four"),
      entry("c", "c.wav", 500, "one"),
  };
  auto word_count = [](const ManifestEntry& e) {
    return split_whitespace(e.transcript).size();
  };

  LengthFilterResult all = length_filter(rows, word_count, 0,
                                         std::numeric_limits<int64_t>::max(),
                                         std::numeric_limits<int64_t>::max());
  CHECK(all.kept.size() == 3);
  CHECK(all.dropped_short_frames + all.dropped_long_frames + all.dropped_long_target == 0);

  LengthFilterResult framed = length_filter(rows, word_count, 10, 100,
                                            std::numeric_limits<int64_t>::max());
  REQUIRE(framed.kept.size() == 1);
  CHECK(framed.kept[0].id == "b");
  CHECK(framed.dropped_short_frames == 1);
  CHECK(framed.dropped_long_frames == 1);

  // "b" tokenizes to exactly 4 words: kept at the bound, dropped above it.
  LengthFilterResult at_bound = length_filter({rows[1]}, word_count, 0, 1000, 4);
  CHECK(at_bound.kept.size() == 1);
  LengthFilterResult above_bound = length_filter({rows[1]}, word_count, 0, 1000, 3);
  CHECK(above_bound.kept.empty());
  CHECK(above_bound.dropped_long_target == 1);

  // Without a token counter only the frame bounds apply.
  LengthFilterResult no_tok = length_filter(rows, nullptr, 0, 1000, 0);
  CHECK(no_tok.kept.size() == 3);
}

TEST_CASE("batch plan packs greedily up to the frame budget") {
  std::vector<ManifestEntry> rows = {
      entry("a", "a.wav", 50, "x"),
      entry("b", "b.wav", 50, "x"),
      entry("c", "c.wav", 50, "x"),
  };
  BatchPlan plan = make_batches(rows, 100, 1, false);
  REQUIRE(plan.batches.size() == 2);
  std::multiset<size_t> sizes{plan.batches[0].size(), plan.batches[1].size()};
  CHECK(sizes == std::multiset<size_t>{1, 2});
  check_budget(plan, rows, 100);
  CHECK(plan.num_over_budget == 0);

  CHECK(make_batches(rows, 1000, 1, false).batches.size() == 1);

  std::vector<ManifestEntry> big = {
      entry("big", "big.wav", 300, "x"),
      entry("small", "small.wav", 10, "x"),
  };
  BatchPlan over = make_batches(big, 100, 1, false);
  CHECK(over.num_over_budget == 1);
  REQUIRE(over.batches.size() == 2);
  for (const auto& b : over.batches) CHECK(b.size() == 1);

  CHECK(make_batches({}, 100, 1, false).batches.empty());
  CHECK_THROWS_AS(make_batches(rows, 0, 1, false), ContractError);
}

TEST_CASE("batch plan is a deterministic seeded partition") {
  std::vector<ManifestEntry> rows;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    rows.push_back(entry("utt-" + std::to_string(i), "x.wav",
                         1 + static_cast<int64_t>(rng.uniform() * 80), "text"));
  }
  for (bool bucketing : {false, true}) {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      BatchPlan plan = make_batches(rows, 200, seed, bucketing, 32);
      BatchPlan again = make_batches(rows, 200, seed, bucketing, 32);
      CHECK(plan.batches == again.batches);
      check_budget(plan, rows, 200);

      std::vector<size_t> flat;
      for (const auto& b : plan.batches) flat.insert(flat.end(), b.begin(), b.end());
      std::sort(flat.begin(), flat.end());
      std::vector<size_t> want(rows.size());
      std::iota(want.begin(), want.end(), size_t{0});
      CHECK(flat == want);
    }
  }
  CHECK(make_batches(rows, 200, 1, false).batches != make_batches(rows, 200, 2, false).batches);

  // A chunk spanning the whole corpus sorts it globally.
  BatchPlan bucketed = make_batches(rows, std::numeric_limits<int64_t>::max(), 5, true, 4096);
  REQUIRE(bucketed.batches.size() == 1);
  const std::vector<size_t>& only = bucketed.batches[0];
  for (size_t i = 1; i < only.size(); ++i) {
    CHECK(rows[only[i - 1]].n_frames <= rows[only[i]].n_frames);
  }

  // Chunks of one entry degenerate to the plain shuffle.
  CHECK(make_batches(rows, 200, 9, true, 1).batches ==
        make_batches(rows, 200, 9, false).batches);
}

TEST_CASE("cache files and WAV input produce the same features") {
  TempDir dir("data");
  write_wav(dir.file("a.wav"), sine_wave(4000, 16000, 440.0));

  LogMelOptions lm;
  lm.num_mel_bins = 8;
  // Cache the features of the on-disk file so both rows start from the same
  // quantized samples.
  FeatureSequence fs = log_mel(load_wav(dir.file("a.wav")), lm);
  write_feature_cache(dir.file("a.ms2f"), fs);

  std::vector<ManifestEntry> rows = {
      entry("from-wav", dir.file("a.wav"), fs.num_frames, "abc"),
      entry("from-cache", dir.file("a.ms2f"), fs.num_frames, "abc"),
  };
  BatchLoadOptions opts = eval_options(8);
  opts.log_mel = lm;
  Batch batch = load_batch(rows, {0, 1}, opts);
  REQUIRE(batch.feature_lengths == std::vector<int>{fs.num_frames, fs.num_frames});
  CHECK(batch.total_frames == 2 * fs.num_frames);
  for (int t = 0; t < fs.num_frames; ++t) {
    for (int f = 0; f < 8; ++f) {
      CHECK(batch.features.at({0, t, f}) ==
            doctest::Approx(batch.features.at({1, t, f})).epsilon(1e-6));
    }
  }
}

TEST_CASE("load_batch zero-pads features and pad-ids targets") {
  TempDir dir("data");
  FeatureSequence short_fs = make_features(5, 4, 1);
  FeatureSequence long_fs = make_features(9, 4, 2);
  write_feature_cache(dir.file("short.ms2f"), short_fs);
  write_feature_cache(dir.file("long.ms2f"), long_fs);

  std::vector<ManifestEntry> rows = {
      entry("short", dir.file("short.ms2f"), 5, "abc"),
      entry("long", dir.file("long.ms2f"), 9, "a"),
  };
  Batch batch = load_batch(rows, {0, 1}, eval_options(4));
  REQUIRE(batch.features.shape() == Shape{2, 9, 4});
  CHECK(batch.feature_lengths == std::vector<int>{5, 9});
  for (int t = 0; t < 5; ++t) {
    for (int f = 0; f < 4; ++f) CHECK(batch.features.at({0, t, f}) == short_fs.at(t, f));
  }
  for (int t = 5; t < 9; ++t) {
    for (int f = 0; f < 4; ++f) CHECK(batch.features.at({0, t, f}) == 0.0f);
  }
  REQUIRE(batch.targets.size() == 2);
  CHECK(batch.targets[0] == std::vector<int>{5, 6, 7});
  CHECK(batch.targets[1] == std::vector<int>{5, kPadId, kPadId});
  CHECK(batch.target_lengths == std::vector<int>{3, 1});
}

TEST_CASE("cmvn modes normalize over the valid frames") {
  TempDir dir("data");
  write_feature_cache(dir.file("a.ms2f"), make_features(40, 6, 3));
  write_feature_cache(dir.file("b.ms2f"), make_features(25, 6, 4));
  std::vector<ManifestEntry> rows = {
      entry("a", dir.file("a.ms2f"), 40, "ab"),
      entry("b", dir.file("b.ms2f"), 25, "cd"),
  };

  BatchLoadOptions opts = eval_options(6);
  opts.cmvn = BatchLoadOptions::Cmvn::kUtterance;
  Batch per_utt = load_batch(rows, {0, 1}, opts);
  for (int b = 0; b < 2; ++b) {
    int frames = per_utt.feature_lengths[static_cast<size_t>(b)];
    for (int f = 0; f < 6; ++f) {
      double mean = 0.0;
      double sq = 0.0;
      for (int t = 0; t < frames; ++t) {
        double v = per_utt.features.at({b, t, f});
        mean += v;
        sq += v * v;
      }
      mean /= frames;
      double var = sq / frames - mean * mean;
      CHECK(std::abs(mean) < 1e-4);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  opts.cmvn = BatchLoadOptions::Cmvn::kGlobal;
  Batch pooled = load_batch(rows, {0, 1}, opts);
  for (int f = 0; f < 6; ++f) {
    double mean = 0.0;
    int count = 0;
    for (int b = 0; b < 2; ++b) {
      for (int t = 0; t < pooled.feature_lengths[static_cast<size_t>(b)]; ++t) {
        mean += pooled.features.at({b, t, f});
        ++count;
      }
    }
    CHECK(std::abs(mean / count) < 1e-4);
  }
}

TEST_CASE("evaluation loads are reproducible and augmentation is seed-keyed") {
  TempDir dir("data");
  write_feature_cache(dir.file("a.ms2f"), make_features(30, 8, 5));
  std::vector<ManifestEntry> rows = {entry("a", dir.file("a.ms2f"), 30, "abc")};

  BatchLoadOptions opts = eval_options(8);
  Batch once = load_batch(rows, {0}, opts);
  Batch twice = load_batch(rows, {0}, opts);
  CHECK(once.features.values() == twice.features.values());

  opts.training = true;
  opts.spec_augment.num_freq_masks = 2;
  opts.spec_augment.max_freq_width = 3;
  opts.spec_augment.num_time_masks = 2;
  opts.spec_augment.max_time_width = 8;
  opts.augment_seed = 42;
  Batch aug_a = load_batch(rows, {0}, opts);
  Batch aug_b = load_batch(rows, {0}, opts);
  CHECK(aug_a.features.values() == aug_b.features.values());

  opts.augment_seed = 43;
  Batch aug_c = load_batch(rows, {0}, opts);
  CHECK(aug_a.features.values() != aug_c.features.values());

  // Eval mode ignores the augmentation settings entirely.
  opts.training = false;
  CHECK(load_batch(rows, {0}, opts).features.values() == once.features.values());
}

TEST_CASE("load_batch failures name the utterance") {
  TempDir dir("data");
  write_feature_cache(dir.file("six.ms2f"), make_features(10, 6, 6));
  write_feature_cache(dir.file("eight.ms2f"), make_features(10, 8, 6));
  write_wav(dir.file("slow.wav"), sine_wave(2000, 8000, 200.0));

  std::vector<ManifestEntry> rows = {
      entry("ghost", dir.file("nope.ms2f"), 10, "a"),
      entry("narrow", dir.file("six.ms2f"), 10, "a"),
      entry("slow", dir.file("slow.wav"), 10, "a"),
      entry("plain", dir.file("eight.ms2f"), 10, "a"),
  };
  BatchLoadOptions opts = eval_options(8);
  CHECK_THROWS_WITH_AS(load_batch(rows, {0}, opts), doctest::Contains("ghost"), IoError);
  CHECK_THROWS_WITH_AS(load_batch(rows, {1}, opts), doctest::Contains("narrow"), DataError);
  CHECK_THROWS_WITH_AS(load_batch(rows, {2}, opts), doctest::Contains("sample rate"), IoError);

  opts.use_translation = true;
  CHECK_THROWS_WITH_AS(load_batch(rows, {3}, opts), doctest::Contains("translation"), DataError);
  opts.use_translation = false;

  CHECK_THROWS_AS(load_batch(rows, {}, opts), ContractError);
  opts.encode_target = nullptr;
  CHECK_THROWS_AS(load_batch(rows, {3}, opts), ContractError);
}

TEST_CASE("text-only batches carry source ids instead of features") {
  std::vector<ManifestEntry> rows = {
      entry("pair-1", "-", 3, "abc de", "vw"),
      entry("pair-2", "-", 2, "fg", "xyz"),
  };
  BatchLoadOptions opts;
  opts.token_source = true;
  opts.use_translation = true;
  opts.encode_source = encode_chars;
  opts.encode_target = encode_chars;
  Batch batch = load_batch(rows, {0, 1}, opts);
  CHECK_FALSE(batch.features.defined());
  CHECK(batch.feature_lengths.empty());
  CHECK(batch.total_frames == 0);
  REQUIRE(batch.sources.size() == 2);
  CHECK(batch.sources[0] == std::vector<int>{5, 6, 7, 8, 9});
  CHECK(batch.sources[1] == std::vector<int>{10, 11});
  CHECK(batch.targets[0] == std::vector<int>{26, 27, kPadId});
  CHECK(batch.targets[1] == std::vector<int>{28, 29, 30});

  opts.encode_source = nullptr;
  CHECK_THROWS_AS(load_batch(rows, {0}, opts), ContractError);
}

TEST_CASE("planning a large manifest never touches the files") {
  TempDir dir("data");
  write_feature_cache(dir.file("real.ms2f"), make_features(12, 4, 7));

  std::vector<ManifestEntry> rows;
  for (int i = 0; i < 9999; ++i) {
    rows.push_back(entry("fake-" + std::to_string(i), dir.file("missing-" + std::to_string(i) + ".ms2f"),
                         1 + i % 90, "text"));
  }
  rows.push_back(entry("real", dir.file("real.ms2f"), 12, "abc"));
  write_manifest(dir.file("big.tsv"), rows);

  std::vector<ManifestEntry> loaded = read_manifest(dir.file("big.tsv"));
  REQUIRE(loaded.size() == 10000);
  BatchPlan plan = make_batches(loaded, 64, 3, true);
  size_t planned = 0;
  for (const auto& b : plan.batches) planned += b.size();
  CHECK(planned == 10000);

  Batch real = load_batch(loaded, {9999}, eval_options(4));
  CHECK(real.ids == std::vector<std::string>{"real"});
  CHECK(real.feature_lengths == std::vector<int>{12});
}
