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

#include <cmath>
#include <cstring>
#include <fstream>

#include "minis2t/audio.hpp"
#include "test_util.hpp"

using namespace minis2t;

namespace {

Waveform sine_wave(double freq_hz, double seconds, int rate, double amplitude = 0.5) {
  Waveform w;
  w.sample_rate_hz = rate;
  auto n = static_cast<int64_t>(seconds * rate);
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    w.samples[static_cast<size_t>(i)] =
        static_cast<float>(amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate));
  }
  return w;
}

Waveform silence(double seconds, int rate) {
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.assign(static_cast<size_t>(seconds * rate), 0.0f);
  return w;
}

}  // namespace

TEST_CASE("wav round trip preserves samples and rate") {
  testutil::TempDir dir("wav");
  Waveform w = sine_wave(440.0, 0.05, 16000);
  write_wav(dir.file("t.wav"), w);
  Waveform back = load_wav(dir.file("t.wav"));
  CHECK(back.sample_rate_hz == 16000);
  REQUIRE(back.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(std::fabs(back.samples[i] - w.samples[i]) < 1e-3f);
  }
  CHECK(wav_num_samples(dir.file("t.wav")) == static_cast<int64_t>(w.samples.size()));
}

TEST_CASE("wav loader names the offending header field") {
  testutil::TempDir dir("wavbad");

  SUBCASE("not riff") {
    write_text_file(dir.file("x.wav"), "JUNKJUNKJUNKJUNK");
    try {
      load_wav(dir.file("x.wav"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("RIFF") != std::string::npos);
    }
  }

  SUBCASE("stereo rejected naming channels") {
    // hand-built header with channels=2
    std::ofstream out(dir.file("st.wav"), std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);      // pcm
    u16(2);      // stereo!
    u32(16000);
    u32(64000);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(0);
    out.close();
    try {
      load_wav(dir.file("st.wav"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("channels=2") != std::string::npos);
    }
  }

  SUBCASE("missing file is IoError") {
    CHECK_THROWS_AS(load_wav(dir.file("nope.wav")), IoError);
  }
}

TEST_CASE("log_mel: one second at 16 kHz gives 98 frames of 80 dims") {
  // frames = 1 + floor((16000 - 400) / 160) = 98
  Waveform w = sine_wave(440.0, 1.0, 16000);
  FeatureSequence f = log_mel(w);
  CHECK(f.num_frames == 98);
  CHECK(f.feature_dim == 80);
}

TEST_CASE("log_mel: digital silence hits the log floor everywhere") {
  Waveform w = silence(0.5, 16000);
  FeatureSequence f = log_mel(w);
  const float expect = std::log(1e-10f);
  for (float v : f.values) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("log_mel: too-short input raises DataError") {
  Waveform w = silence(0.01, 16000);  // 160 samples < 400
  CHECK_THROWS_AS(log_mel(w), DataError);
}

TEST_CASE("log_mel: 1 kHz tone concentrates energy at the matching mel filter") {
  Waveform w = sine_wave(1000.0, 0.5, 16000);
  FeatureSequence f = log_mel(w);
  MelFilterbank fb = mel_filterbank(80, 512, 16000, 20.0, 8000.0);
  int nearest = 0;
  for (int m = 1; m < 80; ++m) {
    if (std::fabs(fb.centers_hz[static_cast<size_t>(m)] - 1000.0) <
        std::fabs(fb.centers_hz[static_cast<size_t>(nearest)] - 1000.0)) {
      nearest = m;
    }
  }
  // average over interior frames, then locate the peak dimension
  std::vector<double> avg(80, 0.0);
  for (int t = 2; t < f.num_frames - 2; ++t) {
    for (int m = 0; m < 80; ++m) avg[static_cast<size_t>(m)] += f.at(t, m);
  }
  int peak = 0;
  for (int m = 1; m < 80; ++m) {
    if (avg[static_cast<size_t>(m)] > avg[static_cast<size_t>(peak)]) peak = m;
  }
  CHECK(std::abs(peak - nearest) <= 1);
}

TEST_CASE("power spectrum satisfies parseval within 1e-3 relative") {
  Rng rng(21);
  int frame_len = 400, n_fft = 512;
  std::vector<double> frame(static_cast<size_t>(frame_len));
  for (auto& v : frame) v = rng.normal();
  std::vector<double> p = power_spectrum(frame, n_fft);
  double time_energy = 0.0;
  for (double v : frame) time_energy += v * v;
  double freq_energy = p[0] + p[static_cast<size_t>(n_fft / 2)];
  for (int k = 1; k < n_fft / 2; ++k) freq_energy += 2.0 * p[static_cast<size_t>(k)];
  freq_energy /= n_fft;
  CHECK(std::fabs(freq_energy - time_energy) / time_energy < 1e-3);
}

TEST_CASE("cmvn_utterance: dimension {1,3} maps to {-1,+1}") {
  FeatureSequence f;
  f.num_frames = 2;
  f.feature_dim = 1;
  f.values = {1.0f, 3.0f};
  FeatureSequence out = cmvn_utterance(f);
  CHECK(out.values[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(out.values[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("cmvn_utterance: post-conditions, idempotence, constant dims") {
  Rng rng(5);
  FeatureSequence f;
  f.num_frames = 50;
  f.feature_dim = 8;
  f.values.resize(400);
  for (auto& v : f.values) v = static_cast<float>(rng.normal(3.0, 2.0));
  for (int t = 0; t < 50; ++t) f.at(t, 7) = 4.25f;  // constant dimension

  FeatureSequence out = cmvn_utterance(f);
  for (int c = 0; c < 8; ++c) {
    double mean = 0, var = 0;
    for (int t = 0; t < 50; ++t) mean += out.at(t, c);
    mean /= 50;
    for (int t = 0; t < 50; ++t) var += (out.at(t, c) - mean) * (out.at(t, c) - mean);
    var /= 50;
    CHECK(std::fabs(mean) < 1e-5);
    if (c != 7) CHECK(std::fabs(var - 1.0) < 1e-4);
  }
  // constant dimension maps to zeros, not NaN
  for (int t = 0; t < 50; ++t) CHECK(out.at(t, 7) == doctest::Approx(0.0));

  FeatureSequence twice = cmvn_utterance(out);
  for (size_t i = 0; i < twice.values.size(); ++i) {
    CHECK(std::fabs(twice.values[i] - out.values[i]) < 1e-5f);
  }
}

TEST_CASE("cmvn_global pools statistics over the whole batch") {
  FeatureSequence a, b;
  a.num_frames = b.num_frames = 1;
  a.feature_dim = b.feature_dim = 1;
  a.values = {0.0f};
  b.values = {2.0f};
  auto out = cmvn_global({a, b});
  // pooled mean 1, var 1
  CHECK(out[0].values[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(out[1].values[0] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("spec_augment: zero policy is the identity") {
  Rng data_rng(1);
  FeatureSequence f;
  f.num_frames = 20;
  f.feature_dim = 10;
  f.values.resize(200);
  for (auto& v : f.values) v = static_cast<float>(data_rng.normal());

  SpecAugmentPolicy none;
  none.num_freq_masks = 0;
  none.num_time_masks = 0;
  none.max_freq_width = 0;
  none.max_time_width = 0;
  Rng rng(7);
  FeatureSequence out = spec_augment(f, none, rng);
  CHECK(std::memcmp(out.values.data(), f.values.data(), f.values.size() * sizeof(float)) == 0);
}

TEST_CASE("spec_augment: masked band matches a replayed rng; other cells bit-identical") {
  Rng data_rng(2);
  FeatureSequence f;
  f.num_frames = 30;
  f.feature_dim = 12;
  f.values.resize(360);
  for (auto& v : f.values) v = static_cast<float>(data_rng.normal(5.0, 1.0));

  SpecAugmentPolicy policy;
  policy.num_freq_masks = 1;
  policy.max_freq_width = 4;
  policy.num_time_masks = 1;
  policy.max_time_width = 6;

  uint64_t seed = 31337;
  Rng rng(seed);
  FeatureSequence out = spec_augment(f, policy, rng);

  // replay the identical stream to predict the masked bands
  Rng replay(seed);
  int fw = replay.uniform_int(0, 4);
  int fstart = replay.uniform_int(0, 12 - fw);
  int tw = replay.uniform_int(0, 6);
  int tstart = replay.uniform_int(0, 30 - tw);

  for (int t = 0; t < 30; ++t) {
    for (int c = 0; c < 12; ++c) {
      bool in_freq = c >= fstart && c < fstart + fw;
      bool in_time = t >= tstart && t < tstart + tw;
      if (in_freq || in_time) {
        CHECK(out.at(t, c) == 0.0f);
      } else {
        CHECK(std::memcmp(&out.values[static_cast<size_t>(t) * 12 + c],
                          &f.values[static_cast<size_t>(t) * 12 + c], sizeof(float)) == 0);
      }
    }
  }
}

TEST_CASE("spec_augment: width bound must stay below feature_dim") {
  SpecAugmentPolicy policy;
  policy.max_freq_width = 10;
  CHECK_THROWS_AS(policy.validate(10), ConfigError);
  CHECK_NOTHROW(policy.validate(11));
}

TEST_CASE("feature cache round trip is bitwise") {
  testutil::TempDir dir("cache");
  Rng rng(3);
  FeatureSequence f;
  f.num_frames = 7;
  f.feature_dim = 5;
  f.values.resize(35);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  write_feature_cache(dir.file("x.ms2f"), f);
  FeatureSequence back = read_feature_cache(dir.file("x.ms2f"));
  CHECK(back.num_frames == 7);
  CHECK(back.feature_dim == 5);
  CHECK(std::memcmp(back.values.data(), f.values.data(), 35 * sizeof(float)) == 0);

  write_text_file(dir.file("bad.ms2f"), "XXXXxxxx");
  CHECK_THROWS_AS(read_feature_cache(dir.file("bad.ms2f")), DataError);
}
