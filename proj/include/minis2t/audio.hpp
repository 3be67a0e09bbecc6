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
// Audio feature frontend: WAV in, log-Mel filterbank features out, plus
// cepstral mean/variance normalization and SpecAugment-style masking.

#pragma once

#include <string>
#include <vector>

#include "minis2t/common.hpp"

namespace minis2t {

struct Waveform {
  std::vector<float> samples;  // [-1, 1), scaled from PCM16
  int sample_rate_hz = 0;
};

// Reads a mono 16-bit PCM RIFF/WAVE file. Unsupported fields raise DataError
// naming the offending header field.
Waveform load_wav(const std::string& path);

// Writes mono PCM16; used for fixtures and the prepare path's tests.
void write_wav(const std::string& path, const Waveform& wave);

// Peeks the header only and returns the sample count without reading the
// payload. Used when planning batches over plain WAV lists.
int64_t wav_num_samples(const std::string& path);

struct FeatureSequence {
  int num_frames = 0;
  int feature_dim = 0;
  std::vector<float> values;  // row-major [num_frames, feature_dim]

  float& at(int t, int f) { return values[static_cast<size_t>(t) * feature_dim + f]; }
  float at(int t, int f) const { return values[static_cast<size_t>(t) * feature_dim + f]; }
};

struct LogMelOptions {
  int num_mel_bins = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  double low_freq_hz = 20.0;   // upper edge is always Nyquist
  double log_floor = 1e-10;    // energies are clamped here before log
};

// Natural-log Mel filterbank energies. Frame count is
// 1 + floor((num_samples - frame_length) / frame_shift); input shorter than
// one frame raises DataError.
FeatureSequence log_mel(const Waveform& wave, const LogMelOptions& opts = {});

// One-sided power spectrum |X_k|^2, k = 0..n_fft/2, of a (windowed) frame
// zero-padded to n_fft. n_fft must be a power of two.
std::vector<double> power_spectrum(const std::vector<double>& frame, int n_fft);

// Triangular Mel filterbank on HTK's scale (2595 * log10(1 + f/700)).
// weights[m] covers FFT bins 0..n_fft/2; centers_hz[m] is filter m's peak.
struct MelFilterbank {
  std::vector<std::vector<double>> weights;
  std::vector<double> centers_hz;
};
MelFilterbank mel_filterbank(int num_bins, int n_fft, int sample_rate_hz, double low_freq_hz,
                             double high_freq_hz);

// Per-dimension mean/variance normalization over the frames of one
// sequence: (x - mean) / sqrt(var + eps).
FeatureSequence cmvn_utterance(FeatureSequence features, double eps = 1e-8);

// Same, but mean/var are pooled over every frame of every sequence in the
// batch before normalizing each.
std::vector<FeatureSequence> cmvn_global(std::vector<FeatureSequence> batch, double eps = 1e-8);

struct SpecAugmentPolicy {
  int num_freq_masks = 2;
  int max_freq_width = 10;   // mask width drawn uniformly from {0..max}
  int num_time_masks = 2;
  int max_time_width = 20;
  enum class FillValue { kZero, kUtteranceMean };
  FillValue fill = FillValue::kZero;

  void validate(int feature_dim) const;
};

// Draw order, frozen: for each frequency mask, width then start; then for
// each time mask, width then start. Starts are uniform over the valid range
// and drawn even for width 0 so the rng stream length is data-independent.
FeatureSequence spec_augment(FeatureSequence features, const SpecAugmentPolicy& policy, Rng& rng);

// Feature cache file: magic "MS2F", u32 frames, u32 dim, f32 row-major
// payload, little-endian throughout.
void write_feature_cache(const std::string& path, const FeatureSequence& features);
FeatureSequence read_feature_cache(const std::string& path);

}  // namespace minis2t
