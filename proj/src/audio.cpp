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

#include "minis2t/audio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "wav/cache i/o assumes a little-endian host");

namespace minis2t {

namespace {

template <class T>
T read_le(std::istream& in, const std::string& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated file while reading " + std::string(what) + ": " + path);
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

struct WavInfo {
  int sample_rate = 0;
  int64_t num_samples = 0;
  std::streamoff data_offset = 0;
};

// Parses the RIFF structure up to (and including) the data chunk header.
WavInfo parse_wav_header(std::ifstream& in, const std::string& path) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw DataError("not a RIFF file (bad chunk id): " + path);
  }
  read_le<uint32_t>(in, path, "RIFF size");
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw DataError("not a WAVE file (bad format tag): " + path);
  }

  WavInfo info;
  bool have_fmt = false;
  while (true) {
    in.read(tag, 4);
    if (!in) {
      throw DataError(std::string(have_fmt ? "missing data chunk" : "missing fmt chunk") + ": " +
                      path);
    }
    uint32_t chunk_size = read_le<uint32_t>(in, path, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t audio_format = read_le<uint16_t>(in, path, "audio_format");
      uint16_t channels = read_le<uint16_t>(in, path, "channels");
      uint32_t sample_rate = read_le<uint32_t>(in, path, "sample_rate");
      read_le<uint32_t>(in, path, "byte_rate");
      read_le<uint16_t>(in, path, "block_align");
      uint16_t bits = read_le<uint16_t>(in, path, "bits_per_sample");
      if (audio_format != 1) {
        throw DataError("unsupported WAV audio_format=" + std::to_string(audio_format) +
                        " (want 1 = PCM): " + path);
      }
      if (channels != 1) {
        throw DataError("unsupported WAV channels=" + std::to_string(channels) +
                        " (want mono): " + path);
      }
      if (bits != 16) {
        throw DataError("unsupported WAV bits_per_sample=" + std::to_string(bits) +
                        " (want 16): " + path);
      }
      info.sample_rate = static_cast<int>(sample_rate);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("data chunk precedes fmt chunk: " + path);
      info.num_samples = chunk_size / 2;
      info.data_offset = in.tellg();
      return info;
    } else {
      // skip unknown chunk, word-aligned
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
}

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  WavInfo info = parse_wav_header(in, path);
  Waveform wave;
  wave.sample_rate_hz = info.sample_rate;
  std::vector<int16_t> pcm(static_cast<size_t>(info.num_samples));
  in.read(reinterpret_cast<char*>(pcm.data()),
          static_cast<std::streamsize>(pcm.size() * sizeof(int16_t)));
  if (!in) throw DataError("truncated data chunk: " + path);
  wave.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    wave.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;
  }
  return wave;
}

int64_t wav_num_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  return parse_wav_header(in, path).num_samples;
}

void write_wav(const std::string& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open wav file for writing: " + path);
  uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, 1);  // PCM
  write_le<uint16_t>(out, 1);  // mono
  write_le<uint32_t>(out, static_cast<uint32_t>(wave.sample_rate_hz));
  write_le<uint32_t>(out, static_cast<uint32_t>(wave.sample_rate_hz * 2));
  write_le<uint16_t>(out, 2);
  write_le<uint16_t>(out, 16);
  out.write("data", 4);
  write_le<uint32_t>(out, data_bytes);
  for (float s : wave.samples) {
    double clamped = std::max(-1.0, std::min(1.0, static_cast<double>(s)));
    auto v = static_cast<int16_t>(std::lrint(clamped * 32767.0));
    write_le<int16_t>(out, v);
  }
  if (!out) throw IoError("wav write failed: " + path);
}

namespace {

// In-place iterative radix-2 FFT over interleaved complex data.
void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
  size_t n = re.size();
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        size_t a = i + k, b = i + k + len / 2;
        double tr = re[b] * cr - im[b] * ci;
        double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace

std::vector<double> power_spectrum(const std::vector<double>& frame, int n_fft) {
  if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0) {
    throw ContractError("power_spectrum: n_fft must be a power of two, got " +
                        std::to_string(n_fft));
  }
  if (static_cast<int>(frame.size()) > n_fft) {
    throw ContractError("power_spectrum: frame longer than n_fft");
  }
  std::vector<double> re(static_cast<size_t>(n_fft), 0.0);
  std::vector<double> im(static_cast<size_t>(n_fft), 0.0);
  std::copy(frame.begin(), frame.end(), re.begin());
  fft_inplace(re, im);
  std::vector<double> power(static_cast<size_t>(n_fft / 2 + 1));
  for (int k = 0; k <= n_fft / 2; ++k) {
    power[static_cast<size_t>(k)] = re[k] * re[k] + im[k] * im[k];
  }
  return power;
}

MelFilterbank mel_filterbank(int num_bins, int n_fft, int sample_rate_hz, double low_freq_hz,
                             double high_freq_hz) {
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };

  double mel_low = hz_to_mel(low_freq_hz);
  double mel_high = hz_to_mel(high_freq_hz);
  std::vector<double> edges_hz(static_cast<size_t>(num_bins) + 2);
  for (int m = 0; m < num_bins + 2; ++m) {
    double mel = mel_low + (mel_high - mel_low) * m / (num_bins + 1);
    edges_hz[static_cast<size_t>(m)] = mel_to_hz(mel);
  }

  MelFilterbank fb;
  fb.weights.assign(static_cast<size_t>(num_bins),
                    std::vector<double>(static_cast<size_t>(n_fft / 2 + 1), 0.0));
  fb.centers_hz.resize(static_cast<size_t>(num_bins));
  double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;
  for (int m = 0; m < num_bins; ++m) {
    double left = edges_hz[static_cast<size_t>(m)];
    double center = edges_hz[static_cast<size_t>(m) + 1];
    double right = edges_hz[static_cast<size_t>(m) + 2];
    fb.centers_hz[static_cast<size_t>(m)] = center;
    for (int k = 0; k <= n_fft / 2; ++k) {
      double f = k * bin_hz;
      double w = 0.0;
      if (f >= left && f <= center && center > left) {
        w = (f - left) / (center - left);
      } else if (f > center && f <= right && right > center) {
        w = (right - f) / (right - center);
      }
      fb.weights[static_cast<size_t>(m)][static_cast<size_t>(k)] = w;
    }
  }
  return fb;
}

FeatureSequence log_mel(const Waveform& wave, const LogMelOptions& opts) {
  if (wave.sample_rate_hz <= 0) throw DataError("log_mel: waveform has no sample rate");
  int frame_len = static_cast<int>(std::lround(opts.frame_length_ms * wave.sample_rate_hz / 1000.0));
  int frame_shift = static_cast<int>(std::lround(opts.frame_shift_ms * wave.sample_rate_hz / 1000.0));
  int64_t n = static_cast<int64_t>(wave.samples.size());
  if (n < frame_len) {
    throw DataError("log_mel: waveform of " + std::to_string(n) +
                    " samples is shorter than one frame (" + std::to_string(frame_len) + ")");
  }
  int num_frames = static_cast<int>(1 + (n - frame_len) / frame_shift);

  // pre-emphasis over the whole signal; first sample keeps the Kaldi-style
  // x[0] - coeff * x[0] convention
  std::vector<double> emphasized(static_cast<size_t>(n));
  emphasized[0] = wave.samples[0] - opts.preemphasis * wave.samples[0];
  for (int64_t i = 1; i < n; ++i) {
    emphasized[static_cast<size_t>(i)] =
        wave.samples[static_cast<size_t>(i)] - opts.preemphasis * wave.samples[static_cast<size_t>(i) - 1];
  }

  int n_fft = 1;
  while (n_fft < frame_len) n_fft <<= 1;

  std::vector<double> window(static_cast<size_t>(frame_len));
  for (int i = 0; i < frame_len; ++i) {
    window[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (frame_len - 1));
  }

  MelFilterbank fb = mel_filterbank(opts.num_mel_bins, n_fft, wave.sample_rate_hz,
                                    opts.low_freq_hz, wave.sample_rate_hz / 2.0);

  FeatureSequence feats;
  feats.num_frames = num_frames;
  feats.feature_dim = opts.num_mel_bins;
  feats.values.resize(static_cast<size_t>(num_frames) * opts.num_mel_bins);

  std::vector<double> frame(static_cast<size_t>(frame_len));
  for (int t = 0; t < num_frames; ++t) {
    int64_t off = static_cast<int64_t>(t) * frame_shift;
    for (int i = 0; i < frame_len; ++i) {
      frame[static_cast<size_t>(i)] = emphasized[static_cast<size_t>(off + i)] * window[static_cast<size_t>(i)];
    }
    std::vector<double> power = power_spectrum(frame, n_fft);
    for (int m = 0; m < opts.num_mel_bins; ++m) {
      const auto& w = fb.weights[static_cast<size_t>(m)];
      double energy = 0.0;
      for (size_t k = 0; k < power.size(); ++k) energy += w[k] * power[k];
      if (energy < opts.log_floor) energy = opts.log_floor;
      feats.at(t, m) = static_cast<float>(std::log(energy));
    }
  }
  return feats;
}

FeatureSequence cmvn_utterance(FeatureSequence features, double eps) {
  int t_max = features.num_frames, d = features.feature_dim;
  if (t_max == 0) return features;
  for (int f = 0; f < d; ++f) {
    double mean = 0.0;
    for (int t = 0; t < t_max; ++t) mean += features.at(t, f);
    mean /= t_max;
    double var = 0.0;
    for (int t = 0; t < t_max; ++t) {
      double dv = features.at(t, f) - mean;
      var += dv * dv;
    }
    var /= t_max;
    double denom = std::sqrt(var + eps);
    for (int t = 0; t < t_max; ++t) {
      features.at(t, f) = static_cast<float>((features.at(t, f) - mean) / denom);
    }
  }
  return features;
}

std::vector<FeatureSequence> cmvn_global(std::vector<FeatureSequence> batch, double eps) {
  if (batch.empty()) return batch;
  int d = batch[0].feature_dim;
  int64_t total = 0;
  for (const auto& f : batch) {
    if (f.feature_dim != d) throw ContractError("cmvn_global: feature dims differ across batch");
    total += f.num_frames;
  }
  if (total == 0) return batch;
  std::vector<double> mean(static_cast<size_t>(d), 0.0), var(static_cast<size_t>(d), 0.0);
  for (const auto& f : batch) {
    for (int t = 0; t < f.num_frames; ++t) {
      for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] += f.at(t, c);
    }
  }
  for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(total);
  for (const auto& f : batch) {
    for (int t = 0; t < f.num_frames; ++t) {
      for (int c = 0; c < d; ++c) {
        double dv = f.at(t, c) - mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += dv * dv;
      }
    }
  }
  for (int c = 0; c < d; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(total);
  for (auto& f : batch) {
    for (int t = 0; t < f.num_frames; ++t) {
      for (int c = 0; c < d; ++c) {
        f.at(t, c) = static_cast<float>((f.at(t, c) - mean[static_cast<size_t>(c)]) /
                                        std::sqrt(var[static_cast<size_t>(c)] + eps));
      }
    }
  }
  return batch;
}

void SpecAugmentPolicy::validate(int feature_dim) const {
  if (num_freq_masks < 0 || num_time_masks < 0 || max_freq_width < 0 || max_time_width < 0) {
    throw ConfigError("spec_augment: mask counts and widths must be non-negative");
  }
  if (max_freq_width >= feature_dim) {
    throw ConfigError("spec_augment: max_freq_width " + std::to_string(max_freq_width) +
                      " must be smaller than feature_dim " + std::to_string(feature_dim));
  }
}

FeatureSequence spec_augment(FeatureSequence features, const SpecAugmentPolicy& policy, Rng& rng) {
  policy.validate(features.feature_dim);
  float fill = 0.0f;
  if (policy.fill == SpecAugmentPolicy::FillValue::kUtteranceMean) {
    double mean = 0.0;
    for (float v : features.values) mean += v;
    if (!features.values.empty()) mean /= static_cast<double>(features.values.size());
    fill = static_cast<float>(mean);
  }
  int t_max = features.num_frames, d = features.feature_dim;
  for (int i = 0; i < policy.num_freq_masks; ++i) {
    int w = rng.uniform_int(0, policy.max_freq_width);
    int start = rng.uniform_int(0, d - w);
    for (int t = 0; t < t_max; ++t) {
      for (int f = start; f < start + w; ++f) features.at(t, f) = fill;
    }
  }
  int max_t_width = std::min(policy.max_time_width, t_max);
  for (int i = 0; i < policy.num_time_masks; ++i) {
    int w = rng.uniform_int(0, max_t_width);
    int start = rng.uniform_int(0, t_max - w);
    for (int t = start; t < start + w; ++t) {
      for (int f = 0; f < d; ++f) features.at(t, f) = fill;
    }
  }
  return features;
}

void write_feature_cache(const std::string& path, const FeatureSequence& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open feature cache for writing: " + path);
  out.write("MS2F", 4);
  write_le<uint32_t>(out, static_cast<uint32_t>(features.num_frames));
  write_le<uint32_t>(out, static_cast<uint32_t>(features.feature_dim));
  out.write(reinterpret_cast<const char*>(features.values.data()),
            static_cast<std::streamsize>(features.values.size() * sizeof(float)));
  if (!out) throw IoError("feature cache write failed: " + path);
}

FeatureSequence read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MS2F", 4) != 0) {
    throw DataError("not a feature cache (bad magic): " + path);
  }
  FeatureSequence feats;
  feats.num_frames = static_cast<int>(read_le<uint32_t>(in, path, "num_frames"));
  feats.feature_dim = static_cast<int>(read_le<uint32_t>(in, path, "feature_dim"));
  feats.values.resize(static_cast<size_t>(feats.num_frames) * feats.feature_dim);
  in.read(reinterpret_cast<char*>(feats.values.data()),
          static_cast<std::streamsize>(feats.values.size() * sizeof(float)));
  if (!in) throw DataError("truncated feature cache: " + path);
  return feats;
}

}  // namespace minis2t
