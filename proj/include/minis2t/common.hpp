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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace minis2t {

// Base class for all errors thrown by the library. The CLI maps subclasses
// to exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/op shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by an op, or a diverged training run.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API precondition violated (scalar-ness, missing grad, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad configuration file or option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data (manifest rows, vocabulary files, wav headers, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Deterministic, seedable random generator. Uses a splitmix64 core so the
// stream is identical across platforms and standard library versions;
// std::uniform_real_distribution and friends are deliberately avoided
// because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi], inclusive. Requires lo <= hi.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller. No cached spare: the stream consumed per
  // call is fixed, which keeps replaying a seed trivial.
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  uint64_t state_;
};

// Mixes several values into one seed, for deriving independent
// sub-streams: hash_seed({seed, purpose_tag, step}).
uint64_t hash_seed(std::initializer_list<uint64_t> parts);

// Splits a UTF-8 string into code points (each returned as a string).
// Invalid bytes are passed through as single-byte units.
std::vector<std::string> utf8_chars(const std::string& text);

// Splits on runs of ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(const std::string& text);

// Splits on a single delimiter, keeping empty fields.
std::vector<std::string> split(const std::string& text, char delim);

std::string join(const std::vector<std::string>& parts, const std::string& sep);

// ASCII-only lowercasing; non-ASCII bytes are left untouched.
std::string lowercase_ascii(const std::string& text);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::string trim(const std::string& text);

bool starts_with(const std::string& s, const std::string& prefix);
bool ends_with(const std::string& s, const std::string& suffix);

// Reads a whole file; throws IoError if it cannot be opened.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Returns every line of the file, trailing newline stripped.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace minis2t
