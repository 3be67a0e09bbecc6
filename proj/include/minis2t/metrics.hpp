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
// Corpus-level WER, BLEU, and ChrF with an explicit, versioned normalization
// pipeline. Every score carries a signature string that pins down exactly how
// the text was prepared, so numbers from different runs are comparable only
// when their signatures match.

#pragma once

#include <string>
#include <vector>

#include "minis2t/common.hpp"

namespace minis2t {

enum class CaseRule { kLower, kKeep };
enum class PunctRule { kStrip, kKeep };
enum class EvalTokenizer { k13a, kNone };

// Version tag baked into every signature; bump on any behavior change.
inline constexpr const char* kEvalVersion = "1.0";

struct EvalConfig {
  CaseRule case_rule = CaseRule::kLower;
  PunctRule punct_rule = PunctRule::kStrip;
  EvalTokenizer tokenizer = EvalTokenizer::k13a;

  // Lowercased, punctuation-stripped words: the convention for recognition
  // scoring.
  static EvalConfig wer_default();
  // Truecased with punctuation kept as tokens: the convention for
  // translation scoring.
  static EvalConfig bleu_default();

  // e.g. "wer|case:lower|punct:strip|tok:13a|version:1.0". BLEU signatures
  // additionally carry "|smooth:exp|ngrams:1-4".
  std::string signature(const std::string& metric) const;
};

// Fixed signature of the (configuration-free) ChrF pipeline.
std::string chrf_signature();

// mteval-13a tokenization: isolates ASCII symbols, splits period and comma
// away from non-digit context, splits a dash that follows a digit, unescapes
// the four common HTML entities, and squeezes whitespace. Operates on bytes;
// multi-byte UTF-8 sequences pass through untouched.
std::vector<std::string> tokenize_13a(const std::string& line);

// Full normalization pipeline: tokenize, then apply the case rule, then the
// punctuation rule (tokens that become empty are dropped).
std::vector<std::string> normalize_words(const std::string& line, const EvalConfig& config);

// Minimal number of insertions, deletions, and substitutions (unit costs)
// turning `a` into `b`.
int levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

// 100 * sum(edit distance) / sum(reference length) over normalized word
// sequences. Throws ContractError on length mismatch or when the reference
// corpus normalizes to zero words.
double wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
           const EvalConfig& config = EvalConfig::wer_default());

// Corpus BLEU: geometric mean of clipped n-gram precisions (n = 1..4, each
// order's zero count exponentially smoothed) times the brevity penalty.
// Errors as wer.
double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
            const EvalConfig& config = EvalConfig::bleu_default());

// Corpus ChrF: character n-gram F-score, n = 1..6, beta = 2, whitespace
// removed before n-gram extraction, F averaged over all six orders.
// Errors as wer.
double chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

// Two-decimal rendering with ties rounded half-even; scores are kept at full
// precision everywhere else.
std::string format_score(double value);

}  // namespace minis2t
