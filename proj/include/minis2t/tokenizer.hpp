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
// Text side of the pipeline: vocabulary with fixed reserved indices, three
// tokenization schemes (char / word / BPE), and a regex normalizer that maps
// non-verbal variants ("( Applause )") onto canonical protected tokens.

#pragma once

#include <regex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "minis2t/common.hpp"

namespace minis2t {

// Reserved ids. Every vocabulary starts with these five.
inline constexpr int kBlankId = 0;
inline constexpr int kPadId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kBosId = 3;
inline constexpr int kEosId = 4;
inline constexpr int kNumReservedIds = 5;

// Spaces become this symbol under the char scheme.
inline constexpr const char* kSpaceSymbol = "▁";  // ▁

// Marks the last unit of each word inside BPE symbols.
inline constexpr const char* kEowMarker = "</w>";

class Vocabulary {
 public:
  Vocabulary() = default;

  int size() const { return kNumReservedIds + static_cast<int>(tokens_.size()); }

  // Unknown tokens map to kUnkId.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;

  // Appends a learned token; duplicates are rejected.
  void add(const std::string& token);

  const std::vector<std::string>& learned_tokens() const { return tokens_; }

  // One learned token per line; line number == id - kNumReservedIds.
  // Reserved entries are implicit and never stored.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Ordered merge list learned by greedy byte-pair encoding over word types.
class BpeModel {
 public:
  std::vector<std::pair<std::string, std::string>> merges;

  // Splits one word into symbols (code points, last one carrying the
  // end-of-word marker) and applies the merges in learned order, each as a
  // full greedy left-to-right pass.
  std::vector<std::string> apply_word(const std::string& word) const;

  // File format: "#version: minis2t-bpe 1" header, then one merge per line
  // as "left right".
  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);
};

// Learns `num_merges` merges from whitespace-tokenized corpus lines.
// Protected tokens are excluded from the pair statistics. Ties on pair
// frequency break toward the lexicographically smallest (left, right).
BpeModel learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges,
                   const std::vector<std::string>& protected_tokens = {});

enum class TokenScheme { kChar, kWord, kBpe };

TokenScheme token_scheme_from_string(const std::string& name);
std::string token_scheme_to_string(TokenScheme scheme);

// Splits normalized text into tokens. Protected tokens are matched as whole
// words before any further splitting, under every scheme. The char scheme
// separates words with kSpaceSymbol; BPE requires a model.
std::vector<std::string> tokenize(const std::string& text, TokenScheme scheme,
                                  const BpeModel* bpe = nullptr,
                                  const std::unordered_set<std::string>& protected_tokens = {});

// Inverse of tokenize up to whitespace normalization:
// detokenize(tokenize(t)) == t for single-spaced text of in-vocabulary
// symbols.
std::string detokenize(const std::vector<std::string>& tokens, TokenScheme scheme);

// Token <-> id plumbing. encode maps unknown tokens to kUnkId and can wrap
// the sequence in bos/eos.
std::vector<int> encode_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            bool add_bos_eos);
// Drops reserved ids and maps the rest back to token strings.
std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocabulary& vocab);

// Editable table of regex -> replacement applied before tokenization, used
// to canonicalize non-verbal markers. File format: one rule per line,
// "pattern\treplacement"; '#' lines are comments. Patterns are
// case-insensitive ECMAScript regexes.
class TextNormalizer {
 public:
  TextNormalizer() = default;
  static TextNormalizer load(const std::string& path);
  void add_rule(const std::string& pattern, const std::string& replacement);
  std::string apply(const std::string& text) const;
  size_t num_rules() const { return rules_.size(); }

 private:
  std::vector<std::pair<std::regex, std::string>> rules_;
};

// Collects the token inventory of a corpus under a scheme: unique tokens
// ordered by descending frequency (ties lexicographic), protected tokens
// force-included first.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus_lines, TokenScheme scheme,
                            const BpeModel* bpe = nullptr,
                            const std::vector<std::string>& protected_tokens = {},
                            int max_size = 0);

}  // namespace minis2t
