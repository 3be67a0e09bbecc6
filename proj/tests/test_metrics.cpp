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
#include <string>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/metrics.hpp"

using namespace minis2t;

namespace {

std::vector<std::string> chars_of(const std::string& word) {
  std::vector<std::string> out;
  for (char c : word) out.emplace_back(1, c);
  return out;
}

// Reference edit distance by exhaustive recursion; independent of the DP.
int edit_distance_slow(const std::vector<std::string>& a, const std::vector<std::string>& b,
                       size_t i = 0, size_t j = 0) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  int best = edit_distance_slow(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, edit_distance_slow(a, b, i + 1, j) + 1);
  best = std::min(best, edit_distance_slow(a, b, i, j + 1) + 1);
  return best;
}

std::vector<std::string> random_sentence(Rng& rng, int max_len, int alphabet) {
  int len = static_cast<int>(rng.uniform() * (max_len + 1));
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) {
    out.emplace_back(1, static_cast<char>('a' + static_cast<int>(rng.uniform() * alphabet)));
  }
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

}  // namespace

TEST_CASE("levenshtein on hand-checked pairs") {
  CHECK(levenshtein({"a", "b", "c"}, {"a", "b", "c"}) == 0);
  CHECK(levenshtein({}, {}) == 0);
  // kitten -> sitting: substitute k/s, substitute e/i, insert g.
  CHECK(levenshtein(chars_of("kitten"), chars_of("sitting")) == 3);
  CHECK(levenshtein(chars_of("abc"), {}) == 3);
  CHECK(levenshtein({}, chars_of("abcd")) == 4);
  CHECK(levenshtein({"x"}, {"y"}) == 1);
  CHECK(levenshtein({"a", "b"}, {"b", "a"}) == 2);
}

TEST_CASE("levenshtein agrees with brute force and is a metric") {
  Rng rng(2026);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a = random_sentence(rng, 6, 3);
    std::vector<std::string> b = random_sentence(rng, 6, 3);
    std::vector<std::string> c = random_sentence(rng, 6, 3);
    int ab = levenshtein(a, b);
    CHECK(ab == edit_distance_slow(a, b));
    CHECK(ab == levenshtein(b, a));
    CHECK(levenshtein(a, a) == 0);
    CHECK((ab == 0) == (a == b));
    CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));
  }
}

TEST_CASE("13a tokenization golden cases") {
  CHECK(tokenize_13a("Hello, world!") == std::vector<std::string>{"Hello", ",", "world", "!"});
  CHECK(tokenize_13a("3.5 cats") == std::vector<std::string>{"3.5", "cats"});
  CHECK(tokenize_13a("a.b") == std::vector<std::string>{"a", ".", "b"});
  CHECK(tokenize_13a("1,000 dogs") == std::vector<std::string>{"1,000", "dogs"});
  CHECK(tokenize_13a("10-20") == std::vector<std::string>{"10", "-", "20"});
  CHECK(tokenize_13a("well-known") == std::vector<std::string>{"well-known"});
  CHECK(tokenize_13a("a+b=c") == std::vector<std::string>{"a", "+", "b", "=", "c"});
  CHECK(tokenize_13a("(x)") == std::vector<std::string>{"(", "x", ")"});
  CHECK(tokenize_13a("don't") == std::vector<std::string>{"don't"});
  CHECK(tokenize_13a("  a   b  ") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize_13a("&quot;hi&quot; &amp; bye") ==
        std::vector<std::string>{"\"", "hi", "\"", "&", "bye"});
  CHECK(tokenize_13a("h\xc3\xa9llo.") == std::vector<std::string>{"h\xc3\xa9llo", "."});
  CHECK(tokenize_13a("end.") == std::vector<std::string>{"end", "."});
  CHECK(tokenize_13a("") == std::vector<std::string>{});
}

TEST_CASE("word normalization applies case and punctuation rules") {
  EvalConfig wer_cfg = EvalConfig::wer_default();
  CHECK(normalize_words("Hello, World!", wer_cfg) == std::vector<std::string>{"hello", "world"});
  CHECK(normalize_words("Don't stop", wer_cfg) == std::vector<std::string>{"dont", "stop"});
  // U+00C9 lowercases to U+00E9.
  CHECK(normalize_words("\xc3\x89" "COLE", wer_cfg) ==
        std::vector<std::string>{"\xc3\xa9" "cole"});
  // Ellipsis (U+2026) and guillemets (U+00AB/U+00BB) count as punctuation.
  CHECK(normalize_words("hello\xe2\x80\xa6", wer_cfg) == std::vector<std::string>{"hello"});
  CHECK(normalize_words("\xc2\xabquote\xc2\xbb", wer_cfg) == std::vector<std::string>{"quote"});

  EvalConfig bleu_cfg = EvalConfig::bleu_default();
  CHECK(normalize_words("Hello, world!", bleu_cfg) ==
        std::vector<std::string>{"Hello", ",", "world", "!"});

  EvalConfig plain{CaseRule::kLower, PunctRule::kStrip, EvalTokenizer::kNone};
  CHECK(normalize_words("Hello, world!", plain) == std::vector<std::string>{"hello", "world"});
}

TEST_CASE("wer golden values") {
  CHECK(wer({"a b c"}, {"a b c"}) == 0.0);
  // One substitution against three reference words.
  CHECK(wer({"a x c"}, {"a b c"}) == doctest::Approx(100.0 / 3.0));
  CHECK(wer({""}, {"a b"}) == 100.0);
  // Pooled over the corpus: 1 edit / 3 reference words.
  CHECK(wer({"a x", "b"}, {"a b", "b"}) == doctest::Approx(100.0 / 3.0));
  // Case and punctuation differences vanish under the recognition convention.
  CHECK(wer({"the cat sat"}, {"The cat, sat."}) == 0.0);
}

TEST_CASE("wer validates its inputs") {
  CHECK_THROWS_AS(wer({"a", "b"}, {"a"}), ContractError);
  CHECK_THROWS_AS(wer({"a"}, {"..."}), ContractError);  // reference strips to nothing
}

TEST_CASE("bleu golden values") {
  CHECK(bleu({"a b c d e"}, {"a b c d e"}) == doctest::Approx(100.0));
  // hyp "a b c d" vs ref "a b c c": clipped precisions 3/4, 2/3, 1/2 and a
  // smoothed 4-gram 1/2, brevity 1 -> 100 * (0.75 * 2/3 * 0.5 * 0.5)^(1/4).
  CHECK(bleu({"a b c d"}, {"a b c c"}) ==
        doctest::Approx(100.0 * std::pow(0.125, 0.25)).epsilon(1e-9));
  // Perfect precision but one word short: 100 * exp(1 - 5/4).
  CHECK(bleu({"a b c d"}, {"a b c d e"}) ==
        doctest::Approx(100.0 * std::exp(-0.25)).epsilon(1e-9));
  // Zero overlap everywhere: the smoothed precisions are 100/(2*5),
  // 100/(4*4), 100/(8*3), 100/(16*2).
  double expected = std::exp((std::log(10.0) + std::log(6.25) + std::log(25.0 / 6.0) +
                              std::log(3.125)) /
                             4.0);
  CHECK(bleu({"a b c d e"}, {"f g h i j"}) == doctest::Approx(expected).epsilon(1e-9));
  // A three-word corpus has no 4-grams at all; corpus BLEU is 0 by
  // convention (no effective-order fallback).
  CHECK(bleu({"a b c"}, {"a b c"}) == 0.0);
}

TEST_CASE("bleu respects the case rule") {
  // One casing mismatch: precisions 4/5, 3/4, 2/3, 1/2.
  CHECK(bleu({"A b c d e"}, {"a b c d e"}) ==
        doctest::Approx(100.0 * std::pow(0.2, 0.25)).epsilon(1e-9));
  EvalConfig lowered = EvalConfig::bleu_default();
  lowered.case_rule = CaseRule::kLower;
  CHECK(bleu({"A b c d e"}, {"a b c d e"}, lowered) == doctest::Approx(100.0));
}

TEST_CASE("bleu validates its inputs") {
  CHECK_THROWS_AS(bleu({"a"}, {"a", "b"}), ContractError);
  CHECK_THROWS_AS(bleu({"a"}, {""}), ContractError);
}

TEST_CASE("chrf golden values") {
  CHECK(chrf({"the quick brown fox"}, {"the quick brown fox"}) ==
        doctest::Approx(100.0).epsilon(1e-12));
  // hyp "ab" vs ref "abc": order 1 gives F2 = 5/7, order 2 gives 5/9, the
  // remaining orders contribute nothing -> 100 * (5/7 + 5/9) / 6 = 4000/189.
  CHECK(chrf({"ab"}, {"abc"}) == doctest::Approx(4000.0 / 189.0).epsilon(1e-9));
  CHECK(chrf({"abc"}, {"xyz"}) < 1e-10);
  // Whitespace is invisible to the character n-grams.
  CHECK(chrf({"t h e q u i c k"}, {"thequick"}) == doctest::Approx(100.0).epsilon(1e-12));
  // n-grams are over code points, not bytes: two-byte e-acute counts once.
  CHECK(chrf({"\xc3\xa9"
              "a"},
             {"\xc3\xa9"
              "b"}) == doctest::Approx(100.0 * 0.5 / 6.0).epsilon(1e-9));
}

TEST_CASE("chrf validates its inputs") {
  CHECK_THROWS_AS(chrf({"a"}, {"a", "b"}), ContractError);
  CHECK_THROWS_AS(chrf({"a"}, {"   "}), ContractError);
}

TEST_CASE("corpus duplication leaves all three metrics unchanged") {
  std::vector<std::string> hyps = {"the cat sat on the mat", "a stitch in time saves nine"};
  std::vector<std::string> refs = {"the cat sat on a mat", "a stitch in time saves wine"};
  std::vector<std::string> hyps2 = hyps;
  std::vector<std::string> refs2 = refs;
  hyps2.insert(hyps2.end(), hyps.begin(), hyps.end());
  refs2.insert(refs2.end(), refs.begin(), refs.end());
  CHECK(wer(hyps2, refs2) == doctest::Approx(wer(hyps, refs)).epsilon(1e-12));
  CHECK(bleu(hyps2, refs2) == doctest::Approx(bleu(hyps, refs)).epsilon(1e-12));
  CHECK(chrf(hyps2, refs2) == doctest::Approx(chrf(hyps, refs)).epsilon(1e-12));
}

TEST_CASE("bleu and chrf stay within range and peak only at equality") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> hyps;
    std::vector<std::string> refs;
    for (int i = 0; i < 3; ++i) {
      hyps.push_back(join(random_sentence(rng, 8, 3)));
      refs.push_back(join(random_sentence(rng, 8, 3)) + " tail");
    }
    double b = bleu(hyps, refs);
    double c = chrf(hyps, refs);
    CHECK(b >= 0.0);
    CHECK(b <= 100.0 + 1e-9);
    CHECK(c >= 0.0);
    CHECK(c <= 100.0 + 1e-9);
    if (hyps != refs) {
      CHECK(c < 100.0 - 1e-9);
    }
  }
  // Equality peaks at exactly 100 for references long enough to populate
  // every order.
  std::vector<std::string> same = {"seven words make this sentence long enough"};
  CHECK(bleu(same, same) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(chrf(same, same) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("score formatting rounds half to even at two decimals") {
  CHECK(format_score(100.0 / 3.0) == "33.33");
  CHECK(format_score(0.125) == "0.12");  // tie resolved downward to even
  CHECK(format_score(0.875) == "0.88");  // tie resolved upward to even
  CHECK(format_score(100.0) == "100.00");
  CHECK(format_score(59.4603557501) == "59.46");
  CHECK(format_score(0.0) == "0.00");
}

TEST_CASE("signatures pin down the normalization pipeline") {
  CHECK(EvalConfig::wer_default().signature("wer") ==
        "wer|case:lower|punct:strip|tok:13a|version:1.0");
  CHECK(EvalConfig::bleu_default().signature("bleu") ==
        "bleu|case:keep|punct:keep|tok:13a|smooth:exp|ngrams:1-4|version:1.0");
  CHECK(chrf_signature() == "chrf|chars:1-6|beta:2|space:removed|case:keep|version:1.0");

  EvalConfig tweaked = EvalConfig::wer_default();
  tweaked.punct_rule = PunctRule::kKeep;
  CHECK(tweaked.signature("wer") != EvalConfig::wer_default().signature("wer"));
  tweaked = EvalConfig::wer_default();
  tweaked.case_rule = CaseRule::kKeep;
  CHECK(tweaked.signature("wer") != EvalConfig::wer_default().signature("wer"));
  tweaked = EvalConfig::wer_default();
  tweaked.tokenizer = EvalTokenizer::kNone;
  CHECK(tweaked.signature("wer") != EvalConfig::wer_default().signature("wer"));
}
